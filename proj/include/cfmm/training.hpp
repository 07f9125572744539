#pragma once

#include "cfmm/rng.hpp"
#include "cfmm/scenario.hpp"
#include "cfmm/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cfmm {

/// Orthogonal pilot families of length tau.
///
/// The Dft scheme uses columns of the tau-point DFT matrix (unit-modulus
/// entries, so every pilot symbol has unit power); Canonical uses sqrt(tau)
/// times standard basis vectors. Both satisfy |p|^2 = tau and P^H P = tau I.
/// A family that does not fit into tau symbols is reported on first use.
class PilotBook {
 public:
  PilotBook(int tau, int num_ue, int num_groups, int ue_antennas, PilotScheme scheme);

  int tau() const { return tau_; }
  int num_ue() const { return num_ue_; }
  int num_groups() const { return num_groups_; }
  int ue_antennas() const { return ue_antennas_; }
  PilotScheme scheme() const { return scheme_; }

  /// P_k, tau x N (antenna-specific uplink).
  const CMat& ue_matrix(int k) const;
  /// tau x K; column k is p_k.
  const CMat& ue_pilots() const;
  /// tau x G; column g is p_g.
  const CMat& group_pilots() const;

  CVec ue_pilot(int k) const { return ue_pilots().col(k); }
  CVec group_pilot(int g) const { return group_pilots().col(g); }

  /// Pilot-domain weight D_mu = I + sum_k (mu_k - 1) p_k p_k^H / tau.
  /// For canonical pilots this is Diag(mu_1..mu_K, 1, .., 1).
  CMat mu_weight_matrix(const RVec& mu) const;

 private:
  int tau_;
  int num_ue_;
  int num_groups_;
  int ue_antennas_;
  PilotScheme scheme_;
  std::optional<std::vector<CMat>> ue_matrix_;
  std::optional<CMat> ue_;
  std::optional<CMat> group_;
};

PilotBook make_pilot_book(int tau, int num_ue, int num_groups, int ue_antennas,
                          PilotScheme scheme = PilotScheme::Dft);

enum class Phase { UL, UL1, UL2, UL3, DL };

const char* phase_name(Phase phase);

/// What the BSs receive in one uplink phase.
struct UplinkSnapshot {
  Phase phase = Phase::UL;
  int iteration = -1;
  double beta = 0;
  std::vector<CMat> y;  // per BS, M x tau
  double max_ue_symbol_power = 0;
};

/// What the UEs receive in one downlink phase.
struct DownlinkSnapshot {
  int iteration = -1;
  std::vector<CMat> y;  // per UE, N x tau
  double max_bs_power = 0;
};

struct AntennaSpecificResult {
  UplinkSnapshot snapshot;
  std::vector<CMat> h_hat;  // index b * K + k, M x N
};

struct UeEffectiveResult {
  UplinkSnapshot snapshot;
  std::vector<CMat> h_hat;  // per BS, M x K; column k estimates H_{b,k} v_k
};

struct GroupEffectiveResult {
  UplinkSnapshot snapshot;
  std::vector<CMat> f_hat;  // per BS, M x G; column g estimates sum_{k in K_g} H_{b,k} v_k
};

struct DownlinkResult {
  DownlinkSnapshot snapshot;
  CMat g_hat;  // N x K; column k estimates sum_b H_{b,k}^H w_{b,g_k}
};

// Power scaling. Every rule returns the largest network-common beta for
// which every UE's per-symbol transmit power stays within rho_ue.
namespace power_scaling {

/// Antenna-specific uplink; rho_ue / N for unit-modulus pilots.
double antenna_specific(const PilotBook& pilots, double rho_ue);

/// UE k sends sqrt(beta) v_k q_k^H where q_k = pilot_of_ue.col(k).
/// rho_ue / max_k |v_k|^2 for unit-modulus pilots.
double precoded(const CMat& combiners, const CMat& pilot_of_ue, double rho_ue);

/// UE k echoes sqrt(beta) mu_k v_k v_k^H Y_k^DL.
double echo(const CMat& combiners, const std::vector<CMat>& y_dl, const RVec& mu, double rho_ue);

}  // namespace power_scaling

/// LS estimators. Pure functions of what a single receiver observes.
CMat estimate_antenna_specific(const CMat& y_ul, const CMat& pilot_matrix, double tau, double beta);
CVec estimate_effective_uplink(const CMat& y_ul, const CVec& pilot, double tau, double beta);
CVec estimate_effective_downlink(const CMat& y_dl, const CVec& group_pilot, double tau);

AntennaSpecificResult ul_antenna_specific(const ChannelSet& channels, const PilotBook& pilots,
                                          const LinkBudget& budget, Rng& rng);

UeEffectiveResult ul_ue_specific(const ChannelSet& channels, const CMat& combiners, const PilotBook& pilots,
                                 const LinkBudget& budget, Rng& rng);

GroupEffectiveResult ul_group_specific(const ChannelSet& channels, const CMat& combiners, const Grouping& grouping,
                                       const PilotBook& pilots, const LinkBudget& budget, Rng& rng);

/// Precoders are BM x G; column g stacks w_{1,g}..w_{B,g}.
DownlinkResult dl_effective(const ChannelSet& channels, const CMat& precoders, const Grouping& grouping,
                            const PilotBook& pilots, const LinkBudget& budget, Rng& rng);

/// UL-3: every UE re-transmits its received DL block through mu_k v_k v_k^H.
UplinkSnapshot ul_echo(const ChannelSet& channels, const CMat& combiners, const DownlinkSnapshot& dl,
                       const RVec& mu, const LinkBudget& budget, Rng& rng);

/// Diagnostic dump: {"phase", "iteration", "beta", "matrices"}; each matrix is a list of rows of [re, im] pairs.
std::string dump_json(const UplinkSnapshot& snapshot);
std::string dump_json(const DownlinkSnapshot& snapshot);

}  // namespace cfmm
