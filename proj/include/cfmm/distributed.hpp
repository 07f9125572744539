#pragma once

#include "cfmm/centralized.hpp"
#include "cfmm/metrics.hpp"
#include "cfmm/rng.hpp"
#include "cfmm/scenario.hpp"
#include "cfmm/training.hpp"

#include <vector>

namespace cfmm {

// ---------------------------------------------------------------------------
// Perfect-CSI forms. These read channels of every BS and serve as oracles for
// the over-the-air versions below.
// ---------------------------------------------------------------------------

/// Stationary point of the sum-MSE Lagrangian in w_{b,.} with the other BSs'
/// precoders fixed (the cross terms they would send over backhaul). M x G.
CMat exact_local_precoder(const ChannelSet& channels, const CMat& combiners, const RVec& mu, const Grouping& grouping,
                          int b, double lambda_b, const CMat& precoders);

/// Increment towards exact_local_precoder when every cross term, including the
/// own one, is one iteration old. M x G.
CMat best_response_target(const ChannelSet& channels, const CMat& combiners, const RVec& mu,
                          const Grouping& grouping, int b, double lambda_b, const CMat& previous);

/// previous + alpha * target. alpha must lie in (0, 1].
CMat damped_update(const CMat& previous, const CMat& target, double alpha);

/// Scales a BS's precoders onto sum_g |w_{b,g}|^2 <= rho when violated.
CMat project_power(const CMat& bs_precoders, double rho_bs);

// ---------------------------------------------------------------------------
// Over-the-air forms: functions of one BS's received training only.
// ---------------------------------------------------------------------------

struct LocalPrecoder {
  CMat w;               // M x G
  double lambda = 0;    // power dual actually used
  bool ridge = false;   // regularized matrix needed lifting to stay positive definite
};

/// w_dis: increment computed from Y^UL-1 and Y^UL-3 for a given lambda_b.
LocalPrecoder local_precoder_br(const CMat& y_ul1, const CMat& y_ul3, double beta_ul1, double beta_ul3,
                                double lambda_b, double noise_bs, const PilotBook& pilots, const Grouping& grouping,
                                const RVec& mu, const CMat& previous);

/// w_dis-gs: increment computed from Y^UL-2 and Y^UL-3 (mu_k = 1).
LocalPrecoder local_precoder_gs(const CMat& y_ul2, const CMat& y_ul3, double beta_ul2, double beta_ul3,
                                double lambda_b, double noise_bs, const PilotBook& pilots, const CMat& previous);

/// Local MMSE baseline from Y^UL-1 alone (no echo term, no memory).
LocalPrecoder local_precoder_mmse(const CMat& y_ul1, double beta_ul1, double lambda_b, double noise_bs,
                                  const PilotBook& pilots, const Grouping& grouping, const RVec& mu);

/// Same three precoders with lambda_b chosen by local bisection so that the
/// undamped result meets the BS power budget.
LocalPrecoder solve_local_br(const CMat& y_ul1, const CMat& y_ul3, double beta_ul1, double beta_ul3, double noise_bs,
                             const PilotBook& pilots, const Grouping& grouping, const RVec& mu,
                             const CMat& previous, double rho_bs);
LocalPrecoder solve_local_gs(const CMat& y_ul2, const CMat& y_ul3, double beta_ul2, double beta_ul3, double noise_bs,
                             const PilotBook& pilots, const CMat& previous, double rho_bs);
LocalPrecoder solve_local_mmse(const CMat& y_ul1, double beta_ul1, double noise_bs, const PilotBook& pilots,
                               const Grouping& grouping, const RVec& mu, double rho_bs);

/// Same bisection for the perfect-CSI target: lambda_b such that
/// previous + best_response_target meets the BS budget.
double solve_exact_lambda(const ChannelSet& channels, const CMat& combiners, const RVec& mu, const Grouping& grouping,
                          int b, const CMat& previous, double rho_bs);

// ---------------------------------------------------------------------------
// Bi-directional training loop.
// ---------------------------------------------------------------------------

enum class Variant { BestResponse, GroupSpecific, LocalMmse };

const char* variant_name(Variant v);

/// Pilot symbols per bi-directional iteration: K+2G, 3G, K+G.
int training_overhead(Variant v, int num_ue, int num_groups);

/// Minimum orthogonal uplink pilot budget per iteration: K+G, 2G, K.
int min_pilot_length(Variant v, int num_ue, int num_groups);

/// One BS. It only ever sees its own received training blocks, the
/// network-common beta scalars, and public pilot/group bookkeeping.
class BaseStationAgent {
 public:
  BaseStationAgent(int index, Variant variant, const PilotBook& pilots, const Grouping& grouping, RVec mu,
                   double noise_bs, double rho_bs, double alpha, CMat initial_precoders);

  void receive_uplink(const CMat& y, double beta);
  void receive_echo(const CMat& y, double beta);

  /// Computes and applies this iteration's precoders; clears the inbox.
  const CMat& update();

  const CMat& precoders() const { return precoders_; }
  double lambda() const { return lambda_; }
  int index() const { return index_; }
  int uplink_reads() const { return uplink_reads_; }
  int echo_reads() const { return echo_reads_; }
  int ridge_count() const { return ridge_count_; }

 private:
  int index_;
  Variant variant_;
  const PilotBook* pilots_;
  const Grouping* grouping_;
  RVec mu_;
  double noise_bs_;
  double rho_bs_;
  double alpha_;
  CMat precoders_;
  double lambda_ = 0;

  CMat y_uplink_;
  double beta_uplink_ = 0;
  CMat y_echo_;
  double beta_echo_ = 0;
  bool have_uplink_ = false;
  bool have_echo_ = false;

  int uplink_reads_ = 0;
  int echo_reads_ = 0;
  int ridge_count_ = 0;
};

struct BidirectionalOptions {
  Variant variant = Variant::BestResponse;
  int iterations = 50;
  double alpha = 0.5;
  RVec mu;
  LinkBudget budget;
  int tau = 0;
  PilotScheme pilot_scheme = PilotScheme::Dft;
  int r_tot = 1000;
};

struct BidirectionalResult {
  BeamformerState state;
  std::vector<LinkStats> per_iteration;
  std::vector<double> effective_rate;
  std::vector<int> uplink_reads;  // per BS
  std::vector<int> echo_reads;    // per BS
  int ridge_count = 0;            // local ridge fallbacks plus LS combiner fallbacks
};

/// Best-response loop: UL-1 (or UL-2), UL-3 (not for local MMSE), per-BS
/// update with damping, DL, LS combiners. Iteration i echoes the DL block of
/// iteration i-1; iteration 0 is a DL broadcast of the initial precoders.
/// Noise of phase p at iteration i comes from noise_seeds.stream({i, p}).
BidirectionalResult run_bidirectional(const ChannelSet& channels, const Grouping& grouping,
                                      const CMat& initial_combiners, const CMat& initial_precoders,
                                      const BidirectionalOptions& options, const SeedTree& noise_seeds);

/// Each BS draws Gaussian precoders scaled to exactly rho_bs.
CMat random_feasible_precoders(int num_bs, int bs_antennas, int num_groups, double rho_bs, Rng& rng);

}  // namespace cfmm
