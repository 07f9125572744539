#include "cfmm/training.hpp"

#include "cfmm/kernels.hpp"

#include <json.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

namespace cfmm {

namespace {

// Tolerance on the per-symbol power audits.
constexpr double kPowerSlack = 1e-9;

CMat pilot_columns(int tau, int count, PilotScheme scheme) {
  CMat p = CMat::Zero(tau, count);
  const double sqrt_tau = std::sqrt(static_cast<double>(tau));
  for (int j = 0; j < count; ++j) {
    if (scheme == PilotScheme::Canonical) {
      p(j, j) = sqrt_tau;
    } else {
      for (int t = 0; t < tau; ++t) {
        const double phase = -2.0 * std::numbers::pi * static_cast<double>(t) * j / tau;
        p(t, j) = std::polar(1.0, phase);
      }
    }
  }
  return p;
}

[[noreturn]] void insufficient(const char* family, int tau, int needed) {
  std::ostringstream os;
  os << "insufficient pilot length for " << family << " pilots: tau=" << tau << " < " << needed;
  throw ConfigError(os.str());
}

void audit_ue_power(double max_power, double rho_ue, const char* phase) {
  if (max_power > rho_ue * (1.0 + kPowerSlack)) {
    std::ostringstream os;
    os << phase << ": UE per-symbol power " << max_power << " exceeds rho_ue " << rho_ue;
    throw ContractError(os.str());
  }
}

}  // namespace

PilotBook::PilotBook(int tau, int num_ue, int num_groups, int ue_antennas, PilotScheme scheme)
    : tau_(tau), num_ue_(num_ue), num_groups_(num_groups), ue_antennas_(ue_antennas), scheme_(scheme) {
  if (tau <= 0) throw ConfigError("pilot length must be positive");
  if (tau >= num_ue * ue_antennas) {
    const CMat all = pilot_columns(tau, num_ue * ue_antennas, scheme);
    std::vector<CMat> per_ue;
    per_ue.reserve(static_cast<std::size_t>(num_ue));
    for (int k = 0; k < num_ue; ++k) per_ue.push_back(all.middleCols(k * ue_antennas, ue_antennas));
    ue_matrix_ = std::move(per_ue);
  }
  if (tau >= num_ue) ue_ = pilot_columns(tau, num_ue, scheme);
  if (tau >= num_groups) group_ = pilot_columns(tau, num_groups, scheme);
}

const CMat& PilotBook::ue_matrix(int k) const {
  if (!ue_matrix_) insufficient("antenna-specific uplink", tau_, num_ue_ * ue_antennas_);
  return (*ue_matrix_)[static_cast<std::size_t>(k)];
}

const CMat& PilotBook::ue_pilots() const {
  if (!ue_) insufficient("UE-specific uplink", tau_, num_ue_);
  return *ue_;
}

const CMat& PilotBook::group_pilots() const {
  if (!group_) insufficient("group-specific", tau_, num_groups_);
  return *group_;
}

CMat PilotBook::mu_weight_matrix(const RVec& mu) const {
  const CMat& p = ue_pilots();
  CMat d = CMat::Identity(tau_, tau_);
  for (int k = 0; k < num_ue_; ++k) d += ((mu(k) - 1.0) / tau_) * p.col(k) * p.col(k).adjoint();
  return d;
}

PilotBook make_pilot_book(int tau, int num_ue, int num_groups, int ue_antennas, PilotScheme scheme) {
  return PilotBook(tau, num_ue, num_groups, ue_antennas, scheme);
}

const char* phase_name(Phase phase) {
  switch (phase) {
    case Phase::UL: return "UL";
    case Phase::UL1: return "UL-1";
    case Phase::UL2: return "UL-2";
    case Phase::UL3: return "UL-3";
    case Phase::DL: return "DL";
  }
  return "?";
}

namespace power_scaling {

double antenna_specific(const PilotBook& pilots, double rho_ue) {
  double worst = 0;
  for (int k = 0; k < pilots.num_ue(); ++k)
    worst = std::max(worst, pilots.ue_matrix(k).rowwise().squaredNorm().maxCoeff());
  if (worst <= 0) throw DegenerateInputError("antenna-specific pilots are all zero");
  return rho_ue / worst;
}

double precoded(const CMat& combiners, const CMat& pilot_of_ue, double rho_ue) {
  double worst = 0;
  for (Eigen::Index k = 0; k < combiners.cols(); ++k) {
    const double peak = pilot_of_ue.col(k).cwiseAbs2().maxCoeff();
    worst = std::max(worst, combiners.col(k).squaredNorm() * peak);
  }
  if (!(worst > 0) || !std::isfinite(worst))
    throw DegenerateInputError("precoded uplink pilots: all combiners are zero (or non-finite)");
  return rho_ue / worst;
}

double echo(const CMat& combiners, const std::vector<CMat>& y_dl, const RVec& mu, double rho_ue) {
  double worst = 0;
  for (Eigen::Index k = 0; k < combiners.cols(); ++k) {
    const CVec v = combiners.col(k);
    const CMat payload = mu(k) * v * (v.adjoint() * y_dl[static_cast<std::size_t>(k)]);
    worst = std::max(worst, kernels::max_column_power(payload));
  }
  if (!(worst > 0) || !std::isfinite(worst)) throw DegenerateInputError("UL-3 echo: every UE payload is zero");
  return rho_ue / worst;
}

}  // namespace power_scaling

CMat estimate_antenna_specific(const CMat& y_ul, const CMat& pilot_matrix, double tau, double beta) {
  return kernels::ls_correlate(y_ul, pilot_matrix, tau, std::sqrt(beta));
}

CVec estimate_effective_uplink(const CMat& y_ul, const CVec& pilot, double tau, double beta) {
  return kernels::ls_correlate(y_ul, pilot, tau, std::sqrt(beta));
}

CVec estimate_effective_downlink(const CMat& y_dl, const CVec& group_pilot, double tau) {
  return kernels::ls_correlate(y_dl, group_pilot, tau, 1.0);
}

namespace {

// Y_b = sum_k H_{b,k} X_k + Z_b for every BS; noise drawn BS by BS.
std::vector<CMat> receive_uplink(const ChannelSet& ch, const std::vector<CMat>& x, int tau, double noise_bs,
                                 Rng& rng) {
  std::vector<CMat> y;
  y.reserve(static_cast<std::size_t>(ch.num_bs));
  for (int b = 0; b < ch.num_bs; ++b) {
    CMat yb = complex_normal_matrix(rng, ch.bs_antennas, tau, noise_bs);
    for (int k = 0; k < ch.num_ue; ++k) yb.noalias() += ch.at(b, k) * x[static_cast<std::size_t>(k)];
    y.push_back(std::move(yb));
  }
  return y;
}

double max_power(const std::vector<CMat>& x) {
  double m = 0;
  for (const auto& xk : x) m = std::max(m, kernels::max_column_power(xk));
  return m;
}

// UE k sends sqrt(beta) v_k q_k^H.
UplinkSnapshot precoded_uplink(Phase phase, const ChannelSet& ch, const CMat& combiners, const CMat& pilot_of_ue,
                               int tau, const LinkBudget& budget, Rng& rng) {
  if (!combiners.allFinite()) throw DegenerateInputError("combiners must be finite");
  UplinkSnapshot snap;
  snap.phase = phase;
  snap.beta = power_scaling::precoded(combiners, pilot_of_ue, budget.rho_ue);
  const double sb = std::sqrt(snap.beta);
  std::vector<CMat> x;
  x.reserve(static_cast<std::size_t>(ch.num_ue));
  for (int k = 0; k < ch.num_ue; ++k) x.push_back(sb * combiners.col(k) * pilot_of_ue.col(k).adjoint());
  snap.max_ue_symbol_power = max_power(x);
  audit_ue_power(snap.max_ue_symbol_power, budget.rho_ue, phase_name(phase));
  snap.y = receive_uplink(ch, x, tau, budget.noise_bs, rng);
  return snap;
}

}  // namespace

AntennaSpecificResult ul_antenna_specific(const ChannelSet& channels, const PilotBook& pilots,
                                          const LinkBudget& budget, Rng& rng) {
  AntennaSpecificResult out;
  auto& snap = out.snapshot;
  snap.phase = Phase::UL;
  snap.beta = power_scaling::antenna_specific(pilots, budget.rho_ue);
  const double sb = std::sqrt(snap.beta);
  std::vector<CMat> x;
  for (int k = 0; k < channels.num_ue; ++k) x.push_back(sb * pilots.ue_matrix(k).adjoint());
  snap.max_ue_symbol_power = max_power(x);
  audit_ue_power(snap.max_ue_symbol_power, budget.rho_ue, "UL");
  snap.y = receive_uplink(channels, x, pilots.tau(), budget.noise_bs, rng);

  out.h_hat.reserve(channels.h.size());
  for (int b = 0; b < channels.num_bs; ++b)
    for (int k = 0; k < channels.num_ue; ++k)
      out.h_hat.push_back(
          estimate_antenna_specific(snap.y[static_cast<std::size_t>(b)], pilots.ue_matrix(k), pilots.tau(), snap.beta));
  return out;
}

UeEffectiveResult ul_ue_specific(const ChannelSet& channels, const CMat& combiners, const PilotBook& pilots,
                                 const LinkBudget& budget, Rng& rng) {
  const CMat& p = pilots.ue_pilots();
  UeEffectiveResult out;
  out.snapshot = precoded_uplink(Phase::UL1, channels, combiners, p, pilots.tau(), budget, rng);
  const double scale = 1.0 / (pilots.tau() * std::sqrt(out.snapshot.beta));
  for (const auto& yb : out.snapshot.y) out.h_hat.push_back(scale * yb * p);
  return out;
}

GroupEffectiveResult ul_group_specific(const ChannelSet& channels, const CMat& combiners, const Grouping& grouping,
                                       const PilotBook& pilots, const LinkBudget& budget, Rng& rng) {
  const CMat& pg = pilots.group_pilots();
  CMat pilot_of_ue(pilots.tau(), channels.num_ue);
  for (int k = 0; k < channels.num_ue; ++k) pilot_of_ue.col(k) = pg.col(grouping.group_of[static_cast<std::size_t>(k)]);

  GroupEffectiveResult out;
  out.snapshot = precoded_uplink(Phase::UL2, channels, combiners, pilot_of_ue, pilots.tau(), budget, rng);
  const double scale = 1.0 / (pilots.tau() * std::sqrt(out.snapshot.beta));
  for (const auto& yb : out.snapshot.y) out.f_hat.push_back(scale * yb * pg);
  return out;
}

DownlinkResult dl_effective(const ChannelSet& channels, const CMat& precoders, const Grouping& grouping,
                            const PilotBook& pilots, const LinkBudget& budget, Rng& rng) {
  const int M = channels.bs_antennas;
  const int tau = pilots.tau();
  const CMat& pg = pilots.group_pilots();

  DownlinkResult out;
  auto& snap = out.snapshot;
  std::vector<CMat> x;
  x.reserve(static_cast<std::size_t>(channels.num_bs));
  for (int b = 0; b < channels.num_bs; ++b) {
    const auto wb = precoders.middleRows(b * M, M);
    const double p = wb.squaredNorm();
    snap.max_bs_power = std::max(snap.max_bs_power, p);
    if (p > budget.rho_bs * (1.0 + kPowerSlack)) {
      std::ostringstream os;
      os << "DL: BS " << b << " precoder power " << p << " exceeds rho_bs " << budget.rho_bs;
      throw ContractError(os.str());
    }
    x.push_back(wb * pg.adjoint());
  }

  out.g_hat.resize(channels.ue_antennas, channels.num_ue);
  for (int k = 0; k < channels.num_ue; ++k) {
    CMat yk = complex_normal_matrix(rng, channels.ue_antennas, tau, budget.noise_ue);
    for (int b = 0; b < channels.num_bs; ++b) yk.noalias() += channels.at(b, k).adjoint() * x[static_cast<std::size_t>(b)];
    out.g_hat.col(k) = estimate_effective_downlink(yk, pg.col(grouping.group_of[static_cast<std::size_t>(k)]), tau);
    snap.y.push_back(std::move(yk));
  }
  return out;
}

UplinkSnapshot ul_echo(const ChannelSet& channels, const CMat& combiners, const DownlinkSnapshot& dl, const RVec& mu,
                       const LinkBudget& budget, Rng& rng) {
  if (static_cast<int>(dl.y.size()) != channels.num_ue)
    throw SequencingError("UL-3 echo needs the DL snapshot of every UE from the preceding DL phase");
  const int tau = static_cast<int>(dl.y.front().cols());

  UplinkSnapshot snap;
  snap.phase = Phase::UL3;
  snap.iteration = dl.iteration;
  snap.beta = power_scaling::echo(combiners, dl.y, mu, budget.rho_ue);
  const double sb = std::sqrt(snap.beta);
  std::vector<CMat> x;
  x.reserve(static_cast<std::size_t>(channels.num_ue));
  for (int k = 0; k < channels.num_ue; ++k) {
    const CVec v = combiners.col(k);
    x.push_back((sb * mu(k)) * v * (v.adjoint() * dl.y[static_cast<std::size_t>(k)]));
  }
  snap.max_ue_symbol_power = max_power(x);
  audit_ue_power(snap.max_ue_symbol_power, budget.rho_ue, "UL-3");
  snap.y = receive_uplink(channels, x, tau, budget.noise_bs, rng);
  return snap;
}

namespace {

nlohmann::json matrices_json(const std::vector<CMat>& ms) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& m : ms) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
      rows.push_back(std::move(row));
    }
    arr.push_back(std::move(rows));
  }
  return arr;
}

}  // namespace

std::string dump_json(const UplinkSnapshot& s) {
  nlohmann::ordered_json j;
  j["phase"] = phase_name(s.phase);
  j["iteration"] = s.iteration;
  j["beta"] = s.beta;
  j["matrices"] = matrices_json(s.y);
  return j.dump();
}

std::string dump_json(const DownlinkSnapshot& s) {
  nlohmann::ordered_json j;
  j["phase"] = phase_name(Phase::DL);
  j["iteration"] = s.iteration;
  j["matrices"] = matrices_json(s.y);
  return j.dump();
}

}  // namespace cfmm
