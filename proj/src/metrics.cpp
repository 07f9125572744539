#include "cfmm/metrics.hpp"

#include <cmath>
#include <limits>

namespace cfmm {

CMat effective_downlink(const ChannelSet& ch, const CMat& precoders, int k) {
  const int M = ch.bs_antennas;
  CMat eff = CMat::Zero(ch.ue_antennas, precoders.cols());
  for (int b = 0; b < ch.num_bs; ++b) eff.noalias() += ch.at(b, k).adjoint() * precoders.middleRows(b * M, M);
  return eff;
}

double mse_from_effective(const CMat& eff, const CVec& v, int own_group, double noise_ue) {
  const Eigen::RowVectorXcd proj = v.adjoint() * eff;
  return proj.squaredNorm() - 2.0 * proj(own_group).real() + noise_ue * v.squaredNorm() + 1.0;
}

double sinr_from_effective(const CMat& eff, const CVec& v, int own_group, double noise_ue) {
  const Eigen::RowVectorXcd proj = v.adjoint() * eff;
  const double signal = std::norm(proj(own_group));
  const double total = proj.squaredNorm();
  const double denom = total - signal + noise_ue * v.squaredNorm();
  if (signal == 0.0) return 0.0;
  if (denom <= 0.0) return std::numeric_limits<double>::infinity();
  return signal / denom;
}

double mse_ue(const ChannelSet& channels, const CMat& precoders, const CVec& v, int k, const Grouping& grouping,
              double noise_ue) {
  return mse_from_effective(effective_downlink(channels, precoders, k), v,
                            grouping.group_of[static_cast<std::size_t>(k)], noise_ue);
}

double sinr_ue(const ChannelSet& channels, const CMat& precoders, const CVec& v, int k, const Grouping& grouping,
               double noise_ue) {
  return sinr_from_effective(effective_downlink(channels, precoders, k), v,
                             grouping.group_of[static_cast<std::size_t>(k)], noise_ue);
}

double sum_group_rate(const RVec& sinr, const Grouping& grouping) {
  double r = 0;
  for (const auto& members : grouping.members) {
    double worst = std::numeric_limits<double>::infinity();
    for (int k : members) worst = std::min(worst, std::log2(1.0 + sinr(k)));
    if (!members.empty()) r += worst;
  }
  return r;
}

double effective_rate(double rate, int iteration, int r_ce, int r_tot) {
  if (iteration < 0 || r_ce < 0 || r_tot <= 0 || rate < 0) throw DomainError("effective_rate: negative input");
  const double used = static_cast<double>(iteration) * r_ce;
  if (used >= r_tot) return 0.0;
  return (1.0 - used / r_tot) * rate;
}

LinkStats link_stats(const ChannelSet& channels, const CMat& precoders, const CMat& combiners,
                     const Grouping& grouping, double noise_ue, const RVec& mu) {
  const int K = channels.num_ue;
  const int G = grouping.num_groups();
  LinkStats s;
  s.mse.resize(K);
  s.sinr.resize(K);
  for (int k = 0; k < K; ++k) {
    const CMat eff = effective_downlink(channels, precoders, k);
    const int g = grouping.group_of[static_cast<std::size_t>(k)];
    const CVec v = combiners.col(k);
    s.mse(k) = mse_from_effective(eff, v, g, noise_ue);
    s.sinr(k) = sinr_from_effective(eff, v, g, noise_ue);
  }
  s.group_min_rate.resize(G);
  s.group_min_sinr.resize(G);
  for (int g = 0; g < G; ++g) {
    double worst = std::numeric_limits<double>::infinity();
    double worst_mse = -std::numeric_limits<double>::infinity();
    for (int k : grouping.members[static_cast<std::size_t>(g)]) {
      worst = std::min(worst, s.sinr(k));
      worst_mse = std::max(worst_mse, s.mse(k));
    }
    s.group_min_sinr(g) = worst;
    s.group_min_rate(g) = std::log2(1.0 + worst);
    s.sum_group_mse += worst_mse;
  }
  s.sum_group_rate = s.group_min_rate.sum();
  s.sum_mse = mu.dot(s.mse);
  return s;
}

}  // namespace cfmm
