#pragma once

#include "cfmm/rng.hpp"
#include "cfmm/scenario.hpp"

#include <algorithm>
#include <vector>

namespace cfmm::test {

inline ChannelSet random_channels(int B, int K, int M, int N, Rng& rng, double variance = 1.0) {
  ChannelSet ch(B, K, M, N);
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < K; ++k) {
      ch.at(b, k) = complex_normal_matrix(rng, M, N, variance);
      ch.large_scale(b, k) = variance;
    }
  return ch;
}

// UE k joins group k % G.
inline Grouping round_robin_groups(int K, int G) {
  std::vector<std::vector<int>> members(static_cast<std::size_t>(G));
  for (int k = 0; k < K; ++k) members[static_cast<std::size_t>(k % G)].push_back(k);
  return make_grouping(std::move(members), K);
}

inline double rel_err(const CMat& got, const CMat& want) {
  return (got - want).norm() / std::max(want.norm(), 1e-300);
}

inline LinkBudget noiseless(double rho_bs = 1.0, double rho_ue = 1.0) {
  LinkBudget lb;
  lb.rho_bs = rho_bs;
  lb.rho_ue = rho_ue;
  return lb;
}

inline CMat unit_columns(CMat m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) m.col(c).normalize();
  return m;
}

}  // namespace cfmm::test
