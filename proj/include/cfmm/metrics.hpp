#pragma once

#include "cfmm/scenario.hpp"
#include "cfmm/types.hpp"

namespace cfmm {

/// Per-UE and network-level figures for one (precoders, combiners) pair.
struct LinkStats {
  RVec mse;             // per UE
  RVec sinr;            // per UE, linear
  RVec group_min_rate;  // per group, bps/Hz
  RVec group_min_sinr;  // per group, linear
  double sum_group_rate = 0;
  double sum_mse = 0;  // sum_k mu_k MSE_k
  double sum_group_mse = 0;
};

/// H_k^H W, N x G: column g is the effective DL channel of group g at UE k.
CMat effective_downlink(const ChannelSet& channels, const CMat& precoders, int k);

/// MSE_k = sum_g |v^H e_g|^2 - 2 Re(v^H e_{g_k}) + sigma^2 |v|^2 + 1 with e_g = H_k^H w_g.
double mse_from_effective(const CMat& eff, const CVec& v, int own_group, double noise_ue);

/// SINR_k; a zero combiner yields 0.
double sinr_from_effective(const CMat& eff, const CVec& v, int own_group, double noise_ue);

double mse_ue(const ChannelSet& channels, const CMat& precoders, const CVec& v, int k, const Grouping& grouping,
              double noise_ue);

double sinr_ue(const ChannelSet& channels, const CMat& precoders, const CVec& v, int k, const Grouping& grouping,
               double noise_ue);

/// sum_g min_{k in K_g} log2(1 + SINR_k).
double sum_group_rate(const RVec& sinr, const Grouping& grouping);

/// (1 - i r_ce / r_tot) R, clamped at zero once the training overhead
/// fills the resource block.
double effective_rate(double rate, int iteration, int r_ce, int r_tot);

LinkStats link_stats(const ChannelSet& channels, const CMat& precoders, const CMat& combiners,
                     const Grouping& grouping, double noise_ue, const RVec& mu);

}  // namespace cfmm
