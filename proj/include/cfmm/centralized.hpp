#pragma once

#include "cfmm/metrics.hpp"
#include "cfmm/scenario.hpp"
#include "cfmm/types.hpp"

#include <functional>
#include <vector>

namespace cfmm {

/// Precoders are BM x G (column g is the aggregated w_g; rows b*M..b*M+M-1
/// are w_{b,g}); combiners are N x K.
struct BeamformerState {
  CMat precoders;
  CMat combiners;
};

/// Sum over groups of |w_{b,g}|^2 for BS b.
double bs_power(const CMat& precoders, int b, int bs_antennas);

/// Largest relative violation max_b (P_b / rho - 1), or 0 when feasible.
double worst_power_violation(const CMat& precoders, int num_bs, int bs_antennas, double rho_bs);

/// Seeded isotropic unit-norm combiners, N x K.
CMat random_unit_combiners(int ue_antennas, int num_ue, Rng& rng);

struct DualState {
  RVec nu;      // per UE, on the per-group simplex
  RVec lambda;  // per BS
  int step = 0; // subgradient steps taken so far
};

DualState make_dual_state(const Grouping& grouping, int num_bs);

/// Euclidean projection of x onto {y >= 0, sum y = 1}.
RVec project_to_simplex(const RVec& x);

/// Receive MMSE combiner from the effective DL channels eff = H_k^H W (N x G):
/// (eff eff^H + sigma^2 I)^{-1} eff_{g_k}.
CVec mmse_combiner(const CMat& effective, int own_group, double noise_ue);

/// Same, from the aggregated BM x N channel of the UE.
CVec mmse_combiner(const CMat& aggregated_channel, const CMat& precoders, int own_group, double noise_ue);

/// Quadratic part and right-hand sides of the precoder step:
/// gram = sum_k c_k a_k a_k^H, rhs.col(g) = sum_{k in K_g} c_k a_k with a_k = H_k v_k.
/// Also kept in factored form gram = factor factor^H, rhs = factor coeff.
struct PrecoderProblem {
  CMat gram;    // BM x BM
  CMat rhs;     // BM x G
  CMat factor;  // BM x K, column k is sqrt(c_k) a_k
  CMat coeff;   // K x G, sqrt(c_k) in column g_k
};

PrecoderProblem precoder_problem(const ChannelSet& channels, const CMat& combiners, const Grouping& grouping,
                                 const RVec& weights);

struct PowerDualOptions {
  int max_sweeps = 50;
  double tolerance = 1e-6;          // acceptance bound on overshoot and relative duality gap
  double target_tolerance = 1e-11;  // sweeps stop early once this is met
};

struct PowerDualResult {
  RVec lambda;
  CMat precoders;
  double lambda_floor = 0;
  double worst_violation = 0;
  int sweeps = 0;
};

/// Per-BS power duals for w_g = (gram + blockdiag(lambda_b I_M))^{-1} rhs_g.
/// Damped Newton on log P_b(lambda) = log rho over the active BSs, falling
/// back to a cyclic sweep of per-BS bisections when a step stalls.
PowerDualResult power_dual_solve(const PrecoderProblem& problem, int num_bs, int bs_antennas, double rho_bs,
                                 const RVec& lambda_init = RVec(), const PowerDualOptions& options = {});
/// Same for an explicit (gram, rhs) pair; factors gram over its numerical range.
PowerDualResult power_dual_solve(const CMat& gram, const CMat& rhs, int num_bs, int bs_antennas, double rho_bs,
                                 const RVec& lambda_init = RVec(), const PowerDualOptions& options = {});

/// Weighted sum-MSE precoders for fixed combiners.
PowerDualResult summse_precoders(const ChannelSet& channels, const CMat& combiners, const Grouping& grouping,
                                 const RVec& mu, double rho_bs, const RVec& lambda_init = RVec(),
                                 const PowerDualOptions& options = {});

struct SumGroupOptions {
  int inner_steps = 20;
  double step0 = 0.1;
  PowerDualOptions power;
};

/// Min-max (sum-group MSE) precoders: projected subgradient on nu, with the
/// power duals re-solved at every inner step. Updates duals in place.
CMat sumgroup_precoders(const ChannelSet& channels, const CMat& combiners, const Grouping& grouping,
                        DualState& duals, double rho_bs, double noise_ue, const SumGroupOptions& options = {});

enum class Objective { SumMse, SumGroupMse };

struct AlternatingOptions {
  Objective objective = Objective::SumMse;
  int iterations = 50;
  RVec mu;  // used by SumMse
  double rho_bs = 1.0;
  double noise_ue = 0.0;
  SumGroupOptions sumgroup;
  PowerDualOptions power;
};

/// Evaluates the state reached after an iteration (1-based).
using StateEvaluator = std::function<LinkStats(const BeamformerState&, int iteration)>;

struct AlternatingResult {
  BeamformerState state;
  DualState duals;
  std::vector<LinkStats> per_iteration;
  std::vector<double> half_step_sum_mse;  // after every precoder and combiner step
};

/// Alternates precoder and combiner steps on the given channels (true or
/// estimated). Each iteration is precoder step, then combiner step.
AlternatingResult alternating_optimize(const ChannelSet& channels, const Grouping& grouping,
                                       const CMat& initial_combiners, const AlternatingOptions& options,
                                       const StateEvaluator& evaluate = {});

struct LsCombiner {
  CVec v;
  bool regularized = false;
};

/// (Y Y^H)^{-1} Y p_{g_k}; falls back to a 1e-12 trace/N ridge when Y Y^H
/// is singular.
LsCombiner rx_combiner_ls(const CMat& y_dl, const CVec& group_pilot);

}  // namespace cfmm
