#include "cfmm/centralized.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace cfmm {

double bs_power(const CMat& precoders, int b, int bs_antennas) {
  return precoders.middleRows(b * bs_antennas, bs_antennas).squaredNorm();
}

double worst_power_violation(const CMat& precoders, int num_bs, int bs_antennas, double rho_bs) {
  double worst = 0;
  for (int b = 0; b < num_bs; ++b) worst = std::max(worst, bs_power(precoders, b, bs_antennas) / rho_bs - 1.0);
  return worst;
}

CMat random_unit_combiners(int ue_antennas, int num_ue, Rng& rng) {
  CMat v = complex_normal_matrix(rng, ue_antennas, num_ue, 1.0);
  for (int k = 0; k < num_ue; ++k) v.col(k).normalize();
  return v;
}

DualState make_dual_state(const Grouping& grouping, int num_bs) {
  DualState d;
  d.nu.resize(grouping.num_ue());
  for (const auto& members : grouping.members)
    for (int k : members) d.nu(k) = 1.0 / static_cast<double>(members.size());
  d.lambda = RVec::Zero(num_bs);
  return d;
}

RVec project_to_simplex(const RVec& x) {
  const Eigen::Index n = x.size();
  std::vector<double> u(x.data(), x.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0;
  double theta = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    cumsum += u[static_cast<std::size_t>(i)];
    const double t = (cumsum - 1.0) / static_cast<double>(i + 1);
    if (u[static_cast<std::size_t>(i)] - t > 0) theta = t;
  }
  return (x.array() - theta).cwiseMax(0.0).matrix();
}

CVec mmse_combiner(const CMat& effective, int own_group, double noise_ue) {
  if (!effective.allFinite() || !std::isfinite(noise_ue)) throw NumericalError("mmse_combiner: non-finite input");
  const CVec rhs = effective.col(own_group);
  if (rhs.squaredNorm() == 0.0) return CVec::Zero(effective.rows());
  CMat a = effective * effective.adjoint();
  a.diagonal().array() += noise_ue;
  Eigen::LDLT<CMat> ldlt(a);
  CVec v = ldlt.solve(rhs);
  if (ldlt.info() != Eigen::Success || !v.allFinite())
    throw NumericalError("mmse_combiner: covariance is singular (zero noise with rank-deficient channel)");
  return v;
}

CVec mmse_combiner(const CMat& aggregated_channel, const CMat& precoders, int own_group, double noise_ue) {
  return mmse_combiner(CMat(aggregated_channel.adjoint() * precoders), own_group, noise_ue);
}

PrecoderProblem precoder_problem(const ChannelSet& ch, const CMat& combiners, const Grouping& grouping,
                                 const RVec& weights) {
  const int n = ch.num_bs * ch.bs_antennas;
  PrecoderProblem p;
  p.factor.resize(n, ch.num_ue);
  p.coeff = CMat::Zero(ch.num_ue, grouping.num_groups());
  for (int k = 0; k < ch.num_ue; ++k) {
    const double s = std::sqrt(std::max(weights(k), 0.0));
    p.factor.col(k) = s * (ch.aggregated(k) * combiners.col(k));
    p.coeff(k, grouping.group_of[static_cast<std::size_t>(k)]) = s;
  }
  p.gram = p.factor * p.factor.adjoint();
  p.rhs = p.factor * p.coeff;
  return p;
}

namespace {

// Precoders and power slopes at a given lambda through the push-through
// identity (F F^H + L)^{-1} F = L^{-1/2} S (S^H S + I)^{-1} with S = L^{-1/2} F.
// The BM x BM system is rank deficient whenever K < BM; working from an SVD of
// S keeps that null space out of the per-BS powers without ever squaring the
// condition number of S, which matters when lambda sits at its floor.
struct DualEval {
  bool ok = false;
  CMat precoders;
  RVec power;
  RMat slope;  // slope(b, c) = -dP_b / d lambda_c
};

DualEval evaluate_duals(const CMat& factor, const CMat& coeff, const RVec& lambda, int M, bool with_slope) {
  const Eigen::Index B = lambda.size();
  DualEval e;
  CMat scaled = factor;
  for (Eigen::Index b = 0; b < B; ++b) scaled.middleRows(b * M, M) /= std::sqrt(lambda(b));
  if (!scaled.allFinite()) return e;
  const Eigen::BDCSVD<CMat> svd(scaled, Eigen::ComputeThinU | Eigen::ComputeFullV);
  const RVec& sv = svd.singularValues();
  const Eigen::Index K = factor.cols();
  // (S^H S + I)^{-1} = V diag(1 / (1 + s^2)) V^H, s padded with zeros to K.
  RVec damp = RVec::Ones(K);
  for (Eigen::Index i = 0; i < sv.size(); ++i) damp(i) = 1.0 / (1.0 + sv(i) * sv(i));
  const CMat& right = svd.matrixV();
  auto inner_solve = [&](const CMat& rhs) -> CMat { return right * (damp.asDiagonal() * (right.adjoint() * rhs)); };

  const RVec gain = sv.cwiseProduct(damp.head(sv.size()));
  e.precoders = svd.matrixU() * (gain.asDiagonal() * (right.leftCols(sv.size()).adjoint() * coeff));
  for (Eigen::Index b = 0; b < B; ++b) e.precoders.middleRows(b * M, M) /= std::sqrt(lambda(b));
  e.power.resize(B);
  for (Eigen::Index b = 0; b < B; ++b) e.power(b) = e.precoders.middleRows(b * M, M).squaredNorm();
  if (with_slope) {
    // [A^{-1}]_{bc} = delta_bc / lambda_b - F_b N^{-1} F_c^H / (lambda_b lambda_c)
    std::vector<CMat> z(static_cast<std::size_t>(B));
    std::vector<CMat> nz(static_cast<std::size_t>(B));
    for (Eigen::Index c = 0; c < B; ++c) {
      z[static_cast<std::size_t>(c)] = factor.middleRows(c * M, M).adjoint() * e.precoders.middleRows(c * M, M);
      nz[static_cast<std::size_t>(c)] = inner_solve(z[static_cast<std::size_t>(c)]);
    }
    e.slope.resize(B, B);
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index c = 0; c < B; ++c) {
        double v = -z[static_cast<std::size_t>(b)].conjugate().cwiseProduct(nz[static_cast<std::size_t>(c)]).sum().real() /
                   (lambda(b) * lambda(c));
        if (b == c) v += e.power(b) / lambda(b);
        e.slope(b, c) = 2.0 * v;
      }
    e.slope = (e.slope + e.slope.transpose()) / 2.0;
  }
  e.ok = e.precoders.allFinite() && (!with_slope || e.slope.allFinite());
  return e;
}

bool at_floor(double lambda, double floor) { return lambda <= floor * (1.0 + 1e-9); }

// Optimality certificate: relative budget overshoot, and the duality gap
// sum_b lambda_b (rho - P_b) relative to |C|^2, the size of the unconstrained
// objective. A feasible point with a small gap is near-optimal even when the
// individual slackness conditions are far from tight, which is the usual
// situation when every lambda is tiny and only their ratios matter. A lambda
// on the floor stands for zero and adds nothing to the gap.
double certificate(const RVec& power, const RVec& lambda, double rho, double objective_scale, double floor) {
  double overshoot = 0;
  double gap = 0;
  for (Eigen::Index b = 0; b < power.size(); ++b) {
    overshoot = std::max(overshoot, power(b) / rho - 1.0);
    if (!at_floor(lambda(b), floor)) gap += lambda(b) * std::max(0.0, rho - power(b));
  }
  return std::max(overshoot, gap / objective_scale);
}

// KKT residual in log coordinates: log(P_b / rho) above the floor, its
// positive part on it.
double merit(const RVec& power, const RVec& lambda, double rho, double floor) {
  double m = 0;
  for (Eigen::Index b = 0; b < power.size(); ++b) {
    double l = power(b) > 0 ? std::log(power(b) / rho) : -1e3;
    if (at_floor(lambda(b), floor)) l = std::max(0.0, l);
    m += l * l;
  }
  return m;
}

// Levenberg-Marquardt step on log P_b(exp u) = log rho over the BSs that are
// above the floor or over budget. Power falls roughly like lambda^-2, so these
// equations are close to linear in u = log lambda. When the unconstrained
// minimizers form an affine set (K < BM) and every lambda is small, the powers
// depend only on lambda ratios and the Jacobian is singular along the all-ones
// direction; the damping keeps the step bounded there.
bool log_newton_step(const CMat& factor, const CMat& coeff, RVec& lambda, int M, double rho, double floor) {
  const DualEval cur = evaluate_duals(factor, coeff, lambda, M, true);
  if (!cur.ok) return false;
  const double m0 = merit(cur.power, lambda, rho, floor);

  std::vector<Eigen::Index> free;
  for (Eigen::Index b = 0; b < lambda.size(); ++b)
    if (cur.power(b) > 0 && (!at_floor(lambda(b), floor) || cur.power(b) > rho)) free.push_back(b);
  if (free.empty()) return false;

  const Eigen::Index n = static_cast<Eigen::Index>(free.size());
  RMat jac(n, n);
  RVec f(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index b = free[static_cast<std::size_t>(i)];
    f(i) = std::log(cur.power(b) / rho);
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::Index c = free[static_cast<std::size_t>(j)];
      jac(i, j) = -cur.slope(b, c) * lambda(c) / cur.power(b);
    }
  }
  const RMat normal = jac.transpose() * jac;
  const RVec grad = jac.transpose() * f;
  const double level = std::max(normal.trace() / static_cast<double>(n), 1e-300);

  for (double damping = 1e-12; damping < 1e8; damping *= 10.0) {
    RMat lhs = normal;
    lhs.diagonal().array() += damping * level;
    RVec du = lhs.ldlt().solve(-grad);
    if (!du.allFinite()) continue;
    if (du.cwiseAbs().maxCoeff() > 5.0) du *= 5.0 / du.cwiseAbs().maxCoeff();
    RVec trial = lambda;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index b = free[static_cast<std::size_t>(i)];
      trial(b) = std::max(floor, lambda(b) * std::exp(du(i)));
    }
    const DualEval next = evaluate_duals(factor, coeff, trial, M, false);
    if (!next.ok) continue;
    if (merit(next.power, trial, rho, floor) < (1.0 - 1e-6) * m0) {
      lambda = trial;
      return true;
    }
  }
  return false;
}

// Fallback: one cyclic sweep, each BS bisecting its own power in log lambda_b
// with the others held fixed (power of BS b is strictly decreasing in lambda_b).
void coordinate_sweep(const CMat& factor, const CMat& coeff, RVec& lambda, int M, double rho, double floor) {
  auto power_of = [&](Eigen::Index b, double value) {
    RVec trial = lambda;
    trial(b) = value;
    const DualEval e = evaluate_duals(factor, coeff, trial, M, false);
    if (!e.ok) throw NumericalError("power_dual_solve: regularized system not positive definite");
    return e.power(b);
  };
  for (Eigen::Index b = 0; b < lambda.size(); ++b) {
    if (power_of(b, floor) <= rho) {
      lambda(b) = floor;
      continue;
    }
    double lo = std::log(floor);
    double hi = std::log(std::max(lambda(b), floor));
    while (power_of(b, std::exp(hi)) > rho) hi += std::log(10.0);
    for (int i = 0; i < 200 && hi - lo > 1e-14 * std::max(1.0, std::abs(hi)); ++i) {
      const double mid = (lo + hi) / 2;
      (power_of(b, std::exp(mid)) > rho ? lo : hi) = mid;
    }
    lambda(b) = std::exp(hi);
  }
}

// Scales every lambda by a common factor t >= 1 until the busiest BS fits.
// When only lambda ratios matter this costs almost nothing in the gap.
// Adopts the result only if it certifies below the current value; returns the
// certificate of whatever lambda holds on exit.
double restore_feasibility(const CMat& factor, const CMat& coeff, RVec& lambda, int M, double rho,
                           double objective_scale, double floor) {
  auto eval = [&](double log_t) {
    const DualEval s = evaluate_duals(factor, coeff, lambda * std::exp(log_t), M, false);
    if (!s.ok) throw NumericalError("power_dual_solve: regularized system not positive definite");
    return s;
  };
  const DualEval cur = eval(0);
  const double current = certificate(cur.power, lambda, rho, objective_scale, floor);
  if (cur.power.maxCoeff() <= rho) return current;
  double lo = 0;
  double hi = std::log(2.0);
  for (int i = 0; i < 200 && eval(hi).power.maxCoeff() > rho; ++i) hi += std::log(2.0);
  for (int i = 0; i < 100 && hi - lo > 1e-15; ++i) {
    const double mid = (lo + hi) / 2;
    (eval(mid).power.maxCoeff() > rho ? lo : hi) = mid;
  }
  const RVec scaled = lambda * std::exp(hi);
  const double v = certificate(eval(hi).power, scaled, rho, objective_scale, floor);
  if (v >= current) return current;
  lambda = scaled;
  return v;
}

// Common lambda at which the busiest BS just meets its budget; a feasible
// start on the right scale when no warm start is available.
double common_start(const CMat& factor, const CMat& coeff, int num_bs, int M, double rho, double floor) {
  auto busiest = [&](double log_l) {
    const DualEval e = evaluate_duals(factor, coeff, RVec::Constant(num_bs, std::exp(log_l)), M, false);
    if (!e.ok) throw NumericalError("power_dual_solve: regularized system not positive definite");
    return e.power.maxCoeff();
  };
  double lo = std::log(floor);
  if (busiest(lo) <= rho) return floor;
  double hi = lo;
  while (busiest(hi) > rho) hi += std::log(10.0);
  for (int i = 0; i < 100 && hi - lo > 1e-6; ++i) {
    const double mid = (lo + hi) / 2;
    (busiest(mid) > rho ? lo : hi) = mid;
  }
  return std::exp(hi);
}

}  // namespace

PowerDualResult power_dual_solve(const PrecoderProblem& problem, int num_bs, int M, double rho_bs,
                                 const RVec& lambda_init, const PowerDualOptions& options) {
  const CMat& factor = problem.factor;
  const CMat& coeff = problem.coeff;
  const Eigen::Index n = factor.rows();
  if (n != static_cast<Eigen::Index>(num_bs) * M || coeff.rows() != factor.cols())
    throw DomainError("power_dual_solve: shape mismatch");
  if (!(rho_bs > 0)) throw DomainError("power_dual_solve: rho_bs must be positive");

  PowerDualResult out;
  const double scale = factor.squaredNorm() / static_cast<double>(n);
  out.lambda_floor = std::max(1e-12 * scale, 1e-300);
  if (scale == 0.0 || coeff.squaredNorm() == 0.0) {
    out.precoders = CMat::Zero(n, coeff.cols());
    out.lambda = RVec::Constant(num_bs, out.lambda_floor);
    return out;
  }
  if (lambda_init.size() == num_bs && (lambda_init.array() > out.lambda_floor).any())
    out.lambda = lambda_init.cwiseMax(out.lambda_floor);
  else
    out.lambda = RVec::Constant(num_bs, common_start(factor, coeff, num_bs, M, rho_bs, out.lambda_floor));

  DualEval e = evaluate_duals(factor, coeff, out.lambda, M, false);
  if (!e.ok) throw NumericalError("power_dual_solve: regularized system not positive definite");
  const double objective_scale = coeff.squaredNorm();
  out.worst_violation = certificate(e.power, out.lambda, rho_bs, objective_scale, out.lambda_floor);

  for (int sweep = 1; sweep <= options.max_sweeps && out.worst_violation > options.target_tolerance; ++sweep) {
    out.sweeps = sweep;
    if (!log_newton_step(factor, coeff, out.lambda, M, rho_bs, out.lambda_floor)) {
      const double restored =
          restore_feasibility(factor, coeff, out.lambda, M, rho_bs, objective_scale, out.lambda_floor);
      if (restored <= options.target_tolerance) {
        e = evaluate_duals(factor, coeff, out.lambda, M, false);
        out.worst_violation = certificate(e.power, out.lambda, rho_bs, objective_scale, out.lambda_floor);
        break;
      }
      coordinate_sweep(factor, coeff, out.lambda, M, rho_bs, out.lambda_floor);
    }
    e = evaluate_duals(factor, coeff, out.lambda, M, false);
    if (!e.ok) throw NumericalError("power_dual_solve: regularized system not positive definite");
    out.worst_violation = certificate(e.power, out.lambda, rho_bs, objective_scale, out.lambda_floor);
  }

  if (out.worst_violation > options.target_tolerance &&
      restore_feasibility(factor, coeff, out.lambda, M, rho_bs, objective_scale, out.lambda_floor) < out.worst_violation) {
    e = evaluate_duals(factor, coeff, out.lambda, M, false);
    out.worst_violation = certificate(e.power, out.lambda, rho_bs, objective_scale, out.lambda_floor);
  }
  if (out.worst_violation > options.tolerance) {
    std::ostringstream os;
    os << "power_dual_solve: no convergence after " << out.sweeps << " sweeps, worst relative violation "
       << out.worst_violation;
    throw NumericalError(os.str());
  }
  // Remove the last few ulps of overshoot so downstream checks see a feasible point.
  out.precoders = e.precoders;
  for (int b = 0; b < num_bs; ++b)
    if (e.power(b) > rho_bs) out.precoders.middleRows(b * M, M) *= std::sqrt(rho_bs / e.power(b));
  return out;
}

PowerDualResult power_dual_solve(const CMat& gram, const CMat& rhs, int num_bs, int M, double rho_bs,
                                 const RVec& lambda_init, const PowerDualOptions& options) {
  if (gram.rows() != gram.cols() || rhs.rows() != gram.rows()) throw DomainError("power_dual_solve: shape mismatch");
  // gram = F F^H over its numerical range; rhs is projected onto that range.
  const Eigen::SelfAdjointEigenSolver<CMat> es((gram + gram.adjoint()) / 2.0);
  const RVec& ev = es.eigenvalues();
  const double top = ev.size() ? std::max(ev.maxCoeff(), 0.0) : 0.0;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev(i) > 1e-13 * top) keep.push_back(i);
  PrecoderProblem p;
  p.gram = gram;
  p.rhs = rhs;
  const CMat q = es.eigenvectors()(Eigen::all, keep);
  const RVec root = ev(keep).cwiseSqrt();
  p.factor = q * root.asDiagonal();
  p.coeff = root.cwiseInverse().asDiagonal() * (q.adjoint() * rhs);
  return power_dual_solve(p, num_bs, M, rho_bs, lambda_init, options);
}

PowerDualResult summse_precoders(const ChannelSet& channels, const CMat& combiners, const Grouping& grouping,
                                 const RVec& mu, double rho_bs, const RVec& lambda_init,
                                 const PowerDualOptions& options) {
  if (combiners.squaredNorm() == 0.0) throw DegenerateInputError("summse_precoders: all combiners are zero");
  const PrecoderProblem p = precoder_problem(channels, combiners, grouping, mu);
  return power_dual_solve(p, channels.num_bs, channels.bs_antennas, rho_bs, lambda_init, options);
}

namespace {

RVec ue_mses(const ChannelSet& ch, const CMat& precoders, const CMat& combiners, const Grouping& grouping,
             double noise_ue) {
  RVec mse(ch.num_ue);
  for (int k = 0; k < ch.num_ue; ++k)
    mse(k) = mse_from_effective(effective_downlink(ch, precoders, k), combiners.col(k),
                                grouping.group_of[static_cast<std::size_t>(k)], noise_ue);
  return mse;
}

}  // namespace

CMat sumgroup_precoders(const ChannelSet& channels, const CMat& combiners, const Grouping& grouping,
                        DualState& duals, double rho_bs, double noise_ue, const SumGroupOptions& options) {
  const int B = channels.num_bs;
  const int M = channels.bs_antennas;
  if (duals.nu.size() != channels.num_ue) duals = make_dual_state(grouping, B);

  auto solve = [&]() {
    const PrecoderProblem p = precoder_problem(channels, combiners, grouping, duals.nu);
    PowerDualResult r = power_dual_solve(p, B, M, rho_bs, duals.lambda, options.power);
    duals.lambda = r.lambda;
    return r.precoders;
  };

  for (int j = 0; j < options.inner_steps; ++j) {
    const CMat w = solve();
    const RVec mse = ue_mses(channels, w, combiners, grouping, noise_ue);
    const double step = options.step0 / std::sqrt(static_cast<double>(++duals.step));
    for (const auto& members : grouping.members) {
      double worst = -std::numeric_limits<double>::infinity();
      for (int k : members) worst = std::max(worst, mse(k));
      RVec x(static_cast<Eigen::Index>(members.size()));
      for (std::size_t i = 0; i < members.size(); ++i)
        x(static_cast<Eigen::Index>(i)) = duals.nu(members[i]) + step * (mse(members[i]) - worst);
      const RVec y = project_to_simplex(x);
      for (std::size_t i = 0; i < members.size(); ++i) duals.nu(members[i]) = y(static_cast<Eigen::Index>(i));
    }
  }
  return solve();
}

AlternatingResult alternating_optimize(const ChannelSet& channels, const Grouping& grouping,
                                       const CMat& initial_combiners, const AlternatingOptions& options,
                                       const StateEvaluator& evaluate) {
  const int K = channels.num_ue;
  const RVec mu = options.mu.size() == K ? options.mu : RVec::Ones(K);

  AlternatingResult res;
  res.state.combiners = initial_combiners;
  res.duals = make_dual_state(grouping, channels.num_bs);

  auto sum_mse = [&](const BeamformerState& s) {
    return mu.dot(ue_mses(channels, s.precoders, s.combiners, grouping, options.noise_ue));
  };

  for (int it = 1; it <= options.iterations; ++it) {
    if (res.state.combiners.squaredNorm() == 0.0) {
      // Nothing to serve (e.g. all-zero channels): keep silent precoders.
      res.state.precoders = CMat::Zero(channels.num_bs * channels.bs_antennas, grouping.num_groups());
    } else if (options.objective == Objective::SumMse) {
      const PowerDualResult r = summse_precoders(channels, res.state.combiners, grouping, mu, options.rho_bs,
                                                 res.duals.lambda, options.power);
      res.duals.lambda = r.lambda;
      res.state.precoders = r.precoders;
    } else {
      res.state.precoders = sumgroup_precoders(channels, res.state.combiners, grouping, res.duals, options.rho_bs,
                                               options.noise_ue, options.sumgroup);
    }
    res.half_step_sum_mse.push_back(sum_mse(res.state));

    for (int k = 0; k < K; ++k)
      res.state.combiners.col(k) = mmse_combiner(effective_downlink(channels, res.state.precoders, k),
                                                 grouping.group_of[static_cast<std::size_t>(k)], options.noise_ue);
    res.half_step_sum_mse.push_back(sum_mse(res.state));

    if (evaluate) res.per_iteration.push_back(evaluate(res.state, it));
  }
  return res;
}

LsCombiner rx_combiner_ls(const CMat& y_dl, const CVec& group_pilot) {
  const CMat gram = y_dl * y_dl.adjoint();
  const CVec rhs = y_dl * group_pilot;
  LsCombiner out;
  Eigen::LLT<CMat> llt(gram);
  if (llt.info() == Eigen::Success) {
    out.v = llt.solve(rhs);
    if (out.v.allFinite()) return out;
  }
  const double n = static_cast<double>(gram.rows());
  const double ridge = std::max(1e-12 * gram.trace().real() / n, 1e-300);
  CMat reg = gram;
  reg.diagonal().array() += ridge;
  out.v = reg.ldlt().solve(rhs);
  out.regularized = true;
  return out;
}

}  // namespace cfmm
