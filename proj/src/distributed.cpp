#include "cfmm/distributed.hpp"

#include "cfmm/kernels.hpp"

#include <cmath>
#include <sstream>

namespace cfmm {

namespace {

// h_{b,k} = H_{b,k} v_k for every k, M x K.
CMat effective_uplink(const ChannelSet& ch, const CMat& combiners, int b) {
  CMat h(ch.bs_antennas, ch.num_ue);
  for (int k = 0; k < ch.num_ue; ++k) h.col(k) = ch.at(b, k) * combiners.col(k);
  return h;
}

// sum_{b' in set} h_{b',k}^H w_{b',g}, K x G.
CMat cross_products(const ChannelSet& ch, const CMat& combiners, const CMat& precoders, int skip_bs) {
  const int M = ch.bs_antennas;
  CMat s = CMat::Zero(ch.num_ue, precoders.cols());
  for (int bb = 0; bb < ch.num_bs; ++bb) {
    if (bb == skip_bs) continue;
    const CMat h = effective_uplink(ch, combiners, bb);
    s.noalias() += h.adjoint() * precoders.middleRows(bb * M, M);
  }
  return s;
}

CMat own_group_terms(const CMat& h, const RVec& mu, const Grouping& grouping) {
  CMat own = CMat::Zero(h.rows(), grouping.num_groups());
  for (int k = 0; k < h.cols(); ++k) own.col(grouping.group_of[static_cast<std::size_t>(k)]) += mu(k) * h.col(k);
  return own;
}

CMat weighted_gram(const CMat& h, const RVec& mu) { return h * mu.asDiagonal() * h.adjoint(); }

double relative_floor(const CMat& gram) {
  const double scale = gram.trace().real() / static_cast<double>(std::max<Eigen::Index>(gram.rows(), 1));
  return std::max(1e-12 * std::abs(scale), 1e-300);
}

// The pieces of the local precoder formulas at one BS:
//   w(lambda) = (gram + kappa lambda I)^{-1} (own - echo - kappa lambda prev).
struct LocalSystem {
  CMat gram;  // Y D Y^H - tau sigma^2 I
  CMat own;   // M x G
  CMat echo;  // M x G, zero for local MMSE
  double kappa = 1;
  double floor_shift = 0;  // minimum kappa * lambda
};

LocalSystem br_system(const CMat& y1, const CMat* y3, double beta1, double beta3, double noise_bs,
                      const PilotBook& pilots, const Grouping& grouping, const RVec& mu) {
  const int tau = pilots.tau();
  const CMat& p = pilots.ue_pilots();
  LocalSystem s;
  const CMat raw = y1 * pilots.mu_weight_matrix(mu) * y1.adjoint();
  s.floor_shift = relative_floor(raw);
  s.gram = raw;
  s.gram.diagonal().array() -= tau * noise_bs;
  s.kappa = tau * beta1;
  const CMat corr = y1 * p;  // column k is Y p_k
  s.own = std::sqrt(beta1) * own_group_terms(corr, mu, grouping);
  s.echo = CMat::Zero(y1.rows(), grouping.num_groups());
  if (y3 != nullptr) s.echo = (beta1 / std::sqrt(beta3)) * (*y3) * pilots.group_pilots();
  return s;
}

LocalSystem gs_system(const CMat& y2, const CMat& y3, double beta2, double beta3, double noise_bs,
                      const PilotBook& pilots) {
  const int tau = pilots.tau();
  const CMat& pg = pilots.group_pilots();
  LocalSystem s;
  const CMat raw = y2 * y2.adjoint();
  s.floor_shift = relative_floor(raw);
  s.gram = raw;
  s.gram.diagonal().array() -= tau * noise_bs;
  s.kappa = tau * beta2;
  s.own = std::sqrt(beta2) * y2 * pg;
  s.echo = (beta2 / std::sqrt(beta3)) * y3 * pg;
  return s;
}

LocalPrecoder evaluate_at(const LocalSystem& s, double lambda, const CMat* previous) {
  LocalPrecoder out;
  out.lambda = lambda;
  const double shift = s.kappa * lambda;
  CMat rhs = s.own - s.echo;
  if (previous != nullptr) rhs -= shift * (*previous);
  CMat w;
  if (!kernels::hermitian_solve(s.gram, shift, rhs, w) || !w.allFinite()) {
    const kernels::ShiftedPowerProfile<double> profile(s.gram, CMat::Zero(s.gram.rows(), 1));
    const double lift = std::max(0.0, -profile.min_eigenvalue() - shift) + s.floor_shift;
    if (!kernels::hermitian_solve(s.gram, shift + lift, rhs, w)) throw NumericalError("local precoder: ridge fallback failed");
    out.ridge = true;
  }
  out.w = std::move(w);
  return out;
}

// Picks lambda so that the undamped precoders (previous + increment, or the
// memoryless solution) meet the BS budget, then evaluates the formula.
LocalPrecoder solve_with_budget(const LocalSystem& s, const CMat* previous, double rho_bs) {
  CMat undamped_rhs = s.own - s.echo;
  if (previous != nullptr) undamped_rhs += s.gram * (*previous);
  const kernels::ShiftedPowerProfile<double> profile(s.gram, undamped_rhs);
  const double min_eig = profile.min_eigenvalue();
  const double lower = std::max(s.floor_shift, -min_eig + s.floor_shift);
  const double shift = kernels::bisect_shift(profile, lower, rho_bs);
  LocalPrecoder out = evaluate_at(s, shift / s.kappa, previous);
  out.ridge = out.ridge || min_eig < 0.0;
  return out;
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("damping factor alpha must lie in (0, 1]");
}

}  // namespace

CMat exact_local_precoder(const ChannelSet& ch, const CMat& combiners, const RVec& mu, const Grouping& grouping, int b,
                          double lambda_b, const CMat& precoders) {
  const CMat h = effective_uplink(ch, combiners, b);
  CMat a = weighted_gram(h, mu);
  a.diagonal().array() += lambda_b;
  const CMat cross = h * mu.asDiagonal() * cross_products(ch, combiners, precoders, b);
  return a.ldlt().solve(own_group_terms(h, mu, grouping) - cross);
}

CMat best_response_target(const ChannelSet& ch, const CMat& combiners, const RVec& mu, const Grouping& grouping, int b,
                          double lambda_b, const CMat& previous) {
  const int M = ch.bs_antennas;
  const CMat h = effective_uplink(ch, combiners, b);
  CMat a = weighted_gram(h, mu);
  a.diagonal().array() += lambda_b;
  const CMat cross = h * mu.asDiagonal() * cross_products(ch, combiners, previous, -1);
  return a.ldlt().solve(own_group_terms(h, mu, grouping) - cross - lambda_b * previous.middleRows(b * M, M));
}

double solve_exact_lambda(const ChannelSet& ch, const CMat& combiners, const RVec& mu, const Grouping& grouping, int b,
                          const CMat& previous, double rho_bs) {
  const CMat h = effective_uplink(ch, combiners, b);
  const CMat gram = weighted_gram(h, mu);
  const CMat cross = h * mu.asDiagonal() * cross_products(ch, combiners, previous, b);
  const kernels::ShiftedPowerProfile<double> profile(gram, own_group_terms(h, mu, grouping) - cross);
  const double floor = relative_floor(gram);
  return kernels::bisect_shift(profile, std::max(floor, -profile.min_eigenvalue() + floor), rho_bs);
}

CMat damped_update(const CMat& previous, const CMat& target, double alpha) {
  check_alpha(alpha);
  return previous + alpha * target;
}

CMat project_power(const CMat& bs_precoders, double rho_bs) {
  const double p = bs_precoders.squaredNorm();
  if (p <= rho_bs) return bs_precoders;
  return bs_precoders * std::sqrt(rho_bs / p);
}

LocalPrecoder local_precoder_br(const CMat& y_ul1, const CMat& y_ul3, double beta_ul1, double beta_ul3,
                                double lambda_b, double noise_bs, const PilotBook& pilots, const Grouping& grouping,
                                const RVec& mu, const CMat& previous) {
  return evaluate_at(br_system(y_ul1, &y_ul3, beta_ul1, beta_ul3, noise_bs, pilots, grouping, mu), lambda_b, &previous);
}

LocalPrecoder local_precoder_gs(const CMat& y_ul2, const CMat& y_ul3, double beta_ul2, double beta_ul3,
                                double lambda_b, double noise_bs, const PilotBook& pilots, const CMat& previous) {
  return evaluate_at(gs_system(y_ul2, y_ul3, beta_ul2, beta_ul3, noise_bs, pilots), lambda_b, &previous);
}

LocalPrecoder local_precoder_mmse(const CMat& y_ul1, double beta_ul1, double lambda_b, double noise_bs,
                                  const PilotBook& pilots, const Grouping& grouping, const RVec& mu) {
  return evaluate_at(br_system(y_ul1, nullptr, beta_ul1, 1.0, noise_bs, pilots, grouping, mu), lambda_b, nullptr);
}

LocalPrecoder solve_local_br(const CMat& y_ul1, const CMat& y_ul3, double beta_ul1, double beta_ul3, double noise_bs,
                             const PilotBook& pilots, const Grouping& grouping, const RVec& mu, const CMat& previous,
                             double rho_bs) {
  return solve_with_budget(br_system(y_ul1, &y_ul3, beta_ul1, beta_ul3, noise_bs, pilots, grouping, mu), &previous,
                           rho_bs);
}

LocalPrecoder solve_local_gs(const CMat& y_ul2, const CMat& y_ul3, double beta_ul2, double beta_ul3, double noise_bs,
                             const PilotBook& pilots, const CMat& previous, double rho_bs) {
  return solve_with_budget(gs_system(y_ul2, y_ul3, beta_ul2, beta_ul3, noise_bs, pilots), &previous, rho_bs);
}

LocalPrecoder solve_local_mmse(const CMat& y_ul1, double beta_ul1, double noise_bs, const PilotBook& pilots,
                               const Grouping& grouping, const RVec& mu, double rho_bs) {
  return solve_with_budget(br_system(y_ul1, nullptr, beta_ul1, 1.0, noise_bs, pilots, grouping, mu), nullptr, rho_bs);
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::BestResponse: return "best_response";
    case Variant::GroupSpecific: return "group_specific";
    case Variant::LocalMmse: return "local_mmse";
  }
  return "?";
}

int training_overhead(Variant v, int K, int G) {
  switch (v) {
    case Variant::BestResponse: return K + 2 * G;
    case Variant::GroupSpecific: return 3 * G;
    case Variant::LocalMmse: return K + G;
  }
  return 0;
}

int min_pilot_length(Variant v, int K, int G) {
  switch (v) {
    case Variant::BestResponse: return K + G;
    case Variant::GroupSpecific: return 2 * G;
    case Variant::LocalMmse: return K;
  }
  return 0;
}

BaseStationAgent::BaseStationAgent(int index, Variant variant, const PilotBook& pilots, const Grouping& grouping,
                                   RVec mu, double noise_bs, double rho_bs, double alpha, CMat initial_precoders)
    : index_(index),
      variant_(variant),
      pilots_(&pilots),
      grouping_(&grouping),
      mu_(std::move(mu)),
      noise_bs_(noise_bs),
      rho_bs_(rho_bs),
      alpha_(alpha),
      precoders_(std::move(initial_precoders)) {
  check_alpha(alpha);
}

void BaseStationAgent::receive_uplink(const CMat& y, double beta) {
  y_uplink_ = y;
  beta_uplink_ = beta;
  have_uplink_ = true;
}

void BaseStationAgent::receive_echo(const CMat& y, double beta) {
  y_echo_ = y;
  beta_echo_ = beta;
  have_echo_ = true;
}

const CMat& BaseStationAgent::update() {
  if (!have_uplink_) throw SequencingError("BS update before its uplink training block arrived");
  ++uplink_reads_;
  LocalPrecoder r;
  if (variant_ == Variant::LocalMmse) {
    r = solve_local_mmse(y_uplink_, beta_uplink_, noise_bs_, *pilots_, *grouping_, mu_, rho_bs_);
    precoders_ = project_power(r.w, rho_bs_);
  } else {
    if (!have_echo_) throw SequencingError("BS update before its UL-3 echo arrived");
    ++echo_reads_;
    if (variant_ == Variant::BestResponse)
      r = solve_local_br(y_uplink_, y_echo_, beta_uplink_, beta_echo_, noise_bs_, *pilots_, *grouping_, mu_,
                         precoders_, rho_bs_);
    else
      r = solve_local_gs(y_uplink_, y_echo_, beta_uplink_, beta_echo_, noise_bs_, *pilots_, precoders_, rho_bs_);
    precoders_ = project_power(damped_update(precoders_, r.w, alpha_), rho_bs_);
  }
  lambda_ = r.lambda;
  if (r.ridge) ++ridge_count_;
  have_uplink_ = have_echo_ = false;
  return precoders_;
}

CMat random_feasible_precoders(int num_bs, int M, int G, double rho_bs, Rng& rng) {
  CMat w(num_bs * M, G);
  for (int b = 0; b < num_bs; ++b) {
    CMat wb = complex_normal_matrix(rng, M, G, 1.0);
    w.middleRows(b * M, M) = wb * std::sqrt(rho_bs / wb.squaredNorm());
  }
  return w;
}

BidirectionalResult run_bidirectional(const ChannelSet& ch, const Grouping& grouping, const CMat& initial_combiners,
                                      const CMat& initial_precoders, const BidirectionalOptions& opt,
                                      const SeedTree& noise_seeds) {
  const int B = ch.num_bs;
  const int M = ch.bs_antennas;
  const int K = ch.num_ue;
  const int G = grouping.num_groups();
  const int needed = min_pilot_length(opt.variant, K, G);
  if (opt.tau < needed) {
    std::ostringstream os;
    os << variant_name(opt.variant) << " needs at least " << needed << " orthogonal uplink pilot symbols per iteration, tau="
       << opt.tau;
    throw ConfigError(os.str());
  }
  check_alpha(opt.alpha);

  const RVec mu = opt.mu.size() == K ? opt.mu : RVec::Ones(K);
  const PilotBook pilots = make_pilot_book(opt.tau, K, G, ch.ue_antennas, opt.pilot_scheme);
  const int r_ce = training_overhead(opt.variant, K, G);

  std::vector<BaseStationAgent> agents;
  agents.reserve(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b)
    agents.emplace_back(b, opt.variant, pilots, grouping, mu, opt.budget.noise_bs, opt.budget.rho_bs, opt.alpha,
                        initial_precoders.middleRows(b * M, M));

  BidirectionalResult res;
  res.state.precoders = initial_precoders;
  res.state.combiners = initial_combiners;

  auto noise = [&](int it, Phase p) { return noise_seeds.stream({static_cast<std::uint64_t>(it), static_cast<std::uint64_t>(p)}); };

  Rng dl0 = noise(0, Phase::DL);
  DownlinkResult dl = dl_effective(ch, res.state.precoders, grouping, pilots, opt.budget, dl0);
  dl.snapshot.iteration = 0;

  for (int it = 1; it <= opt.iterations; ++it) {
    // Uplink phases. Every BS receives only its own block.
    UplinkSnapshot up;
    if (opt.variant == Variant::GroupSpecific) {
      Rng r = noise(it, Phase::UL2);
      up = ul_group_specific(ch, res.state.combiners, grouping, pilots, opt.budget, r).snapshot;
    } else {
      Rng r = noise(it, Phase::UL1);
      up = ul_ue_specific(ch, res.state.combiners, pilots, opt.budget, r).snapshot;
    }
    for (int b = 0; b < B; ++b) agents[static_cast<std::size_t>(b)].receive_uplink(up.y[static_cast<std::size_t>(b)], up.beta);

    if (opt.variant != Variant::LocalMmse) {
      Rng r = noise(it, Phase::UL3);
      const UplinkSnapshot echo = ul_echo(ch, res.state.combiners, dl.snapshot, mu, opt.budget, r);
      for (int b = 0; b < B; ++b)
        agents[static_cast<std::size_t>(b)].receive_echo(echo.y[static_cast<std::size_t>(b)], echo.beta);
    }

    // Phase barrier: all BSs update from the same iteration's training.
    for (int b = 0; b < B; ++b) res.state.precoders.middleRows(b * M, M) = agents[static_cast<std::size_t>(b)].update();

    Rng r = noise(it, Phase::DL);
    dl = dl_effective(ch, res.state.precoders, grouping, pilots, opt.budget, r);
    dl.snapshot.iteration = it;
    for (int k = 0; k < K; ++k) {
      const LsCombiner c =
          rx_combiner_ls(dl.snapshot.y[static_cast<std::size_t>(k)], pilots.group_pilot(grouping.group_of[static_cast<std::size_t>(k)]));
      res.state.combiners.col(k) = c.v;
      if (c.regularized) ++res.ridge_count;
    }

    res.per_iteration.push_back(link_stats(ch, res.state.precoders, res.state.combiners, grouping, opt.budget.noise_ue, mu));
    res.effective_rate.push_back(effective_rate(res.per_iteration.back().sum_group_rate, it, r_ce, opt.r_tot));
  }

  for (const auto& a : agents) {
    res.uplink_reads.push_back(a.uplink_reads());
    res.echo_reads.push_back(a.echo_reads());
    res.ridge_count += a.ridge_count();
  }
  return res;
}

}  // namespace cfmm
