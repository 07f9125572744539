#include "cfmm/harness.hpp"

#include "cfmm/centralized.hpp"
#include "cfmm/config_io.hpp"
#include "cfmm/distributed.hpp"
#include "cfmm/metrics.hpp"
#include "cfmm/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

namespace cfmm {

namespace {

// Stream tags under the per-drop seed.
enum StreamTag : std::uint64_t {
  kGeometry = 1,
  kGrouping = 2,
  kChannels = 3,
  kInitCombiners = 4,
  kInitPrecoders = 5,
  kNoise = 6,
  kAntennaTraining = 7,
};

IterationRecord make_record(const LinkStats& s, int iteration, double r_eff) {
  IterationRecord rec;
  rec.iteration = iteration;
  rec.sum_mse = s.sum_mse;
  rec.sum_group_mse = s.sum_group_mse;
  rec.sum_group_rate = s.sum_group_rate;
  rec.effective_rate = r_eff;
  for (Eigen::Index g = 0; g < s.group_min_sinr.size(); ++g)
    rec.min_sinr_db.push_back(10.0 * std::log10(s.group_min_sinr(g)));
  return rec;
}

AlternatingOptions alternating_options(const ScenarioConfig& c, Objective objective) {
  const LinkBudget lb = link_budget(c);
  AlternatingOptions o;
  o.objective = objective;
  o.iterations = c.num_iterations;
  o.mu = mu_weights(c);
  o.rho_bs = lb.rho_bs;
  o.noise_ue = lb.noise_ue;
  o.power.max_sweeps = c.power_max_sweeps;
  o.sumgroup.inner_steps = c.sumgroup_inner_steps;
  o.sumgroup.step0 = c.subgradient_step0;
  o.sumgroup.power = o.power;
  return o;
}

}  // namespace

const char* method_name(Method m) {
  switch (m) {
    case Method::Centralized: return "centralized";
    case Method::CentralizedSumGroup: return "centralized_sumgroup";
    case Method::CentralizedEstimated: return "centralized_estimated";
    case Method::BestResponse: return "best_response";
    case Method::GroupSpecific: return "group_specific";
    case Method::LocalMmse: return "local_mmse";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::Centralized, Method::CentralizedSumGroup, Method::CentralizedEstimated, Method::BestResponse,
                   Method::GroupSpecific, Method::LocalMmse})
    if (name == method_name(m)) return m;
  throw ConfigError("unknown method '" + name + "'");
}

std::vector<Method> parse_methods(const std::string& csv) {
  std::vector<Method> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(parse_method(item));
  }
  if (out.empty()) throw ConfigError("no methods given");
  return out;
}

int per_iteration_overhead(Method m, int K, int G) {
  switch (m) {
    case Method::BestResponse: return training_overhead(Variant::BestResponse, K, G);
    case Method::GroupSpecific: return training_overhead(Variant::GroupSpecific, K, G);
    case Method::LocalMmse: return training_overhead(Variant::LocalMmse, K, G);
    default: return 0;
  }
}

int one_off_overhead(Method m, int K, int G, int N) {
  // Antenna-specific uplink plus the final DL phase.
  return m == Method::CentralizedEstimated ? K * N + G : 0;
}

DropInputs make_drop(const ScenarioConfig& config, int drop) {
  validate(config);
  const SeedTree master(config.seed);
  DropInputs in;
  in.drop = drop;
  in.seed = master.derive({static_cast<std::uint64_t>(drop)});
  const SeedTree tree(in.seed);

  Rng geo = tree.stream({kGeometry});
  in.geometry = build_geometry(config, geo);
  Rng grp = tree.stream({kGrouping});
  in.grouping = assign_groups(config, grp, &in.geometry);
  Rng chn = tree.stream({kChannels});
  in.channels = draw_channels(in.geometry, config, chn);
  Rng comb = tree.stream({kInitCombiners});
  in.initial_combiners = random_unit_combiners(config.num_ue_antennas, config.num_ue, comb);
  Rng prec = tree.stream({kInitPrecoders});
  in.initial_precoders = random_feasible_precoders(config.num_bs, config.num_bs_antennas, config.num_groups,
                                                   link_budget(config).rho_bs, prec);
  in.noise = SeedTree(tree.derive({kNoise}));
  return in;
}

RunTrace run_method(const ScenarioConfig& config, const DropInputs& in, Method method) {
  const LinkBudget lb = link_budget(config);
  const RVec mu = mu_weights(config);
  const int K = config.num_ue;
  const int G = config.num_groups;

  RunTrace trace;
  trace.method = method_name(method);
  trace.drop = in.drop;
  trace.rho_bs_dbm = config.rho_bs_dbm;
  trace.config_fingerprint = fingerprint(config);
  trace.channel_fingerprint = fingerprint(in.channels);
  trace.seed = in.seed;

  switch (method) {
    case Method::Centralized:
    case Method::CentralizedSumGroup: {
      const auto opts = alternating_options(
          config, method == Method::Centralized ? Objective::SumMse : Objective::SumGroupMse);
      const auto res = alternating_optimize(in.channels, in.grouping, in.initial_combiners, opts,
                                            [&](const BeamformerState& s, int) {
                                              return link_stats(in.channels, s.precoders, s.combiners, in.grouping,
                                                                lb.noise_ue, mu);
                                            });
      for (std::size_t i = 0; i < res.per_iteration.size(); ++i)
        trace.records.push_back(make_record(res.per_iteration[i], static_cast<int>(i) + 1,
                                            res.per_iteration[i].sum_group_rate));
      break;
    }
    case Method::CentralizedEstimated: {
      const int tau_ant = std::max(config.tau, K * config.num_ue_antennas);
      const PilotBook ant = make_pilot_book(tau_ant, K, G, config.num_ue_antennas, config.pilot_scheme);
      const PilotBook dl_pilots = make_pilot_book(config.tau, K, G, config.num_ue_antennas, config.pilot_scheme);
      Rng est_rng = SeedTree(in.seed).stream({kAntennaTraining});
      const AntennaSpecificResult est = ul_antenna_specific(in.channels, ant, lb, est_rng);
      ChannelSet estimated = in.channels;
      estimated.h = est.h_hat;

      int ridge = 0;
      const auto opts = alternating_options(config, Objective::SumMse);
      const auto res = alternating_optimize(
          estimated, in.grouping, in.initial_combiners, opts, [&](const BeamformerState& s, int it) {
            // Precoders go out to the BSs; UEs train on the true DL channel.
            Rng r = in.noise.stream({static_cast<std::uint64_t>(it), static_cast<std::uint64_t>(Phase::DL)});
            const DownlinkResult dl = dl_effective(in.channels, s.precoders, in.grouping, dl_pilots, lb, r);
            CMat v(config.num_ue_antennas, K);
            for (int k = 0; k < K; ++k) {
              const LsCombiner c = rx_combiner_ls(dl.snapshot.y[static_cast<std::size_t>(k)],
                                                  dl_pilots.group_pilot(in.grouping.group_of[static_cast<std::size_t>(k)]));
              v.col(k) = c.v;
              ridge += c.regularized;
            }
            return link_stats(in.channels, s.precoders, v, in.grouping, lb.noise_ue, mu);
          });
      const int once = one_off_overhead(method, K, G, config.num_ue_antennas);
      for (std::size_t i = 0; i < res.per_iteration.size(); ++i) {
        const double r = res.per_iteration[i].sum_group_rate;
        trace.records.push_back(make_record(res.per_iteration[i], static_cast<int>(i) + 1,
                                            effective_rate(r, 1, once, config.r_tot)));
      }
      trace.regularized_solves = ridge;
      break;
    }
    case Method::BestResponse:
    case Method::GroupSpecific:
    case Method::LocalMmse: {
      BidirectionalOptions opts;
      opts.variant = method == Method::BestResponse    ? Variant::BestResponse
                     : method == Method::GroupSpecific ? Variant::GroupSpecific
                                                       : Variant::LocalMmse;
      opts.iterations = config.num_iterations;
      opts.alpha = config.alpha;
      opts.mu = mu;
      opts.budget = lb;
      opts.tau = config.tau;
      opts.pilot_scheme = config.pilot_scheme;
      opts.r_tot = config.r_tot;
      const auto res = run_bidirectional(in.channels, in.grouping, in.initial_combiners, in.initial_precoders, opts,
                                         in.noise);
      for (std::size_t i = 0; i < res.per_iteration.size(); ++i)
        trace.records.push_back(make_record(res.per_iteration[i], static_cast<int>(i) + 1, res.effective_rate[i]));
      trace.regularized_solves = res.ridge_count;
      break;
    }
  }
  return trace;
}

int worker_count() {
  if (const char* env = std::getenv("CFMM_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<SummaryRow> summarize(const std::vector<RunTrace>& traces, const std::vector<std::string>& method_order) {
  struct Acc {
    std::vector<double> rate;
    std::vector<double> eff;
  };
  // (rho, method rank, iteration) keeps the output order deterministic.
  std::map<std::tuple<double, int, int>, Acc> acc;
  auto rank = [&](const std::string& m) {
    const auto it = std::find(method_order.begin(), method_order.end(), m);
    return static_cast<int>(it - method_order.begin());
  };
  for (const auto& t : traces)
    for (const auto& r : t.records) {
      auto& a = acc[{t.rho_bs_dbm, rank(t.method), r.iteration}];
      a.rate.push_back(r.sum_group_rate);
      a.eff.push_back(r.effective_rate);
    }
  std::vector<SummaryRow> rows;
  for (const auto& [key, a] : acc) {
    SummaryRow row;
    row.rho_bs_dbm = std::get<0>(key);
    row.method = std::get<1>(key) < static_cast<int>(method_order.size()) ? method_order[static_cast<std::size_t>(std::get<1>(key))] : "?";
    row.iteration = std::get<2>(key);
    row.drops = static_cast<int>(a.rate.size());
    const double n = static_cast<double>(row.drops);
    for (std::size_t i = 0; i < a.rate.size(); ++i) {
      row.mean_rate += a.rate[i] / n;
      row.mean_effective_rate += a.eff[i] / n;
    }
    double ss = 0;
    for (double x : a.rate) ss += (x - row.mean_rate) * (x - row.mean_rate);
    row.std_rate = row.drops > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

ResultTable run_experiment(const ScenarioConfig& config, const std::vector<Method>& methods, int workers) {
  validate(config);
  if (methods.empty()) throw ConfigError("no methods requested");
  if (workers <= 0) workers = worker_count();
  workers = std::min(workers, config.num_drops);

  struct DropOutcome {
    std::vector<RunTrace> traces;
    std::optional<std::string> failure;
  };
  std::vector<DropOutcome> outcomes(static_cast<std::size_t>(config.num_drops));
  std::atomic<int> next{0};

  auto worker = [&]() {
    for (int d = next++; d < config.num_drops; d = next++) {
      auto& out = outcomes[static_cast<std::size_t>(d)];
      try {
        const DropInputs in = make_drop(config, d);
        for (Method m : methods) out.traces.push_back(run_method(config, in, m));
      } catch (const std::exception& e) {
        std::ostringstream os;
        os << "drop " << d << " aborted: " << e.what();
        out.failure = os.str();
        out.traces.clear();
      }
    }
  };

  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ResultTable table;
  table.num_groups = config.num_groups;
  std::vector<std::string> order;
  for (Method m : methods) order.push_back(method_name(m));
  for (std::size_t mi = 0; mi < methods.size(); ++mi)
    for (const auto& o : outcomes)
      if (!o.failure) table.traces.push_back(o.traces[mi]);
  for (const auto& o : outcomes)
    if (o.failure) {
      std::cerr << "warning: " << *o.failure << '\n';
      table.failures.push_back(*o.failure);
    }
  table.summary = summarize(table.traces, order);
  return table;
}

ResultTable sweep_power(const ScenarioConfig& config, const std::vector<double>& rho_bs_dbm,
                        const std::vector<Method>& methods, int workers) {
  if (rho_bs_dbm.empty()) throw ConfigError("sweep_power: empty rho_bs list");
  ResultTable all;
  all.num_groups = config.num_groups;
  std::vector<std::string> order;
  for (Method m : methods) order.push_back(method_name(m));
  for (double rho : rho_bs_dbm) {
    ScenarioConfig c = config;
    c.rho_bs_dbm = rho;
    ResultTable t = run_experiment(c, methods, workers);
    all.traces.insert(all.traces.end(), t.traces.begin(), t.traces.end());
    all.failures.insert(all.failures.end(), t.failures.begin(), t.failures.end());
  }
  all.summary = summarize(all.traces, order);
  return all;
}

}  // namespace cfmm
