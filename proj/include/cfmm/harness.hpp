#pragma once

#include "cfmm/rng.hpp"
#include "cfmm/scenario.hpp"
#include "cfmm/trace.hpp"

#include <string>
#include <vector>

namespace cfmm {

enum class Method {
  Centralized,          // sum-MSE, perfect CSI
  CentralizedSumGroup,  // sum-group MSE, perfect CSI
  CentralizedEstimated, // sum-MSE on LS estimates, LS receive combiners
  BestResponse,
  GroupSpecific,
  LocalMmse,
};

const char* method_name(Method m);
Method parse_method(const std::string& name);
/// Comma-separated method names.
std::vector<Method> parse_methods(const std::string& csv);

/// Everything one Monte Carlo drop shares across methods.
struct DropInputs {
  int drop = 0;
  std::uint64_t seed = 0;
  Geometry geometry;
  Grouping grouping;
  ChannelSet channels;
  CMat initial_combiners;
  CMat initial_precoders;  // feasible random draw for the first DL broadcast
  SeedTree noise{0};
};

DropInputs make_drop(const ScenarioConfig& config, int drop);

/// Runs one method on one drop and records one IterationRecord per iteration.
RunTrace run_method(const ScenarioConfig& config, const DropInputs& inputs, Method method);

/// Training symbols charged once per iteration (R_eff uses i * r_ce) for the
/// distributed methods; centralized methods report 0 here and are charged
/// their one-off estimation cost instead (see one_off_overhead).
int per_iteration_overhead(Method m, int num_ue, int num_groups);
int one_off_overhead(Method m, int num_ue, int num_groups, int ue_antennas);

struct SummaryRow {
  std::string method;
  double rho_bs_dbm = 0;
  int iteration = 0;
  double mean_rate = 0;
  double mean_effective_rate = 0;
  double std_rate = 0;
  int drops = 0;
};

struct ResultTable {
  int num_groups = 0;
  std::vector<RunTrace> traces;      // ordered by (rho, method, drop)
  std::vector<SummaryRow> summary;   // ordered by (rho, method, iteration)
  std::vector<std::string> failures; // one diagnostic per aborted drop
};

/// Mean and sample standard deviation across drops, per (rho, method, iteration).
std::vector<SummaryRow> summarize(const std::vector<RunTrace>& traces, const std::vector<std::string>& method_order);

/// Drops run on a worker pool; results are folded in drop order, so the
/// output does not depend on scheduling. workers <= 0 picks worker_count().
ResultTable run_experiment(const ScenarioConfig& config, const std::vector<Method>& methods, int workers = 0);

ResultTable sweep_power(const ScenarioConfig& config, const std::vector<double>& rho_bs_dbm,
                        const std::vector<Method>& methods, int workers = 0);

/// CFMM_WORKERS if set, otherwise the hardware concurrency.
int worker_count();

/// CSV: method,rho_bs_dbm,drop,iteration,sum_group_rate,effective_rate,sum_mse,
/// sum_group_mse,min_sinr_db_g1..min_sinr_db_gG. One row per (method, drop, iteration).
std::string format_results(const ResultTable& table);
void write_results(const ResultTable& table, const std::string& path);
ResultTable read_results(const std::string& path);
ResultTable parse_results(const std::string& csv_text);

}  // namespace cfmm
