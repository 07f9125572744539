#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cfmm {

struct IterationRecord {
  int iteration = 0;  // 1-based
  double sum_mse = 0;
  double sum_group_mse = 0;
  std::vector<double> min_sinr_db;  // per group
  double sum_group_rate = 0;
  double effective_rate = 0;
};

/// Per-iteration metrics of one method on one drop.
struct RunTrace {
  std::string method;
  int drop = 0;
  double rho_bs_dbm = 0;
  std::uint64_t config_fingerprint = 0;
  std::uint64_t channel_fingerprint = 0;
  std::uint64_t seed = 0;
  int regularized_solves = 0;  // ridge fallbacks taken along the way
  std::vector<IterationRecord> records;
};

}  // namespace cfmm
