#pragma once

#include "cfmm/rng.hpp"
#include "cfmm/types.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace cfmm {

enum class GroupingStrategy { RandomEqual, Geographic };
enum class PilotScheme { Dft, Canonical };

struct ScenarioConfig {
  int num_bs = 9;
  int num_bs_antennas = 4;
  int num_ue = 8;
  int num_ue_antennas = 2;
  int num_groups = 4;

  double grid_spacing = 100.0;
  double pathloss_offset_db = -48.0;
  double pathloss_exponent_coeff = 30.0;

  double rho_bs_dbm = 30.0;
  double rho_ue_dbm = 20.0;
  double noise_bs_dbm = -95.0;
  double noise_ue_dbm = -95.0;

  int tau = 12;
  double alpha = 0.5;
  std::vector<double> mu_weights;  // empty means all ones

  int num_iterations = 50;
  int r_tot = 1000;
  std::uint64_t seed = 1;
  int num_drops = 20;

  // Algorithm knobs.
  int sumgroup_inner_steps = 20;
  double subgradient_step0 = 0.1;
  int power_max_sweeps = 50;
  GroupingStrategy grouping = GroupingStrategy::RandomEqual;
  PilotScheme pilot_scheme = PilotScheme::Dft;
};

/// Desk-scale default profile.
ScenarioConfig desk_preset();
/// The full-size network of the reference experiment.
ScenarioConfig paper_preset();

/// Throws ConfigError on the first violated invariant.
void validate(const ScenarioConfig& config);

/// Per-UE weights with the empty-means-ones default expanded.
RVec mu_weights(const ScenarioConfig& config);

/// Linear-scale powers, converted once from the dB fields.
struct LinkBudget {
  double rho_bs = 0;    // W
  double rho_ue = 0;    // W
  double noise_bs = 0;  // W
  double noise_ue = 0;  // W
};

LinkBudget link_budget(const ScenarioConfig& config);

struct Point {
  double x = 0;
  double y = 0;
};

struct Geometry {
  std::vector<Point> bs_positions;
  std::vector<Point> ue_positions;
  RMat distance;  // B x K, floored at kMinDistance
};

inline constexpr double kMinDistance = 1.0;

struct Grouping {
  std::vector<std::vector<int>> members;  // K_g
  std::vector<int> group_of;              // g_k

  int num_groups() const { return static_cast<int>(members.size()); }
  int num_ue() const { return static_cast<int>(group_of.size()); }
};

/// Checks that members partitions 0..K-1 and agrees with group_of.
bool is_partition(const Grouping& grouping);

/// Grouping built from an explicit member list.
Grouping make_grouping(std::vector<std::vector<int>> members, int num_ue);

struct ChannelSet {
  int num_bs = 0;
  int num_ue = 0;
  int bs_antennas = 0;
  int ue_antennas = 0;
  std::vector<CMat> h;  // uplink H_{b,k}, M x N, index b * K + k
  RMat large_scale;     // B x K linear gains

  ChannelSet() = default;
  ChannelSet(int B, int K, int M, int N);

  CMat& at(int b, int k) { return h[static_cast<std::size_t>(b * num_ue + k)]; }
  const CMat& at(int b, int k) const { return h[static_cast<std::size_t>(b * num_ue + k)]; }

  /// Vertical stack of H_{1,k}..H_{B,k}, BM x N.
  CMat aggregated(int k) const;
};

/// FNV-1a over the raw channel entries; equal sets hash equal.
std::uint64_t fingerprint(const ChannelSet& channels);

Geometry build_geometry(const ScenarioConfig& config, Rng& rng);
Grouping assign_groups(const ScenarioConfig& config, Rng& rng, const Geometry* geometry = nullptr);
double path_gain(double distance_m, const ScenarioConfig& config);
ChannelSet draw_channels(const Geometry& geometry, const ScenarioConfig& config, Rng& rng);

}  // namespace cfmm
