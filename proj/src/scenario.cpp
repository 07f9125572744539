#include "cfmm/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace cfmm {

ScenarioConfig desk_preset() { return ScenarioConfig{}; }

ScenarioConfig paper_preset() {
  ScenarioConfig c;
  c.num_bs = 25;
  c.num_bs_antennas = 8;
  c.num_ue = 32;
  c.num_ue_antennas = 2;
  c.num_groups = 8;
  c.tau = c.num_ue + c.num_groups;
  c.num_iterations = 100;
  c.num_drops = 100;
  return c;
}

namespace {

int integer_sqrt(int n) {
  int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  return r;
}

bool is_perfect_square(int n) {
  const int r = integer_sqrt(n);
  return n > 0 && r * r == n;
}

template <typename T>
void require(bool ok, const T& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

void validate(const ScenarioConfig& c) {
  require(c.num_bs > 0 && c.num_bs_antennas > 0 && c.num_ue > 0 && c.num_ue_antennas > 0 && c.num_groups > 0,
          "num_bs, num_bs_antennas, num_ue, num_ue_antennas and num_groups must be positive");
  require(is_perfect_square(c.num_bs), "num_bs must be a perfect square (square BS grid)");
  require(c.num_groups <= c.num_ue, "num_groups must not exceed num_ue");
  if (c.grouping == GroupingStrategy::RandomEqual)
    require(c.num_ue % c.num_groups == 0, "num_ue must be divisible by num_groups for equal-size grouping");
  require(c.grid_spacing > 0 && std::isfinite(c.grid_spacing), "grid_spacing must be positive");
  require(c.alpha > 0.0 && c.alpha <= 1.0, "alpha must lie in (0, 1]");
  require(c.tau > 0, "tau must be positive");
  require(!std::isnan(c.rho_bs_dbm) && !std::isnan(c.rho_ue_dbm) && std::isfinite(c.rho_bs_dbm) &&
              std::isfinite(c.rho_ue_dbm),
          "transmit powers must be finite");
  // Noise may be -inf (noiseless) but never +inf or NaN.
  require(!std::isnan(c.noise_bs_dbm) && !std::isnan(c.noise_ue_dbm) && c.noise_bs_dbm < INFINITY &&
              c.noise_ue_dbm < INFINITY,
          "noise powers must not be NaN or +inf");
  require(std::isfinite(c.pathloss_offset_db) && std::isfinite(c.pathloss_exponent_coeff),
          "path-loss constants must be finite");
  require(c.mu_weights.empty() || static_cast<int>(c.mu_weights.size()) == c.num_ue,
          "mu_weights must be empty or have num_ue entries");
  for (double m : c.mu_weights) require(m > 0.0 && std::isfinite(m), "all mu_weights must be positive");
  require(c.num_iterations >= 0, "num_iterations must be non-negative");
  require(c.r_tot > 0, "r_tot must be positive");
  require(c.num_drops > 0, "num_drops must be positive");
  require(c.sumgroup_inner_steps > 0, "sumgroup_inner_steps must be positive");
  require(c.subgradient_step0 > 0.0, "subgradient_step0 must be positive");
  require(c.power_max_sweeps > 0, "power_max_sweeps must be positive");
}

RVec mu_weights(const ScenarioConfig& c) {
  if (c.mu_weights.empty()) return RVec::Ones(c.num_ue);
  return Eigen::Map<const RVec>(c.mu_weights.data(), static_cast<Eigen::Index>(c.mu_weights.size()));
}

LinkBudget link_budget(const ScenarioConfig& c) {
  return {dbm_to_watt(c.rho_bs_dbm), dbm_to_watt(c.rho_ue_dbm), dbm_to_watt(c.noise_bs_dbm),
          dbm_to_watt(c.noise_ue_dbm)};
}

bool is_partition(const Grouping& grouping) {
  const int K = grouping.num_ue();
  std::vector<int> seen(static_cast<std::size_t>(K), 0);
  for (int g = 0; g < grouping.num_groups(); ++g) {
    for (int k : grouping.members[static_cast<std::size_t>(g)]) {
      if (k < 0 || k >= K) return false;
      if (seen[static_cast<std::size_t>(k)]++) return false;
      if (grouping.group_of[static_cast<std::size_t>(k)] != g) return false;
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; });
}

Grouping make_grouping(std::vector<std::vector<int>> members, int num_ue) {
  Grouping out;
  out.members = std::move(members);
  out.group_of.assign(static_cast<std::size_t>(num_ue), -1);
  for (std::size_t g = 0; g < out.members.size(); ++g) {
    std::sort(out.members[g].begin(), out.members[g].end());
    for (int k : out.members[g]) {
      if (k < 0 || k >= num_ue) throw ConfigError("group member index out of range");
      out.group_of[static_cast<std::size_t>(k)] = static_cast<int>(g);
    }
  }
  if (!is_partition(out)) throw ConfigError("groups must partition the UE set");
  return out;
}

ChannelSet::ChannelSet(int B, int K, int M, int N)
    : num_bs(B),
      num_ue(K),
      bs_antennas(M),
      ue_antennas(N),
      h(static_cast<std::size_t>(B * K), CMat::Zero(M, N)),
      large_scale(RMat::Zero(B, K)) {}

CMat ChannelSet::aggregated(int k) const {
  CMat out(num_bs * bs_antennas, ue_antennas);
  for (int b = 0; b < num_bs; ++b) out.middleRows(b * bs_antennas, bs_antennas) = at(b, k);
  return out;
}

std::uint64_t fingerprint(const ChannelSet& channels) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  auto mix = [&hash](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      hash ^= p[i];
      hash *= 0x100000001b3ULL;
    }
  };
  const int dims[4] = {channels.num_bs, channels.num_ue, channels.bs_antennas, channels.ue_antennas};
  mix(dims, sizeof dims);
  for (const auto& m : channels.h) mix(m.data(), static_cast<std::size_t>(m.size()) * sizeof(cd));
  return hash;
}

Geometry build_geometry(const ScenarioConfig& config, Rng& rng) {
  if (!is_perfect_square(config.num_bs)) throw ConfigError("num_bs must be a perfect square (square BS grid)");
  const int side = integer_sqrt(config.num_bs);
  const double s = config.grid_spacing;

  Geometry geo;
  geo.bs_positions.reserve(static_cast<std::size_t>(config.num_bs));
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) geo.bs_positions.push_back({i * s, j * s});

  // UEs are uniform over the square spanned by the grid; a single BS gets
  // a square of one spacing centred on it.
  double lo = 0.0;
  double hi = (side - 1) * s;
  if (side == 1) {
    lo = -s / 2;
    hi = s / 2;
  }
  std::uniform_real_distribution<double> coord(lo, hi);
  geo.ue_positions.reserve(static_cast<std::size_t>(config.num_ue));
  for (int k = 0; k < config.num_ue; ++k) {
    const double x = coord(rng);
    const double y = coord(rng);
    geo.ue_positions.push_back({x, y});
  }

  geo.distance.resize(config.num_bs, config.num_ue);
  for (int b = 0; b < config.num_bs; ++b)
    for (int k = 0; k < config.num_ue; ++k) {
      const auto& p = geo.bs_positions[static_cast<std::size_t>(b)];
      const auto& q = geo.ue_positions[static_cast<std::size_t>(k)];
      geo.distance(b, k) = std::max(kMinDistance, std::hypot(p.x - q.x, p.y - q.y));
    }
  return geo;
}

Grouping assign_groups(const ScenarioConfig& config, Rng& rng, const Geometry* geometry) {
  const int K = config.num_ue;
  const int G = config.num_groups;
  if (G <= 0 || G > K) throw ConfigError("num_groups must lie in [1, num_ue]");

  std::vector<int> order(static_cast<std::size_t>(K));
  std::iota(order.begin(), order.end(), 0);

  if (config.grouping == GroupingStrategy::RandomEqual) {
    if (K % G != 0) {
      std::ostringstream os;
      os << "num_ue (" << K << ") is not divisible by num_groups (" << G << ")";
      throw ConfigError(os.str());
    }
    std::shuffle(order.begin(), order.end(), rng);
  } else {
    if (geometry == nullptr) throw ConfigError("geographic grouping needs the geometry");
    // Sort by polar angle around the area centre so neighbours share a group.
    double cx = 0, cy = 0;
    for (const auto& p : geometry->ue_positions) {
      cx += p.x;
      cy += p.y;
    }
    cx /= K;
    cy /= K;
    std::vector<double> angle(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      const auto& p = geometry->ue_positions[static_cast<std::size_t>(k)];
      angle[static_cast<std::size_t>(k)] = std::atan2(p.y - cy, p.x - cx);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return angle[static_cast<std::size_t>(a)] < angle[static_cast<std::size_t>(b)]; });
  }

  // Contiguous chunks of the ordering; sizes differ by at most one.
  std::vector<std::vector<int>> members(static_cast<std::size_t>(G));
  for (int i = 0; i < K; ++i) members[static_cast<std::size_t>(static_cast<long>(i) * G / K)].push_back(order[static_cast<std::size_t>(i)]);
  return make_grouping(std::move(members), K);
}

double path_gain(double distance_m, const ScenarioConfig& config) {
  if (!(distance_m > 0.0)) throw DomainError("path_gain: distance must be positive");
  return db_to_linear(config.pathloss_offset_db - config.pathloss_exponent_coeff * std::log10(distance_m));
}

ChannelSet draw_channels(const Geometry& geometry, const ScenarioConfig& config, Rng& rng) {
  const int B = config.num_bs;
  const int K = config.num_ue;
  ChannelSet ch(B, K, config.num_bs_antennas, config.num_ue_antennas);
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < K; ++k) {
      const double delta = path_gain(geometry.distance(b, k), config);
      ch.large_scale(b, k) = delta;
      ch.at(b, k) = complex_normal_matrix(rng, config.num_bs_antennas, config.num_ue_antennas, delta);
    }
  return ch;
}

}  // namespace cfmm
