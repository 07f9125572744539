#include <doctest.h>

#include "cfmm/config_io.hpp"
#include "cfmm/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace cfmm;

namespace {

ScenarioConfig small(int B, int K, int G) {
  ScenarioConfig c;
  c.num_bs = B;
  c.num_ue = K;
  c.num_groups = G;
  return c;
}

}  // namespace

TEST_CASE("geometry: four BSs sit on a 100 m square") {
  Rng rng(7);
  const Geometry g = build_geometry(small(4, 4, 2), rng);
  std::set<std::pair<double, double>> got;
  for (const auto& p : g.bs_positions) got.insert({p.x, p.y});
  const std::set<std::pair<double, double>> want{{0, 0}, {0, 100}, {100, 0}, {100, 100}};
  CHECK(got == want);
}

TEST_CASE("geometry: 5x5 grid spans 400 sqrt(2) m") {
  Rng rng(1);
  const Geometry g = build_geometry(small(25, 8, 4), rng);
  double widest = 0;
  for (const auto& a : g.bs_positions)
    for (const auto& b : g.bs_positions) widest = std::max(widest, std::hypot(a.x - b.x, a.y - b.y));
  CHECK(widest == doctest::Approx(400.0 * std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("geometry: UEs inside the grid, distances floored, seeded") {
  const ScenarioConfig c = small(9, 40, 4);
  Rng a(3), b(3);
  const Geometry g1 = build_geometry(c, a);
  const Geometry g2 = build_geometry(c, b);
  for (std::size_t k = 0; k < g1.ue_positions.size(); ++k) {
    CHECK(g1.ue_positions[k].x == g2.ue_positions[k].x);
    CHECK(g1.ue_positions[k].y == g2.ue_positions[k].y);
    CHECK(g1.ue_positions[k].x >= 0.0);
    CHECK(g1.ue_positions[k].x <= 200.0);
  }
  CHECK(g1.distance.minCoeff() >= kMinDistance);
}

TEST_CASE("geometry: non-square BS count is rejected") {
  Rng rng(1);
  CHECK_THROWS_AS(build_geometry(small(8, 8, 4), rng), ConfigError);
  CHECK_THROWS_AS(validate(small(8, 8, 4)), ConfigError);
}

TEST_CASE("grouping: 32 UEs into 8 groups of 4") {
  Rng rng(11);
  const Grouping g = assign_groups(small(9, 32, 8), rng);
  CHECK(is_partition(g));
  REQUIRE(g.num_groups() == 8);
  for (const auto& m : g.members) CHECK(m.size() == 4);
  for (int k = 0; k < 32; ++k) {
    const auto& m = g.members[static_cast<std::size_t>(g.group_of[static_cast<std::size_t>(k)])];
    CHECK(std::find(m.begin(), m.end(), k) != m.end());
  }
}

TEST_CASE("grouping: K == G gives singletons") {
  Rng rng(2);
  const Grouping g = assign_groups(small(4, 6, 6), rng);
  CHECK(is_partition(g));
  std::set<int> groups(g.group_of.begin(), g.group_of.end());
  CHECK(groups.size() == 6);
  for (const auto& m : g.members) CHECK(m.size() == 1);
}

TEST_CASE("grouping: K not divisible by G under equal-size strategy") {
  Rng rng(2);
  CHECK_THROWS_AS(assign_groups(small(4, 8, 3), rng), ConfigError);
}

TEST_CASE("grouping: geographic strategy still partitions") {
  ScenarioConfig c = small(9, 10, 3);
  c.grouping = GroupingStrategy::Geographic;
  Rng rng(5);
  const Geometry geo = build_geometry(c, rng);
  const Grouping g = assign_groups(c, rng, &geo);
  CHECK(is_partition(g));
  for (const auto& m : g.members) CHECK(m.size() >= 3);
}

TEST_CASE("grouping: partition check catches overlap and gaps") {
  Grouping g;
  g.members = {{0, 1}, {1, 2}};
  g.group_of = {0, 0, 1};
  CHECK_FALSE(is_partition(g));
  g.members = {{0}, {2}};
  CHECK_FALSE(is_partition(g));
}

TEST_CASE("path gain follows the log-distance law") {
  const ScenarioConfig c;
  CHECK(path_gain(1.0, c) == doctest::Approx(std::pow(10.0, -4.8)).epsilon(1e-12));
  CHECK(10 * std::log10(path_gain(10.0, c)) == doctest::Approx(-78.0).epsilon(1e-12));
  CHECK(10 * std::log10(path_gain(100.0, c)) == doctest::Approx(-108.0).epsilon(1e-12));
  double prev = path_gain(1.0, c);
  for (double d = 1.5; d < 2000; d *= 1.5) {
    const double g = path_gain(d, c);
    CHECK(g < prev);
    prev = g;
  }
  CHECK_THROWS_AS(path_gain(0.0, c), DomainError);
  CHECK_THROWS_AS(path_gain(-3.0, c), DomainError);
}

TEST_CASE("channels: zero variance gives zero matrices") {
  Rng rng(1);
  const CMat h = complex_normal_matrix(rng, 4, 2, 0.0);
  CHECK(h.norm() == 0.0);
}

TEST_CASE("channels: entry power matches the large-scale gain") {
  // 1e5 entries; the sample mean of |h|^2 for CN(0, d) has relative
  // standard deviation 1/sqrt(1e5) ~ 0.3%, so 2% is a wide bound.
  Rng rng(99);
  const double delta = 3.7e-9;
  const CMat h = complex_normal_matrix(rng, 1000, 100, delta);
  const double mean = h.cwiseAbs2().mean();
  CHECK(std::abs(mean / delta - 1.0) < 0.02);
  // Circular symmetry: real and imaginary parts carry half each.
  const double re = h.real().array().square().mean();
  CHECK(std::abs(re / (delta / 2) - 1.0) < 0.02);
}

TEST_CASE("channels: drawn per BS-UE pair with the path gain, reproducibly") {
  const ScenarioConfig c = small(4, 4, 2);
  Rng g(5);
  const Geometry geo = build_geometry(c, g);
  Rng a(8), b(8);
  const ChannelSet c1 = draw_channels(geo, c, a);
  const ChannelSet c2 = draw_channels(geo, c, b);
  CHECK(fingerprint(c1) == fingerprint(c2));
  for (int bs = 0; bs < 4; ++bs)
    for (int k = 0; k < 4; ++k) {
      CHECK(c1.at(bs, k) == c2.at(bs, k));
      CHECK(c1.large_scale(bs, k) == path_gain(geo.distance(bs, k), c));
      CHECK(c1.at(bs, k).rows() == c.num_bs_antennas);
      CHECK(c1.at(bs, k).cols() == c.num_ue_antennas);
    }
  Rng d(9);
  CHECK(fingerprint(draw_channels(geo, c, d)) != fingerprint(c1));
}

TEST_CASE("channels: aggregated channel stacks the BS blocks") {
  ChannelSet ch(3, 2, 2, 1);
  for (int b = 0; b < 3; ++b)
    for (int k = 0; k < 2; ++k) ch.at(b, k) = CMat::Constant(2, 1, cd(b, k));
  const CMat agg = ch.aggregated(1);
  REQUIRE(agg.rows() == 6);
  for (int b = 0; b < 3; ++b) CHECK(agg(2 * b, 0) == cd(b, 1));
}

TEST_CASE("link budget converts dBm once") {
  const LinkBudget lb = link_budget(desk_preset());
  CHECK(lb.noise_bs == doctest::Approx(3.162e-13).epsilon(1e-3));
  CHECK(lb.rho_bs == doctest::Approx(1.0));
  CHECK(lb.rho_ue == doctest::Approx(0.1));
}

TEST_CASE("validation rejects bad knobs") {
  ScenarioConfig c;
  c.alpha = 0.0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = ScenarioConfig{};
  c.alpha = 1.5;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = ScenarioConfig{};
  c.mu_weights = {1, 1, 1, 1, 1, 1, 1, 0};
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = ScenarioConfig{};
  c.mu_weights = {1, 2};
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = ScenarioConfig{};
  c.rho_bs_dbm = INFINITY;
  CHECK_THROWS_AS(validate(c), ConfigError);
  CHECK_NOTHROW(validate(desk_preset()));
  CHECK_NOTHROW(validate(paper_preset()));
}

TEST_CASE("full-size preset dimensions") {
  const ScenarioConfig c = paper_preset();
  CHECK(c.num_bs == 25);
  CHECK(c.num_bs_antennas == 8);
  CHECK(c.num_ue == 32);
  CHECK(c.num_groups == 8);
  CHECK(c.r_tot == 1000);
}

TEST_CASE("config: canonical JSON round-trips") {
  ScenarioConfig c = paper_preset();
  c.mu_weights.assign(32, 0.5);
  c.noise_bs_dbm = -INFINITY;
  c.pilot_scheme = PilotScheme::Canonical;
  c.seed = 0xfeedfacecafebeefULL;
  const ScenarioConfig back = parse_config(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(fingerprint(back) == fingerprint(c));
  CHECK(std::isinf(back.noise_bs_dbm));
  CHECK(back.seed == c.seed);
}

TEST_CASE("config: absent keys keep defaults, unknown keys fail") {
  const ScenarioConfig c = parse_config(R"({"num_drops": 3, "alpha": 0.25})");
  CHECK(c.num_drops == 3);
  CHECK(c.alpha == 0.25);
  CHECK(c.num_bs == desk_preset().num_bs);
  CHECK_THROWS_AS(parse_config(R"({"num_dorps": 3})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"num_bs": "nine"})"), ConfigError);
  CHECK_THROWS_AS(parse_config("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(parse_config("{"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"num_bs": 8})"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/cfg.json"), ConfigError);
}

TEST_CASE("config: fingerprint separates configurations") {
  ScenarioConfig a, b;
  b.seed = 2;
  CHECK(fingerprint(a) != fingerprint(b));
  CHECK(fingerprint(a) == fingerprint(desk_preset()));
}
