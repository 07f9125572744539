#include "cfmm/config_io.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace cfmm {

using nlohmann::json;

namespace {

const char* to_string(GroupingStrategy g) { return g == GroupingStrategy::RandomEqual ? "random_equal" : "geographic"; }
const char* to_string(PilotScheme p) { return p == PilotScheme::Dft ? "dft" : "canonical"; }

GroupingStrategy parse_grouping(const std::string& s) {
  if (s == "random_equal") return GroupingStrategy::RandomEqual;
  if (s == "geographic") return GroupingStrategy::Geographic;
  throw ConfigError("unknown grouping strategy '" + s + "'");
}

PilotScheme parse_pilot_scheme(const std::string& s) {
  if (s == "dft") return PilotScheme::Dft;
  if (s == "canonical") return PilotScheme::Canonical;
  throw ConfigError("unknown pilot scheme '" + s + "'");
}

// Noise powers accept null for a noiseless link (-inf dBm).
double noise_from_json(const json& v) {
  if (v.is_null()) return -std::numeric_limits<double>::infinity();
  return v.get<double>();
}

json noise_to_json(double dbm) {
  if (std::isinf(dbm) && dbm < 0) return nullptr;
  return dbm;
}

}  // namespace

ScenarioConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  ScenarioConfig c = desk_preset();
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const json& v = it.value();
    try {
      if (key == "num_bs") c.num_bs = v.get<int>();
      else if (key == "num_bs_antennas") c.num_bs_antennas = v.get<int>();
      else if (key == "num_ue") c.num_ue = v.get<int>();
      else if (key == "num_ue_antennas") c.num_ue_antennas = v.get<int>();
      else if (key == "num_groups") c.num_groups = v.get<int>();
      else if (key == "grid_spacing") c.grid_spacing = v.get<double>();
      else if (key == "pathloss_offset_db") c.pathloss_offset_db = v.get<double>();
      else if (key == "pathloss_exponent_coeff") c.pathloss_exponent_coeff = v.get<double>();
      else if (key == "rho_bs_dbm") c.rho_bs_dbm = v.get<double>();
      else if (key == "rho_ue_dbm") c.rho_ue_dbm = v.get<double>();
      else if (key == "noise_bs_dbm") c.noise_bs_dbm = noise_from_json(v);
      else if (key == "noise_ue_dbm") c.noise_ue_dbm = noise_from_json(v);
      else if (key == "tau") c.tau = v.get<int>();
      else if (key == "alpha") c.alpha = v.get<double>();
      else if (key == "mu_weights") c.mu_weights = v.get<std::vector<double>>();
      else if (key == "num_iterations") c.num_iterations = v.get<int>();
      else if (key == "r_tot") c.r_tot = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "num_drops") c.num_drops = v.get<int>();
      else if (key == "sumgroup_inner_steps") c.sumgroup_inner_steps = v.get<int>();
      else if (key == "subgradient_step0") c.subgradient_step0 = v.get<double>();
      else if (key == "power_max_sweeps") c.power_max_sweeps = v.get<int>();
      else if (key == "grouping") c.grouping = parse_grouping(v.get<std::string>());
      else if (key == "pilot_scheme") c.pilot_scheme = parse_pilot_scheme(v.get<std::string>());
      else throw ConfigError("unknown config key '" + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError("bad value for config key '" + key + "': " + e.what());
    }
  }
  validate(c);
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_json(const ScenarioConfig& c) {
  // ordered_json keeps the field order of the struct.
  nlohmann::ordered_json j;
  j["num_bs"] = c.num_bs;
  j["num_bs_antennas"] = c.num_bs_antennas;
  j["num_ue"] = c.num_ue;
  j["num_ue_antennas"] = c.num_ue_antennas;
  j["num_groups"] = c.num_groups;
  j["grid_spacing"] = c.grid_spacing;
  j["pathloss_offset_db"] = c.pathloss_offset_db;
  j["pathloss_exponent_coeff"] = c.pathloss_exponent_coeff;
  j["rho_bs_dbm"] = c.rho_bs_dbm;
  j["rho_ue_dbm"] = c.rho_ue_dbm;
  j["noise_bs_dbm"] = noise_to_json(c.noise_bs_dbm);
  j["noise_ue_dbm"] = noise_to_json(c.noise_ue_dbm);
  j["tau"] = c.tau;
  j["alpha"] = c.alpha;
  j["mu_weights"] = c.mu_weights;
  j["num_iterations"] = c.num_iterations;
  j["r_tot"] = c.r_tot;
  j["seed"] = c.seed;
  j["num_drops"] = c.num_drops;
  j["sumgroup_inner_steps"] = c.sumgroup_inner_steps;
  j["subgradient_step0"] = c.subgradient_step0;
  j["power_max_sweeps"] = c.power_max_sweeps;
  j["grouping"] = to_string(c.grouping);
  j["pilot_scheme"] = to_string(c.pilot_scheme);
  return j.dump(2);
}

std::uint64_t fingerprint(const ScenarioConfig& config) {
  const std::string text = to_json(config);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    hash ^= ch;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace cfmm
