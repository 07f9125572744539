#include "cfmm/config_io.hpp"
#include "cfmm/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

cfmm::ScenarioConfig config_from(const std::string& path) {
  return path.empty() ? cfmm::desk_preset() : cfmm::load_config(path);
}

void print_final(const cfmm::ResultTable& table) {
  int last = 0;
  for (const auto& row : table.summary) last = std::max(last, row.iteration);
  std::printf("%-24s %10s %12s %12s %10s %6s\n", "method", "rho_dbm", "R", "R_eff", "std R", "drops");
  for (const auto& row : table.summary)
    if (row.iteration == last)
      std::printf("%-24s %10.2f %12.4f %12.4f %10.4f %6d\n", row.method.c_str(), row.rho_bs_dbm, row.mean_rate,
                  row.mean_effective_rate, row.std_rate, row.drops);
}

int finish(const cfmm::ResultTable& table, const std::string& out) {
  cfmm::write_results(table, out);
  print_final(table);
  if (!table.failures.empty()) {
    std::cerr << table.failures.size() << " drop(s) aborted; results are partial\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cell-free multi-group multicast beamforming simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string methods = "best_response,group_specific,local_mmse";
  std::string out = "results.csv";
  int workers = 0;

  auto* run = app.add_subcommand("run", "Monte Carlo run of the selected methods");
  run->add_option("--config", config_path, "JSON configuration (desk profile if omitted)");
  run->add_option("--methods", methods, "comma-separated method names");
  run->add_option("--out", out, "CSV output path");
  run->add_option("--workers", workers, "worker threads (default: CFMM_WORKERS or all cores)");

  std::vector<double> rho_list;
  auto* sweep = app.add_subcommand("sweep", "run over a list of BS transmit powers");
  sweep->add_option("--config", config_path, "JSON configuration (desk profile if omitted)");
  sweep->add_option("--rho-bs", rho_list, "BS power levels in dBm")->required()->delimiter(',');
  sweep->add_option("--methods", methods, "comma-separated method names");
  sweep->add_option("--out", out, "CSV output path");
  sweep->add_option("--workers", workers, "worker threads");

  std::string preset_name = "desk";
  auto* preset = app.add_subcommand("preset", "print a preset configuration as JSON");
  preset->add_option("--name", preset_name, "paper | desk")->check(CLI::IsMember({"paper", "desk"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto table = cfmm::run_experiment(config_from(config_path), cfmm::parse_methods(methods), workers);
      return finish(table, out);
    }
    if (*sweep) {
      const auto table =
          cfmm::sweep_power(config_from(config_path), rho_list, cfmm::parse_methods(methods), workers);
      return finish(table, out);
    }
    if (*preset) {
      std::cout << cfmm::to_json(preset_name == "paper" ? cfmm::paper_preset() : cfmm::desk_preset()) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
