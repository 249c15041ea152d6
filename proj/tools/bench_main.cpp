#include "spnav/experiment.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace {

using namespace spnav;

std::vector<StrategySpec> parse_strategies(const std::string& csv, int budget) {
  std::vector<StrategySpec> out;
  std::stringstream ss(csv);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    const auto kind = strategy_from_token(token);
    if (!kind) throw CLI::ValidationError("--strategies", "unknown strategy '" + token + "'");
    StrategySpec spec;
    spec.kind = *kind;
    spec.budget = budget;
    out.push_back(spec);
  }
  if (out.empty()) throw CLI::ValidationError("--strategies", "no strategies given");
  return out;
}

int cmd_table(const std::string& report_dir) {
  const auto path = std::filesystem::path(report_dir) / "results.csv";
  std::ifstream in(path);
  if (!in) {
    std::cerr << "table: cannot open " << path << "\n";
    return 1;
  }
  std::string line;
  std::getline(in, line);  // header
  struct Acc {
    int n = 0;
    double trans = 0.0, rot = 0.0;
  };
  std::map<std::string, Acc> acc;
  while (std::getline(in, line)) {
    std::stringstream row(line);
    std::string strategy, budget, seed, trans, rot;
    std::getline(row, strategy, ',');
    std::getline(row, budget, ',');
    std::getline(row, seed, ',');
    std::getline(row, trans, ',');
    std::getline(row, rot, ',');
    auto& a = acc[strategy];
    a.n++;
    a.trans += std::stod(trans);
    a.rot += std::stod(rot);
  }

  std::map<std::string, double> time_per_iter;
  std::ifstream tin(std::filesystem::path(report_dir) / "timings.json");
  if (tin) {
    nlohmann::json j;
    tin >> j;
    for (const auto& row : j.value("aggregate", nlohmann::json::array())) {
      time_per_iter[row.at("strategy")] = row.at("mean_time_per_iteration_s");
    }
  }

  std::printf("%-18s %14s %14s %14s\n", "Strategy", "Trans. RMSE [m]", "Rot. RMSE [deg]",
              "Time/iter [s]");
  std::printf("%s\n", std::string(64, '-').c_str());
  for (const auto& [name, a] : acc) {
    std::printf("%-18s %14.4f %14.4f %14.4f\n", name.c_str(), a.trans / a.n, a.rot / a.n,
                time_per_iter.count(name) ? time_per_iter[name] : 0.0);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sliding-window point/line/plane inertial estimator benchmark"};
  app.require_subcommand(1);

  std::string scenario_path = "default";
  std::string strategies_csv = "p-ins,pl-ins,plp-ins,spins-rand,spins-all";
  std::string out_dir = "bench_out";
  int runs = 0;
  int budget = 20;
  int workers = 0;
  bool sweep = false;

  auto* run = app.add_subcommand("run", "Run the Monte-Carlo strategy comparison");
  run->add_option("--scenario", scenario_path, "Scenario JSON file, or 'default'");
  run->add_option("--strategies", strategies_csv, "Comma-separated strategy list");
  run->add_option("--runs", runs, "Monte-Carlo runs per strategy (0 = scenario default)");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--budget", budget, "Structure-prior budget k for budgeted strategies");
  run->add_option("--workers", workers, "Worker threads (0 = SPNAV_WORKERS or hardware)");
  run->add_flag("--sweep", sweep, "Also sweep RMSE/time against the prior budget");

  std::string report_dir;
  auto* table = app.add_subcommand("table", "Render the strategy table from a report directory");
  table->add_option("--report", report_dir, "Report directory written by 'run'")->required();

  std::string scenario_out;
  auto* init = app.add_subcommand("scenario", "Write the built-in default scenario to a file");
  init->add_option("--out", scenario_out, "Destination JSON path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (table->parsed()) return cmd_table(report_dir);
    if (init->parsed()) {
      spnav::ScenarioConfig::builtin_default().save(scenario_out);
      std::cout << "wrote " << scenario_out << "\n";
      return 0;
    }

    const spnav::ScenarioConfig scenario = scenario_path == "default"
                                               ? spnav::ScenarioConfig::builtin_default()
                                               : spnav::ScenarioConfig::load(scenario_path);
    const auto strategies = parse_strategies(strategies_csv, budget);
    const int n_runs = runs > 0 ? runs : scenario.default_runs;

    const auto report = spnav::run_experiment(scenario, strategies, n_runs, out_dir, workers);
    std::cout << spnav::format_table(report);
    if (sweep) {
      spnav::run_sweep(scenario, {0, 5, 10, 20, 40, -1}, n_runs, out_dir, workers);
      std::cout << "sweep written to " << out_dir << "/sweep.csv\n";
    }
    std::cout << "report written to " << out_dir << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
