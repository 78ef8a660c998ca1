#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "countsel/report.hpp"

namespace {

using namespace countsel;

constexpr int kUsageError = 2;

// Seed precedence: config file, then COUNTSEL_SEED, then --seed.
void apply_seed(SimulationConfig& cfg, const std::optional<std::uint64_t>& flag) {
  if (const char* env = std::getenv("COUNTSEL_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const std::string s(env);
      const auto v = std::stoull(s, &used);
      if (used != s.size() || s.front() == '-') throw std::invalid_argument(s);
      cfg.seed = v;
    } catch (const std::exception&) {
      throw InputError(std::string("COUNTSEL_SEED '") + env + "' is not an unsigned integer");
    }
  }
  if (flag) cfg.seed = *flag;
}

int cmd_fit(const std::string& input, const std::string& family, double alpha,
            const std::string& wald_form) {
  std::ifstream in(input);
  if (!in) throw InputError("cannot open input '" + input + "'");
  FitReportOptions opt;
  opt.alpha = alpha;
  opt.wald_form = parse_wald_form(wald_form);
  if (!family.empty()) opt.family = parse_family(family);
  const CountDataset data = read_dataset_csv(in, input);
  write_fit_report(std::cout, data, opt);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Count-regression model selection: fits, diagnostics and simulation"};
  app.require_subcommand(1);

  auto* fit = app.add_subcommand("fit", "Fit Poisson/NB/ZIP/ZINB to a y,x CSV");
  std::string input, family, wald_form = "chisq";
  double alpha = 0.05;
  fit->add_option("--input", input, "CSV with header y,x")->required();
  fit->add_option("--family", family, "pois, nb, zip or zinb (default: all)")
      ->check(CLI::IsMember({"pois", "nb", "zip", "zinb"}));
  fit->add_option("--alpha", alpha, "Significance level")->check(CLI::Range(1e-12, 1.0 - 1e-12));
  fit->add_option("--wald-form", wald_form, "chisq, f or mixed")
      ->check(CLI::IsMember({"chisq", "f", "mixed"}));

  auto* sim = app.add_subcommand("simulate", "Run the simulation grid and write reports");
  std::string config_path, out_dir = "countsel_out";
  std::optional<int> reps, workers;
  std::optional<std::uint64_t> seed;
  std::vector<int> trees;
  sim->add_option("--config", config_path, "key=value configuration file")->required();
  sim->add_option("--reps", reps, "Replications per scenario")->check(CLI::PositiveNumber);
  sim->add_option("--seed", seed, "Base seed (overrides config and COUNTSEL_SEED)");
  sim->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  sim->add_option("--out", out_dir, "Output directory");
  sim->add_option("--scenario-tree", trees, "Scenario ids for tree_<id>.txt reports");

  auto* dump = app.add_subcommand("dump", "Write one simulated dataset as a y,x CSV");
  std::string dump_config, dump_out;
  int dump_scenario = 1, dump_rep = 0;
  std::optional<std::uint64_t> dump_seed;
  dump->add_option("--config", dump_config, "key=value configuration file")->required();
  dump->add_option("--scenario", dump_scenario, "Scenario id")->required();
  dump->add_option("--rep", dump_rep, "Replication index (0-based)")->required();
  dump->add_option("--seed", dump_seed, "Base seed");
  dump->add_option("--output", dump_out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (fit->parsed()) return cmd_fit(input, family, alpha, wald_form);

    if (sim->parsed()) {
      SimulationConfig cfg = load_config(config_path);
      apply_seed(cfg, seed);
      if (reps) cfg.reps = *reps;
      if (workers) cfg.workers = *workers;
      if (!trees.empty()) cfg.tree_scenarios = trees;
      run_simulation(cfg, out_dir, &std::cerr);
      std::cout << "wrote results to " << out_dir << "\n";
      return 0;
    }

    if (dump->parsed()) {
      SimulationConfig cfg = load_config(dump_config);
      apply_seed(cfg, dump_seed);
      const auto grid = build_grid(cfg.levels, cfg.reps, cfg.seed, cfg.x_sd);
      if (dump_scenario < 1 || dump_scenario > static_cast<int>(grid.size())) {
        throw InputError("scenario " + std::to_string(dump_scenario) + " is not in the grid");
      }
      const ScenarioConfig& sc = grid[static_cast<std::size_t>(dump_scenario - 1)];
      if (dump_rep < 0 || dump_rep >= sc.reps) {
        throw InputError("rep must be in [0, " + std::to_string(sc.reps) + ")");
      }
      const CountDataset data = simulate_dataset(sc, dump_rep);
      if (dump_out.empty()) {
        write_dataset_csv(std::cout, data);
      } else {
        std::ofstream out(dump_out);
        if (!out) throw InputError("cannot write '" + dump_out + "'");
        write_dataset_csv(out, data);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "countsel: " << e.what() << "\n";
    return kUsageError;
  }
  return kUsageError;
}
