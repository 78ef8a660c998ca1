#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "countsel/simharness.hpp"

namespace countsel {

/// Bad user input; the message carries the source name and line number.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimulationConfig {
  GridLevels levels;
  int reps = 5000;
  std::uint64_t seed = 20190101;
  double x_sd = 10.0;
  double alpha = 0.05;
  WaldForm wald_form = WaldForm::Mixed;
  int workers = 1;
  bool full_scale = false;
  std::vector<int> tree_scenarios;
};

inline constexpr int kFullScaleReps = 15000;

/// Flat key=value text, '#' comments, lists as `n=50,100,250`, phi accepts
/// `inf` and fractions such as `1/3`. `full_scale=true` selects the complete
/// grid at 15000 replications.
SimulationConfig parse_config(std::istream& in, const std::string& source = "config");
SimulationConfig load_config(const std::filesystem::path& path);

/// Reads a `y,x` CSV (header required). Throws InputError naming the line.
CountDataset read_dataset_csv(std::istream& in, const std::string& source = "input");

// --- reports -------------------------------------------------------------------

/// table1.csv: five rows per scenario, columns Poisson, ZIP, NB, ZINB.
void write_table1_csv(std::ostream& out, const std::vector<ScenarioConfig>& scenarios,
                      const std::vector<Tally>& tallies);

/// Node counts per 100 datasets of the seven-step tree next to the counts
/// expected under independent level-alpha tests, with lowest-AIC counts.
void write_tree_report(std::ostream& out, const ScenarioConfig& sc, const Tally& tally,
                       double alpha);

/// Figure names understood by write_panels.
const std::vector<std::string>& panel_figures();

/// One `panel_<figure>_<phi>_<omega>.csv` (columns n,beta0,rate) per figure
/// and (phi, omega) cell. Returns the file names written.
std::vector<std::string> write_panels(const std::filesystem::path& dir,
                                      const std::vector<ScenarioConfig>& scenarios,
                                      const std::vector<Tally>& tallies);

struct FitReportOptions {
  std::optional<FamilyKind> family;
  double alpha = 0.05;
  WaldForm wald_form = WaldForm::ChiSquare;
};

/// Human-readable fits, Wald tests, diagnostics and both selection outcomes.
void write_fit_report(std::ostream& out, const CountDataset& data,
                      const FitReportOptions& options = {});

/// Runs the grid and writes results.csv, manifest.csv, table1.csv, panels and
/// tree reports into `dir`. Progress goes to `log` when given.
std::vector<Tally> run_simulation(const SimulationConfig& config,
                                  const std::filesystem::path& dir,
                                  std::ostream* log = nullptr);

}  // namespace countsel
