#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "countsel/selection.hpp"

namespace countsel {

/// Grid levels. phi may be +infinity (no overdispersion).
struct GridLevels {
  std::vector<int> n{50, 100, 250, 500, 1000, 2000};
  std::vector<double> beta0{0.5, 1.0, 1.5, 2.0, 2.5};
  std::vector<double> phi{kInfinity, 2.0, 1.0, 0.5, 1.0 / 3.0};
  std::vector<double> omega{0.0, 0.05, 0.1, 0.2, 0.5};

  /// Throws std::invalid_argument on empty lists or out-of-range values.
  void check() const;
};

/// Poisson, NB2, ZIP or ZINB according to whether phi is finite and omega > 0.
FamilyKind implied_family(double phi, double omega);

struct ScenarioConfig {
  int scenario_id = 1;
  int n = 50;
  double beta0 = 0.5;
  double phi = kInfinity;  ///< nu / lambda
  double omega = 0.0;
  FamilyKind implied_family = FamilyKind::Poisson;
  int reps = 1;
  std::uint64_t base_seed = 0;
  double x_sd = 10.0;

  double lambda() const;
  double nu() const;  ///< phi * lambda, +infinity when phi is
  DistParams dist_params() const;
};

/// Cartesian product of the levels. Ids are 1-based with n varying fastest,
/// then beta0, then phi, then omega.
std::vector<ScenarioConfig> build_grid(const GridLevels& levels, int reps,
                                       std::uint64_t base_seed, double x_sd = 10.0);

/// Dataset of replication `rep`; a pure function of (base_seed, scenario_id, rep).
CountDataset simulate_dataset(const ScenarioConfig& sc, int rep);

struct AnalysisOptions {
  double alpha = 0.05;
  WaldForm wald_form = WaldForm::Mixed;
};

struct ReplicationRecord {
  int scenario_id = 0;
  int rep = 0;
  std::array<SelectionTrace, 2> traces;  ///< indexed by PolicyKind
  std::array<double, 4> wald_p{};
  std::array<double, 4> aic{};
  std::array<bool, 4> converged{};
  double dl_p = 1.0;
  bool vuong_pois_zip_toward_zi = false;
  bool vuong_nb_zinb_toward_zi = false;
};

ReplicationRecord run_replication(const ScenarioConfig& sc, int rep,
                                  const AnalysisOptions& options = {});

/// Integer counts over replications; merging is exact in any order.
struct Tally {
  std::uint64_t reps = 0;
  std::array<std::array<std::uint64_t, 4>, 2> selected{};
  std::array<std::array<std::uint64_t, 4>, 2> rejected{};
  std::array<std::uint64_t, 2> fallback{};
  std::array<std::uint64_t, 4> model_reject{};  ///< each family's own Wald test
  std::array<std::uint64_t, 4> model_failed{};
  std::uint64_t dl_reject = 0;
  std::uint64_t vuong_pois_zip_reject = 0;
  std::uint64_t vuong_nb_zinb_reject = 0;

  void add(const ReplicationRecord& r, double alpha);
  void merge(const Tally& other);
  bool operator==(const Tally&) const = default;
};

struct PolicyRates {
  std::array<double, 4> selection_prob{};
  std::array<std::optional<double>, 4> conditional_reject;
  double type1 = 0.0;
  double mc_se = 0.0;
  double fallback_rate = 0.0;
};

struct AggregateRates {
  std::uint64_t reps = 0;
  std::array<PolicyRates, 2> policy;  ///< indexed by PolicyKind
  std::array<double, 4> model_reject{};
  double dl_reject = 0.0;
  double vuong_pois_zip_reject = 0.0;
  double vuong_nb_zinb_reject = 0.0;
};

AggregateRates rates(const Tally& t);
AggregateRates aggregate(const std::vector<ReplicationRecord>& records, double alpha = 0.05);

double mc_se(double p, std::uint64_t reps);

struct RunOptions {
  AnalysisOptions analysis;
  int workers = 1;
  /// Called from worker threads as replications finish (done, total).
  std::function<void(std::uint64_t, std::uint64_t)> progress;
};

/// All replications of every scenario; one Tally per scenario, in input order.
std::vector<Tally> run_scenarios(const std::vector<ScenarioConfig>& scenarios,
                                 const RunOptions& options = {});

// --- CSV output --------------------------------------------------------------

/// Shortest round-trip decimal form; "inf" for +infinity.
std::string format_number(double v);

void write_manifest_csv(std::ostream& out, const std::vector<ScenarioConfig>& scenarios);
void write_results_csv(std::ostream& out, const std::vector<ScenarioConfig>& scenarios,
                       const std::vector<Tally>& tallies);

/// `y,x` CSV with %.17g covariates, readable by the `fit` command.
void write_dataset_csv(std::ostream& out, const CountDataset& data);

}  // namespace countsel
