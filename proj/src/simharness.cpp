#include "countsel/simharness.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

namespace countsel {

void GridLevels::check() const {
  if (n.empty() || beta0.empty() || phi.empty() || omega.empty()) {
    throw std::invalid_argument("grid level lists must be non-empty");
  }
  for (int v : n) {
    if (v < 2) throw std::invalid_argument("grid n must be >= 2");
  }
  for (double v : beta0) {
    if (!std::isfinite(v)) throw std::invalid_argument("grid beta0 must be finite");
  }
  for (double v : phi) {
    if (!(v > 0.0)) throw std::invalid_argument("grid phi must be positive or inf");
  }
  for (double v : omega) {
    if (!(v >= 0.0 && v < 1.0)) throw std::invalid_argument("grid omega must be in [0,1)");
  }
}

FamilyKind implied_family(double phi, double omega) {
  const bool over = std::isfinite(phi);
  if (omega > 0.0) return over ? FamilyKind::ZINB : FamilyKind::ZIP;
  return over ? FamilyKind::NB2 : FamilyKind::Poisson;
}

double ScenarioConfig::lambda() const { return std::exp(beta0); }

double ScenarioConfig::nu() const {
  return std::isfinite(phi) ? phi * lambda() : kInfinity;
}

DistParams ScenarioConfig::dist_params() const {
  DistParams p;
  p.lambda = lambda();
  p.omega = omega;
  p.nu = nu();
  return p;
}

std::vector<ScenarioConfig> build_grid(const GridLevels& levels, int reps,
                                       std::uint64_t base_seed, double x_sd) {
  levels.check();
  if (reps < 1) throw std::invalid_argument("reps must be >= 1");
  if (!(x_sd > 0.0) || !std::isfinite(x_sd)) throw std::invalid_argument("x_sd must be positive");
  std::vector<ScenarioConfig> out;
  int id = 1;
  for (double omega : levels.omega) {
    for (double phi : levels.phi) {
      for (double beta0 : levels.beta0) {
        for (int n : levels.n) {
          ScenarioConfig sc;
          sc.scenario_id = id++;
          sc.n = n;
          sc.beta0 = beta0;
          sc.phi = phi;
          sc.omega = omega;
          sc.implied_family = implied_family(phi, omega);
          sc.reps = reps;
          sc.base_seed = base_seed;
          sc.x_sd = x_sd;
          out.push_back(sc);
        }
      }
    }
  }
  return out;
}

CountDataset simulate_dataset(const ScenarioConfig& sc, int rep) {
  RngStream rng(sc.base_seed, static_cast<std::uint64_t>(sc.scenario_id),
                static_cast<std::uint64_t>(rep));
  std::normal_distribution<double> norm(0.0, sc.x_sd);
  std::vector<double> x(static_cast<std::size_t>(sc.n));
  for (auto& v : x) v = norm(rng);
  auto y = sample(sc.implied_family, sc.dist_params(), x.size(), rng);
  return CountDataset(std::move(y), std::move(x));
}

ReplicationRecord run_replication(const ScenarioConfig& sc, int rep,
                                  const AnalysisOptions& options) {
  if (rep < 0 || rep >= sc.reps) throw std::out_of_range("replication index out of range");
  const CountDataset data = simulate_dataset(sc, rep);
  const Analysis a = analyze(data, options.alpha, options.wald_form);
  ReplicationRecord r;
  r.scenario_id = sc.scenario_id;
  r.rep = rep;
  r.traces[static_cast<int>(PolicyKind::SevenStep)] = a.seven_step;
  r.traces[static_cast<int>(PolicyKind::LowestAIC)] = a.lowest_aic;
  for (int m = 0; m < 4; ++m) {
    r.wald_p[m] = a.wald[m].p_value;
    r.aic[m] = a.fits[m].aic;
    r.converged[m] = a.fits[m].converged;
  }
  r.dl_p = a.dean_lawless.p_value;
  r.vuong_pois_zip_toward_zi = a.vuong_pois_zip.rejects_toward_zi();
  r.vuong_nb_zinb_toward_zi = a.vuong_nb_zinb.rejects_toward_zi();
  return r;
}

void Tally::add(const ReplicationRecord& r, double alpha) {
  ++reps;
  for (int p = 0; p < 2; ++p) {
    const SelectionTrace& t = r.traces[p];
    const int m = family_index(t.chosen);
    ++selected[p][m];
    if (t.rejected_h0) ++rejected[p][m];
    if (t.fallback_used) ++fallback[p];
  }
  for (int m = 0; m < 4; ++m) {
    if (r.wald_p[m] < alpha) ++model_reject[m];
    if (!r.converged[m]) ++model_failed[m];
  }
  if (r.dl_p < alpha) ++dl_reject;
  if (r.vuong_pois_zip_toward_zi) ++vuong_pois_zip_reject;
  if (r.vuong_nb_zinb_toward_zi) ++vuong_nb_zinb_reject;
}

void Tally::merge(const Tally& o) {
  reps += o.reps;
  for (int p = 0; p < 2; ++p) {
    for (int m = 0; m < 4; ++m) {
      selected[p][m] += o.selected[p][m];
      rejected[p][m] += o.rejected[p][m];
    }
    fallback[p] += o.fallback[p];
  }
  for (int m = 0; m < 4; ++m) {
    model_reject[m] += o.model_reject[m];
    model_failed[m] += o.model_failed[m];
  }
  dl_reject += o.dl_reject;
  vuong_pois_zip_reject += o.vuong_pois_zip_reject;
  vuong_nb_zinb_reject += o.vuong_nb_zinb_reject;
}

double mc_se(double p, std::uint64_t reps) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("mc_se needs p in [0,1]");
  if (reps < 1) throw std::invalid_argument("mc_se needs reps >= 1");
  return std::sqrt(p * (1.0 - p) / static_cast<double>(reps));
}

AggregateRates rates(const Tally& t) {
  if (t.reps == 0) throw std::invalid_argument("no replications to aggregate");
  const double n = static_cast<double>(t.reps);
  AggregateRates a;
  a.reps = t.reps;
  for (int p = 0; p < 2; ++p) {
    PolicyRates& pr = a.policy[p];
    std::uint64_t rej = 0;
    for (int m = 0; m < 4; ++m) {
      pr.selection_prob[m] = static_cast<double>(t.selected[p][m]) / n;
      if (t.selected[p][m] > 0) {
        pr.conditional_reject[m] =
            static_cast<double>(t.rejected[p][m]) / static_cast<double>(t.selected[p][m]);
      }
      rej += t.rejected[p][m];
    }
    pr.type1 = static_cast<double>(rej) / n;
    pr.mc_se = mc_se(pr.type1, t.reps);
    pr.fallback_rate = static_cast<double>(t.fallback[p]) / n;
  }
  for (int m = 0; m < 4; ++m) a.model_reject[m] = static_cast<double>(t.model_reject[m]) / n;
  a.dl_reject = static_cast<double>(t.dl_reject) / n;
  a.vuong_pois_zip_reject = static_cast<double>(t.vuong_pois_zip_reject) / n;
  a.vuong_nb_zinb_reject = static_cast<double>(t.vuong_nb_zinb_reject) / n;
  return a;
}

AggregateRates aggregate(const std::vector<ReplicationRecord>& records, double alpha) {
  Tally t;
  for (const auto& r : records) t.add(r, alpha);
  return rates(t);
}

std::vector<Tally> run_scenarios(const std::vector<ScenarioConfig>& scenarios,
                                 const RunOptions& options) {
  // Task k covers a block of replications of one scenario.
  constexpr int kBlock = 8;
  struct Task {
    std::size_t scenario;
    int first, last;
  };
  std::vector<Task> tasks;
  std::uint64_t total = 0;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    for (int r = 0; r < scenarios[s].reps; r += kBlock) {
      tasks.push_back({s, r, std::min(r + kBlock, scenarios[s].reps)});
    }
    total += static_cast<std::uint64_t>(scenarios[s].reps);
  }

  std::vector<Tally> result(scenarios.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::uint64_t> done{0};
  std::mutex merge_mutex;
  std::exception_ptr failure;

  auto worker = [&] {
    std::vector<Tally> local(scenarios.size());
    try {
      for (std::size_t k; (k = next.fetch_add(1)) < tasks.size();) {
        const Task& task = tasks[k];
        const ScenarioConfig& sc = scenarios[task.scenario];
        for (int r = task.first; r < task.last; ++r) {
          local[task.scenario].add(run_replication(sc, r, options.analysis),
                                   options.analysis.alpha);
        }
        const auto d = done.fetch_add(static_cast<std::uint64_t>(task.last - task.first)) +
                       static_cast<std::uint64_t>(task.last - task.first);
        if (options.progress) options.progress(d, total);
      }
    } catch (...) {
      std::lock_guard lock(merge_mutex);
      if (!failure) failure = std::current_exception();
      next = tasks.size();
    }
    std::lock_guard lock(merge_mutex);
    for (std::size_t s = 0; s < local.size(); ++s) result[s].merge(local[s]);
  };

  const int workers = std::max(1, options.workers);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return result;
}

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_manifest_csv(std::ostream& out, const std::vector<ScenarioConfig>& scenarios) {
  out << "scenario_id,n,beta0,phi,omega,family\n";
  for (const auto& sc : scenarios) {
    out << sc.scenario_id << ',' << sc.n << ',' << format_number(sc.beta0) << ','
        << format_number(sc.phi) << ',' << format_number(sc.omega) << ','
        << family_token(sc.implied_family) << '\n';
  }
}

void write_results_csv(std::ostream& out, const std::vector<ScenarioConfig>& scenarios,
                       const std::vector<Tally>& tallies) {
  if (scenarios.size() != tallies.size()) {
    throw std::invalid_argument("one tally per scenario required");
  }
  out << "scenario_id,n,beta0,phi,omega,family,policy,sel_pois,sel_nb,sel_zip,sel_zinb,"
         "rej_pois,rej_nb,rej_zip,rej_zinb,type1,mc_se,fallback_rate,reps,seed\n";
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const auto& sc = scenarios[s];
    const AggregateRates a = rates(tallies[s]);
    for (PolicyKind p : kAllPolicies) {
      const PolicyRates& pr = a.policy[static_cast<int>(p)];
      out << sc.scenario_id << ',' << sc.n << ',' << format_number(sc.beta0) << ','
          << format_number(sc.phi) << ',' << format_number(sc.omega) << ','
          << family_token(sc.implied_family) << ',' << policy_token(p);
      for (double v : pr.selection_prob) out << ',' << format_number(v);
      for (const auto& v : pr.conditional_reject) {
        out << ',';
        if (v) out << format_number(*v);
      }
      out << ',' << format_number(pr.type1) << ',' << format_number(pr.mc_se) << ','
          << format_number(pr.fallback_rate) << ',' << a.reps << ',' << sc.base_seed << '\n';
    }
  }
}

void write_dataset_csv(std::ostream& out, const CountDataset& data) {
  out << "y,x\n";
  char buf[64];
  for (std::size_t i = 0; i < data.n(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", data.x()[i]);
    out << data.y()[i] << ',' << buf << '\n';
  }
}

}  // namespace countsel
