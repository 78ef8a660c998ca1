#include "countsel/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string_view>

namespace countsel {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& v) {
  if (s == "inf" || s == "Inf" || s == "infinity") {
    v = kInfinity;
    return true;
  }
  if (const auto slash = s.find('/'); slash != std::string_view::npos) {
    double a = 0.0, b = 0.0;
    if (!parse_double(s.substr(0, slash), a) || !parse_double(s.substr(slash + 1), b) ||
        !std::isfinite(a) || !std::isfinite(b) || b == 0.0) {
      return false;
    }
    v = a / b;
    return true;
  }
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  return r.ec == std::errc() && r.ptr == s.data() + s.size() && !s.empty();
}

template <class Int>
bool parse_int(std::string_view s, Int& v) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  return r.ec == std::errc() && r.ptr == s.data() + s.size() && !s.empty();
}

bool parse_bool(std::string_view s, bool& v) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") {
    v = true;
  } else if (s == "false" || s == "0" || s == "no" || s == "off") {
    v = false;
  } else {
    return false;
  }
  return true;
}

std::string where(const std::string& source, int line) {
  return source + ":" + std::to_string(line) + ": ";
}

// Strips one level of RFC-4180 quoting.
std::string_view unquote(std::string_view s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string phi_label(double phi) {
  if (std::isinf(phi)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", phi);
  return buf;
}

}  // namespace

SimulationConfig parse_config(std::istream& in, const std::string& source) {
  SimulationConfig c;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view s = raw;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) {
      throw InputError(where(source, line) + "expected key=value");
    }
    const std::string key(trim(s.substr(0, eq)));
    const std::string_view value = trim(s.substr(eq + 1));
    const auto bad = [&](const std::string& what) {
      return InputError(where(source, line) + "invalid " + key + ": " + what);
    };
    const auto doubles = [&] {
      std::vector<double> v;
      for (auto item : split(value, ',')) {
        double d = 0.0;
        if (!parse_double(item, d)) throw bad("'" + std::string(item) + "' is not a number");
        v.push_back(d);
      }
      return v;
    };
    const auto ints = [&] {
      std::vector<int> v;
      for (auto item : split(value, ',')) {
        int d = 0;
        if (!parse_int(item, d)) throw bad("'" + std::string(item) + "' is not an integer");
        v.push_back(d);
      }
      return v;
    };
    const auto one_int = [&] {
      const auto v = ints();
      if (v.size() != 1) throw bad("expected a single value");
      return v.front();
    };
    const auto one_double = [&] {
      const auto v = doubles();
      if (v.size() != 1) throw bad("expected a single value");
      return v.front();
    };

    if (key == "n") {
      c.levels.n = ints();
    } else if (key == "beta0") {
      c.levels.beta0 = doubles();
    } else if (key == "phi") {
      c.levels.phi = doubles();
    } else if (key == "omega") {
      c.levels.omega = doubles();
    } else if (key == "reps") {
      c.reps = one_int();
      if (c.reps < 1) throw bad("must be >= 1");
    } else if (key == "seed") {
      if (!parse_int(value, c.seed)) throw bad("expected an unsigned 64-bit integer");
    } else if (key == "x_sd") {
      c.x_sd = one_double();
      if (!(c.x_sd > 0.0) || !std::isfinite(c.x_sd)) throw bad("must be positive");
    } else if (key == "alpha") {
      c.alpha = one_double();
      if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw bad("must be in (0,1)");
    } else if (key == "wald_form") {
      try {
        c.wald_form = parse_wald_form(value);
      } catch (const std::invalid_argument& e) {
        throw bad(e.what());
      }
    } else if (key == "workers") {
      c.workers = one_int();
      if (c.workers < 1) throw bad("must be >= 1");
    } else if (key == "full_scale") {
      if (!parse_bool(value, c.full_scale)) throw bad("expected true or false");
    } else if (key == "scenario_tree") {
      c.tree_scenarios = ints();
    } else {
      throw InputError(where(source, line) + "unknown key '" + key + "'");
    }
  }
  if (c.full_scale) {
    c.levels = GridLevels{};
    c.reps = kFullScaleReps;
  }
  try {
    c.levels.check();
  } catch (const std::invalid_argument& e) {
    throw InputError(source + ": " + e.what());
  }
  return c;
}

SimulationConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config '" + path.string() + "'");
  return parse_config(in, path.string());
}

CountDataset read_dataset_csv(std::istream& in, const std::string& source) {
  std::string raw;
  int line = 0;
  if (!std::getline(in, raw)) throw InputError(source + ": empty file, expected header y,x");
  ++line;
  std::string_view header = trim(raw);
  if (header.size() >= 3 && header.substr(0, 3) == "\xEF\xBB\xBF") header.remove_prefix(3);
  const auto cols = split(header, ',');
  if (cols.size() != 2 || unquote(cols[0]) != "y" || unquote(cols[1]) != "x") {
    throw InputError(where(source, line) + "header must be 'y,x'");
  }
  std::vector<std::int64_t> y;
  std::vector<double> x;
  while (std::getline(in, raw)) {
    ++line;
    const std::string_view s = trim(raw);
    if (s.empty()) continue;
    const auto f = split(s, ',');
    if (f.size() != 2) {
      throw InputError(where(source, line) + "expected 2 fields, found " +
                       std::to_string(f.size()));
    }
    std::int64_t yi = 0;
    const auto ys = unquote(f[0]);
    if (!parse_int(ys, yi)) {
      double d = 0.0;
      if (parse_double(ys, d) && d == std::floor(d) && std::abs(d) < 9e15) {
        yi = static_cast<std::int64_t>(d);
      } else {
        throw InputError(where(source, line) + "y '" + std::string(ys) +
                         "' is not an integer count");
      }
    }
    if (yi < 0) throw InputError(where(source, line) + "y must be nonnegative");
    double xi = 0.0;
    const auto xs = unquote(f[1]);
    if (!parse_double(xs, xi) || !std::isfinite(xi)) {
      throw InputError(where(source, line) + "x '" + std::string(xs) +
                       "' is not a finite number");
    }
    y.push_back(yi);
    x.push_back(xi);
  }
  if (y.size() < 2) throw InputError(source + ": need at least 2 data rows");
  return CountDataset(std::move(y), std::move(x));
}

// ---------------------------------------------------------------------------

namespace {

// table1.csv column order.
constexpr std::array<FamilyKind, 4> kTableOrder = {FamilyKind::Poisson, FamilyKind::ZIP,
                                                   FamilyKind::NB2, FamilyKind::ZINB};

}  // namespace

void write_table1_csv(std::ostream& out, const std::vector<ScenarioConfig>& scenarios,
                      const std::vector<Tally>& tallies) {
  out << "scenario_id,n,beta0,phi,omega,family,row,pois,zip,nb,zinb\n";
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const auto& sc = scenarios[s];
    const AggregateRates a = rates(tallies[s]);
    const auto& seven = a.policy[static_cast<int>(PolicyKind::SevenStep)];
    const auto& low = a.policy[static_cast<int>(PolicyKind::LowestAIC)];
    const auto row = [&](std::string_view name, auto value) {
      out << sc.scenario_id << ',' << sc.n << ',' << format_number(sc.beta0) << ','
          << format_number(sc.phi) << ',' << format_number(sc.omega) << ','
          << family_token(sc.implied_family) << ',' << name;
      for (FamilyKind f : kTableOrder) {
        out << ',';
        const std::optional<double> v = value(family_index(f));
        if (v) out << format_number(*v);
      }
      out << '\n';
    };
    row("reject", [&](int m) { return std::optional<double>(a.model_reject[m]); });
    row("reject_given_tests", [&](int m) { return seven.conditional_reject[m]; });
    row("selected_by_tests", [&](int m) { return std::optional<double>(seven.selection_prob[m]); });
    row("reject_given_aic", [&](int m) { return low.conditional_reject[m]; });
    row("lowest_aic", [&](int m) { return std::optional<double>(low.selection_prob[m]); });
  }
}

void write_tree_report(std::ostream& out, const ScenarioConfig& sc, const Tally& t,
                       double alpha) {
  const IndependenceTree ind = independence_tree(alpha);
  const double per100 = 100.0 / static_cast<double>(t.reps);
  const auto seven = static_cast<int>(PolicyKind::SevenStep);
  const auto low = static_cast<int>(PolicyKind::LowestAIC);
  const auto sel = [&](int p, FamilyKind f) { return t.selected[p][family_index(f)] * per100; };
  const auto rej = [&](int p, FamilyKind f) { return t.rejected[p][family_index(f)] * per100; };

  out << "scenario " << sc.scenario_id << " (n=" << sc.n << ", beta0=" << format_number(sc.beta0)
      << ", phi=" << format_number(sc.phi) << ", omega=" << format_number(sc.omega) << "; "
      << family_name(sc.implied_family) << "), " << t.reps << " replications, alpha "
      << format_number(alpha) << "\n";
  out << "counts per 100 datasets; independent = all tests independent at level alpha\n\n";

  char buf[160];
  std::snprintf(buf, sizeof buf, "%-28s %12s %12s %12s\n", "node", "independent", "seven_step",
                "lowest_aic");
  out << buf;
  const auto line = [&](const std::string& name, double ind_v, double seven_v,
                        std::optional<double> aic_v) {
    std::snprintf(buf, sizeof buf, "%-28s %12s %12s %12s\n", name.c_str(), fmt2(ind_v).c_str(),
                  fmt2(seven_v).c_str(), aic_v ? fmt2(*aic_v).c_str() : "");
    out << buf;
  };
  const double dl_rej = sel(seven, FamilyKind::NB2) + sel(seven, FamilyKind::ZINB);
  line("D&L not rejected", ind.dl_accept, 100.0 - dl_rej, std::nullopt);
  line("D&L rejected", ind.dl_reject, dl_rej, std::nullopt);
  double total_ind = 0.0, total_seven = 0.0, total_aic = 0.0;
  for (FamilyKind f : {FamilyKind::Poisson, FamilyKind::ZIP, FamilyKind::NB2, FamilyKind::ZINB}) {
    const int m = family_index(f);
    const std::string name(family_name(f));
    line("  " + name + " selected", ind.leaf[m], sel(seven, f), sel(low, f));
    line("    " + name + " rejects H0", ind.reject[m], rej(seven, f), rej(low, f));
    total_ind += ind.reject[m];
    total_seven += rej(seven, f);
    total_aic += rej(low, f);
  }
  line("unconditional type 1 error", total_ind, total_seven, total_aic);
}

const std::vector<std::string>& panel_figures() {
  static const std::vector<std::string> names = {
      "type1_seven_step", "type1_aic",      "reject_pois",        "reject_nb",
      "reject_zip",       "reject_zinb",    "dean_lawless",       "vuong_pois_zip",
      "vuong_nb_zinb",    "correct_seven_step", "correct_aic"};
  return names;
}

std::vector<std::string> write_panels(const std::filesystem::path& dir,
                                      const std::vector<ScenarioConfig>& scenarios,
                                      const std::vector<Tally>& tallies) {
  using Metric = std::function<double(const ScenarioConfig&, const AggregateRates&)>;
  const auto seven = static_cast<int>(PolicyKind::SevenStep);
  const auto low = static_cast<int>(PolicyKind::LowestAIC);
  const std::vector<Metric> metrics = {
      [=](const auto&, const auto& a) { return a.policy[seven].type1; },
      [=](const auto&, const auto& a) { return a.policy[low].type1; },
      [](const auto&, const auto& a) { return a.model_reject[0]; },
      [](const auto&, const auto& a) { return a.model_reject[1]; },
      [](const auto&, const auto& a) { return a.model_reject[2]; },
      [](const auto&, const auto& a) { return a.model_reject[3]; },
      [](const auto&, const auto& a) { return a.dl_reject; },
      [](const auto&, const auto& a) { return a.vuong_pois_zip_reject; },
      [](const auto&, const auto& a) { return a.vuong_nb_zinb_reject; },
      [=](const auto& sc, const auto& a) {
        return a.policy[seven].selection_prob[family_index(sc.implied_family)];
      },
      [=](const auto& sc, const auto& a) {
        return a.policy[low].selection_prob[family_index(sc.implied_family)];
      },
  };

  // Cells keyed by (phi, omega) in first-appearance order.
  std::vector<std::pair<double, double>> cells;
  std::vector<AggregateRates> agg;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    agg.push_back(rates(tallies[s]));
    const std::pair<double, double> key{scenarios[s].phi, scenarios[s].omega};
    if (std::find(cells.begin(), cells.end(), key) == cells.end()) cells.push_back(key);
  }

  std::vector<std::string> written;
  const auto& names = panel_figures();
  for (std::size_t f = 0; f < names.size(); ++f) {
    for (const auto& [phi, omega] : cells) {
      const std::string file =
          "panel_" + names[f] + "_" + phi_label(phi) + "_" + format_number(omega) + ".csv";
      std::ofstream out(dir / file);
      if (!out) throw InputError("cannot write '" + (dir / file).string() + "'");
      out << "n,beta0,rate\n";
      for (std::size_t s = 0; s < scenarios.size(); ++s) {
        const auto& sc = scenarios[s];
        if (sc.phi != phi || sc.omega != omega) continue;
        out << sc.n << ',' << format_number(sc.beta0) << ','
            << format_number(metrics[f](sc, agg[s])) << '\n';
      }
      written.push_back(file);
    }
  }
  return written;
}

void write_fit_report(std::ostream& out, const CountDataset& data,
                      const FitReportOptions& options) {
  const Analysis a = analyze(data, options.alpha, options.wald_form);
  char buf[200];
  out << "n = " << data.n() << ", zeros = " << data.zero_count() << ", mean y = "
      << format_number(data.mean_y()) << "\n";
  const char* labels[] = {"beta0", "betaX", "gamma0", "gammaX", "log_nu"};
  for (FamilyKind f : kAllFamilies) {
    if (options.family && *options.family != f) continue;
    const int m = family_index(f);
    const FitResult& r = a.fits[m];
    const TestOutcome& w = a.wald[m];
    out << "\n[" << family_name(f) << "] converged=" << (r.converged ? "yes" : "no")
        << " iterations=" << r.iterations << (r.used_em ? " em=yes" : "")
        << (r.at_bound ? " at_bound=yes" : "") << "\n";
    const Eigen::VectorXd th = pack(f, r.params);
    for (int i = 0; i < th.size(); ++i) {
      const int slot = (has_dispersion(f) && i == th.size() - 1) ? 4 : i;
      const double var = r.cov.rows() > i ? r.cov(i, i) : 0.0;
      const double se = r.converged && var > 0.0 ? std::sqrt(var) : NAN;
      std::snprintf(buf, sizeof buf, "  %-7s %12.4f  se %10.4f\n", labels[slot], th[i], se);
      out << buf;
    }
    if (r.params.nu) {
      std::snprintf(buf, sizeof buf, "  %-7s %12.4f\n", "nu", *r.params.nu);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "  loglik %.6f  AIC %.4f\n", r.loglik, r.aic);
    out << buf;
    std::snprintf(buf, sizeof buf, "  Wald (%s, df %d): statistic %.4f  p %.4g%s\n",
                  std::string(wald_form_token(options.wald_form)).c_str(), w.df.value_or(0),
                  w.statistic, w.p_value, w.fallback ? " (fallback)" : "");
    out << buf;
  }

  out << "\nDiagnostics\n";
  std::snprintf(buf, sizeof buf, "  Dean-Lawless T1 %.4f  p %.4g%s\n", a.dean_lawless.statistic,
                a.dean_lawless.p_value, a.dean_lawless.fallback ? " (fallback)" : "");
  out << buf;
  const auto vline = [&](const char* name, const VuongOutcome& v) {
    if (v.skipped) {
      std::snprintf(buf, sizeof buf, "  Vuong %-13s skipped, p 1\n", name);
    } else if (v.degenerate) {
      std::snprintf(buf, sizeof buf, "  Vuong %-13s degenerate, p 1\n", name);
    } else {
      std::snprintf(buf, sizeof buf,
                    "  Vuong %-13s raw %.4f (p %.4g, favours %s)  aic %.4f  bic %.4f%s\n", name,
                    v.raw.statistic, v.raw.p_value, v.raw.direction > 0 ? "ZI" : "base",
                    v.aic.statistic, v.bic.statistic,
                    v.dropped ? (" dropped " + std::to_string(v.dropped)).c_str() : "");
    }
    out << buf;
  };
  vline("Poisson/ZIP", a.vuong_pois_zip);
  vline("NB/ZINB", a.vuong_nb_zinb);

  out << "\nSelection (alpha " << format_number(options.alpha) << ")\n";
  for (const SelectionTrace* t : {&a.seven_step, &a.lowest_aic}) {
    std::snprintf(buf, sizeof buf, "  %-10s chose %-7s p %.4g  %s%s\n",
                  std::string(policy_token(t->policy)).c_str(),
                  std::string(family_name(t->chosen)).c_str(), t->final_p,
                  t->rejected_h0 ? "reject H0" : "do not reject H0",
                  t->fallback_used ? " (fallback)" : "");
    out << buf;
  }
}

std::vector<Tally> run_simulation(const SimulationConfig& config,
                                  const std::filesystem::path& dir, std::ostream* log) {
  const auto scenarios = build_grid(config.levels, config.reps, config.seed, config.x_sd);
  for (int id : config.tree_scenarios) {
    if (id < 1 || id > static_cast<int>(scenarios.size())) {
      throw InputError("tree scenario " + std::to_string(id) + " is not in the grid (1.." +
                       std::to_string(scenarios.size()) + ")");
    }
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto open = [&](const std::string& name) {
    std::ofstream f(dir / name);
    if (!f) throw InputError("cannot write '" + (dir / name).string() + "'");
    return f;
  };
  {
    auto man = open("manifest.csv");
    write_manifest_csv(man, scenarios);
  }

  RunOptions ro;
  ro.analysis.alpha = config.alpha;
  ro.analysis.wald_form = config.wald_form;
  ro.workers = config.workers;
  std::mutex log_mutex;
  std::uint64_t last_pct = 0;
  if (log) {
    ro.progress = [&](std::uint64_t done, std::uint64_t total) {
      const std::uint64_t pct = done * 100 / total;
      std::lock_guard lock(log_mutex);
      if (pct >= last_pct + 5 || done == total) {
        last_pct = pct;
        *log << "progress " << done << "/" << total << " (" << pct << "%)\n" << std::flush;
      }
    };
  }
  const auto tallies = run_scenarios(scenarios, ro);

  {
    auto res = open("results.csv");
    write_results_csv(res, scenarios, tallies);
    auto tab = open("table1.csv");
    write_table1_csv(tab, scenarios, tallies);
  }
  write_panels(dir, scenarios, tallies);
  for (int id : config.tree_scenarios) {
    auto tree = open("tree_" + std::to_string(id) + ".txt");
    write_tree_report(tree, scenarios[static_cast<std::size_t>(id - 1)],
                      tallies[static_cast<std::size_t>(id - 1)], config.alpha);
  }
  return tallies;
}

}  // namespace countsel
