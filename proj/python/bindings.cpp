#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "countsel/countdist.hpp"
#include "countsel/diagnostics.hpp"
#include "countsel/fitters.hpp"
#include "countsel/report.hpp"
#include "countsel/selection.hpp"
#include "countsel/simharness.hpp"

namespace py = pybind11;
using namespace countsel;

namespace {

DistParams dist(double lambda, double omega, double nu) {
  DistParams p;
  p.lambda = lambda;
  p.omega = omega;
  p.nu = nu;
  return p;
}

template <class T>
std::string repr_of(const char* name, const T& fields) {
  std::ostringstream os;
  os << name << "(" << fields << ")";
  return os.str();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Count-regression fitting, diagnostics, model selection and simulation";

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);

  py::enum_<FamilyKind>(m, "Family")
      .value("POISSON", FamilyKind::Poisson)
      .value("NB2", FamilyKind::NB2)
      .value("ZIP", FamilyKind::ZIP)
      .value("ZINB", FamilyKind::ZINB);
  m.def("parse_family", &parse_family, py::arg("token"));
  m.def("family_token", [](FamilyKind f) { return std::string(family_token(f)); });

  py::enum_<WaldForm>(m, "WaldForm")
      .value("CHISQ", WaldForm::ChiSquare)
      .value("F", WaldForm::F)
      .value("MIXED", WaldForm::Mixed);

  py::enum_<PolicyKind>(m, "Policy")
      .value("SEVEN_STEP", PolicyKind::SevenStep)
      .value("LOWEST_AIC", PolicyKind::LowestAIC);

  // --- distributions -----------------------------------------------------------
  m.def(
      "log_pmf",
      [](FamilyKind f, std::int64_t y, double lambda, double omega, double nu) {
        return log_pmf(f, dist(lambda, omega, nu), y);
      },
      py::arg("family"), py::arg("y"), py::arg("lam"), py::arg("omega") = 0.0,
      py::arg("nu") = kInfinity);
  m.def(
      "sample",
      [](FamilyKind f, std::size_t n, double lambda, double omega, double nu,
         std::uint64_t seed, std::uint64_t stream) {
        RngStream rng(seed, stream);
        return sample(f, dist(lambda, omega, nu), n, rng);
      },
      py::arg("family"), py::arg("n"), py::arg("lam"), py::arg("omega") = 0.0,
      py::arg("nu") = kInfinity, py::arg("seed") = 0, py::arg("stream") = 0);

  // --- data and fits -------------------------------------------------------------
  py::class_<CountDataset>(m, "CountDataset")
      .def(py::init<std::vector<std::int64_t>, std::vector<double>>(), py::arg("y"),
           py::arg("x"))
      .def_property_readonly("y",
                             [](const CountDataset& d) {
                               return std::vector<std::int64_t>(d.y().begin(), d.y().end());
                             })
      .def_property_readonly(
          "x", [](const CountDataset& d) { return std::vector<double>(d.x().begin(), d.x().end()); })
      .def_property_readonly("n", &CountDataset::n)
      .def("zero_count", &CountDataset::zero_count)
      .def("__len__", &CountDataset::n);

  m.def(
      "read_dataset_csv",
      [](const std::string& text) {
        std::istringstream in(text);
        return read_dataset_csv(in, "input");
      },
      py::arg("text"), "Parses `y,x` CSV text.");

  py::class_<ModelParams>(m, "ModelParams")
      .def(py::init<>())
      .def_readwrite("beta0", &ModelParams::beta0)
      .def_readwrite("beta_x", &ModelParams::betaX)
      .def_readwrite("gamma0", &ModelParams::gamma0)
      .def_readwrite("gamma_x", &ModelParams::gammaX)
      .def_readwrite("nu", &ModelParams::nu)
      .def("__repr__", [](const ModelParams& p) {
        std::ostringstream os;
        os << "beta0=" << p.beta0 << ", beta_x=" << p.betaX;
        if (p.gamma0) os << ", gamma0=" << *p.gamma0 << ", gamma_x=" << *p.gammaX;
        if (p.nu) os << ", nu=" << *p.nu;
        return repr_of("ModelParams", os.str());
      });

  py::class_<FitOptions>(m, "FitOptions")
      .def(py::init<>())
      .def_readwrite("max_iter", &FitOptions::max_iter)
      .def_readwrite("rel_tol", &FitOptions::rel_tol)
      .def_readwrite("grad_tol", &FitOptions::grad_tol)
      .def_readwrite("allow_em", &FitOptions::allow_em)
      .def_readwrite("record_trace", &FitOptions::record_trace);

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("family", &FitResult::family)
      .def_readonly("params", &FitResult::params)
      .def_readonly("cov", &FitResult::cov)
      .def_readonly("loglik", &FitResult::loglik)
      .def_readonly("aic", &FitResult::aic)
      .def_readonly("n_free_params", &FitResult::n_free_params)
      .def_readonly("n_obs", &FitResult::n_obs)
      .def_readonly("converged", &FitResult::converged)
      .def_readonly("iterations", &FitResult::iterations)
      .def_readonly("used_em", &FitResult::used_em)
      .def_readonly("at_bound", &FitResult::at_bound)
      .def_readonly("trace", &FitResult::trace)
      .def("__repr__", [](const FitResult& r) {
        std::ostringstream os;
        os << family_token(r.family) << ", loglik=" << r.loglik
           << ", converged=" << (r.converged ? "True" : "False");
        return repr_of("FitResult", os.str());
      });

  py::class_<TestOutcome>(m, "TestOutcome")
      .def_readonly("statistic", &TestOutcome::statistic)
      .def_readonly("df", &TestOutcome::df)
      .def_readonly("p_value", &TestOutcome::p_value)
      .def_readonly("alpha", &TestOutcome::alpha)
      .def_readonly("fallback", &TestOutcome::fallback)
      .def_readonly("flagged", &TestOutcome::flagged)
      .def_property_readonly("rejects", &TestOutcome::rejects);

  m.def("loglik", &loglik, py::arg("family"), py::arg("params"), py::arg("data"));
  m.def("loglik_gradient", &loglik_gradient, py::arg("family"), py::arg("params"),
        py::arg("data"));
  m.def("fit", [](FamilyKind f, const CountDataset& d,
                  const FitOptions& o) { return fit(f, d, o); },
        py::arg("family"), py::arg("data"), py::arg("options") = FitOptions{});
  m.def("fit_null", &fit_null, py::arg("family"), py::arg("data"),
        py::arg("options") = FitOptions{});
  m.def("wald_test", &wald_test, py::arg("fit"), py::arg("alpha") = 0.05,
        py::arg("form") = WaldForm::ChiSquare);
  m.def("deviance_lrt", &deviance_lrt, py::arg("fit_full"), py::arg("fit_null"),
        py::arg("alpha") = 0.05);

  // --- diagnostics ---------------------------------------------------------------
  m.def("dean_lawless", &dean_lawless, py::arg("data"), py::arg("poisson_fit"),
        py::arg("alpha") = 0.05);

  py::class_<VuongStat>(m, "VuongStat")
      .def_readonly("statistic", &VuongStat::statistic)
      .def_readonly("p_value", &VuongStat::p_value)
      .def_readonly("direction", &VuongStat::direction);
  py::class_<VuongOutcome>(m, "VuongOutcome")
      .def_readonly("raw", &VuongOutcome::raw)
      .def_readonly("aic", &VuongOutcome::aic)
      .def_readonly("bic", &VuongOutcome::bic)
      .def_readonly("alpha", &VuongOutcome::alpha)
      .def_readonly("n_eff", &VuongOutcome::n_eff)
      .def_readonly("dropped", &VuongOutcome::dropped)
      .def_readonly("degenerate", &VuongOutcome::degenerate)
      .def_readonly("skipped", &VuongOutcome::skipped)
      .def_property_readonly("rejects_toward_zi", &VuongOutcome::rejects_toward_zi);
  m.def("vuong", &vuong, py::arg("restricted"), py::arg("zero_inflated"), py::arg("data"),
        py::arg("alpha") = 0.05);
  m.def(
      "vuong_from_logdl",
      [](const std::vector<double>& logdl, int k_diff, double alpha) {
        return vuong_from_logdl(logdl, k_diff, alpha);
      },
      py::arg("logdl"), py::arg("k_diff"), py::arg("alpha") = 0.05);

  // --- selection -----------------------------------------------------------------
  py::class_<SelectionTrace>(m, "SelectionTrace")
      .def_readonly("policy", &SelectionTrace::policy)
      .def_readonly("alpha", &SelectionTrace::alpha)
      .def_readonly("dl_p", &SelectionTrace::dl_p)
      .def_readonly("vuong_pois_zip_p", &SelectionTrace::vuong_pois_zip_p)
      .def_readonly("vuong_nb_zinb_p", &SelectionTrace::vuong_nb_zinb_p)
      .def_readonly("vuong_direction", &SelectionTrace::vuong_direction)
      .def_readonly("aic_by_family", &SelectionTrace::aic_by_family)
      .def_readonly("chosen", &SelectionTrace::chosen)
      .def_readonly("final_p", &SelectionTrace::final_p)
      .def_readonly("rejected_h0", &SelectionTrace::rejected_h0)
      .def_readonly("fallback_used", &SelectionTrace::fallback_used);
  m.def("select_seven_step",
        py::overload_cast<const CountDataset&, double, WaldForm>(&select_seven_step),
        py::arg("data"), py::arg("alpha") = 0.05, py::arg("form") = WaldForm::ChiSquare);
  m.def("select_lowest_aic",
        py::overload_cast<const CountDataset&, double, WaldForm>(&select_lowest_aic),
        py::arg("data"), py::arg("alpha") = 0.05, py::arg("form") = WaldForm::ChiSquare);
  m.def(
      "fit_report",
      [](const CountDataset& d, std::optional<FamilyKind> family, double alpha, WaldForm form) {
        std::ostringstream os;
        write_fit_report(os, d, FitReportOptions{family, alpha, form});
        return os.str();
      },
      py::arg("data"), py::arg("family") = std::nullopt, py::arg("alpha") = 0.05,
      py::arg("form") = WaldForm::ChiSquare);

  // --- simulation ----------------------------------------------------------------
  py::class_<GridLevels>(m, "GridLevels")
      .def(py::init<>())
      .def_readwrite("n", &GridLevels::n)
      .def_readwrite("beta0", &GridLevels::beta0)
      .def_readwrite("phi", &GridLevels::phi)
      .def_readwrite("omega", &GridLevels::omega)
      .def("check", &GridLevels::check);

  py::class_<ScenarioConfig>(m, "ScenarioConfig")
      .def_readonly("scenario_id", &ScenarioConfig::scenario_id)
      .def_readonly("n", &ScenarioConfig::n)
      .def_readonly("beta0", &ScenarioConfig::beta0)
      .def_readonly("phi", &ScenarioConfig::phi)
      .def_readonly("omega", &ScenarioConfig::omega)
      .def_readonly("implied_family", &ScenarioConfig::implied_family)
      .def_readwrite("reps", &ScenarioConfig::reps)
      .def_readwrite("base_seed", &ScenarioConfig::base_seed)
      .def_readonly("x_sd", &ScenarioConfig::x_sd)
      .def("__repr__", [](const ScenarioConfig& s) {
        std::ostringstream os;
        os << "id=" << s.scenario_id << ", n=" << s.n << ", beta0=" << s.beta0
           << ", phi=" << s.phi << ", omega=" << s.omega;
        return repr_of("ScenarioConfig", os.str());
      });

  m.def("build_grid", &build_grid, py::arg("levels") = GridLevels{}, py::arg("reps") = 1,
        py::arg("seed") = 20190101, py::arg("x_sd") = 10.0);
  m.def("simulate_dataset", &simulate_dataset, py::arg("scenario"), py::arg("rep"));

  py::class_<PolicyRates>(m, "PolicyRates")
      .def_readonly("selection_prob", &PolicyRates::selection_prob)
      .def_readonly("conditional_reject", &PolicyRates::conditional_reject)
      .def_readonly("type1", &PolicyRates::type1)
      .def_readonly("mc_se", &PolicyRates::mc_se)
      .def_readonly("fallback_rate", &PolicyRates::fallback_rate);
  py::class_<AggregateRates>(m, "AggregateRates")
      .def_readonly("reps", &AggregateRates::reps)
      .def_property_readonly("seven_step",
                             [](const AggregateRates& a) { return a.policy[0]; })
      .def_property_readonly("lowest_aic",
                             [](const AggregateRates& a) { return a.policy[1]; })
      .def_readonly("model_reject", &AggregateRates::model_reject)
      .def_readonly("dl_reject", &AggregateRates::dl_reject)
      .def_readonly("vuong_pois_zip_reject", &AggregateRates::vuong_pois_zip_reject)
      .def_readonly("vuong_nb_zinb_reject", &AggregateRates::vuong_nb_zinb_reject);

  py::class_<Tally>(m, "Tally")
      .def_readonly("reps", &Tally::reps)
      .def("rates", [](const Tally& t) { return rates(t); })
      .def("__eq__", [](const Tally& a, const Tally& b) { return a == b; });

  m.def(
      "run_scenarios",
      [](const std::vector<ScenarioConfig>& scenarios, double alpha, WaldForm form,
         int workers) {
        RunOptions opt;
        opt.analysis = {alpha, form};
        opt.workers = workers;
        py::gil_scoped_release release;
        return run_scenarios(scenarios, opt);
      },
      py::arg("scenarios"), py::arg("alpha") = 0.05, py::arg("form") = WaldForm::Mixed,
      py::arg("workers") = 1);
  m.def(
      "results_csv",
      [](const std::vector<ScenarioConfig>& scenarios, const std::vector<Tally>& tallies) {
        std::ostringstream os;
        write_results_csv(os, scenarios, tallies);
        return os.str();
      },
      py::arg("scenarios"), py::arg("tallies"));
  m.def("mc_se", &mc_se, py::arg("p"), py::arg("reps"));
}
