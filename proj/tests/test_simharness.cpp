#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "countsel/simharness.hpp"

using namespace countsel;

namespace {

// sqrt(0.05 * 0.95 / 15000) to 17 digits
constexpr double kMcSe15000 = 0.0017795130420052185;

const ScenarioConfig& by_id(const std::vector<ScenarioConfig>& g, int id) {
  return g.at(static_cast<std::size_t>(id - 1));
}

ReplicationRecord record(FamilyKind chosen, double p) {
  ReplicationRecord r;
  for (auto& t : r.traces) {
    t.chosen = chosen;
    t.final_p = p;
    t.rejected_h0 = p < 0.05;
  }
  r.wald_p = {p, p, p, p};
  r.converged = {true, true, true, true};
  return r;
}

std::vector<ScenarioConfig> small_grid(int reps) {
  GridLevels lv;
  lv.n = {60};
  lv.beta0 = {0.5, 1.5};
  lv.phi = {kInfinity, 1.0};
  lv.omega = {0.0, 0.2};
  return build_grid(lv, reps, 2024);
}

}  // namespace

TEST(Grid, DefaultHas750ScenariosWithPublishedLabels) {
  const auto g = build_grid(GridLevels{}, 10, 1);
  ASSERT_EQ(g.size(), 750u);
  std::set<int> ids;
  for (const auto& sc : g) ids.insert(sc.scenario_id);
  EXPECT_EQ(ids.size(), 750u);
  EXPECT_EQ(*ids.begin(), 1);
  EXPECT_EQ(*ids.rbegin(), 750);

  struct Label {
    int id, n;
    double beta0, phi, omega;
  };
  const Label labels[] = {{3, 250, 0.5, kInfinity, 0.0},  {6, 2000, 0.5, kInfinity, 0.0},
                          {36, 2000, 0.5, 2.0, 0.0},      {43, 50, 1.5, 2.0, 0.0},
                          {182, 100, 0.5, 2.0, 0.05},     {302, 100, 0.5, kInfinity, 0.1}};
  for (const auto& l : labels) {
    const auto& sc = by_id(g, l.id);
    EXPECT_EQ(sc.scenario_id, l.id);
    EXPECT_EQ(sc.n, l.n) << l.id;
    EXPECT_EQ(sc.beta0, l.beta0) << l.id;
    EXPECT_EQ(sc.phi, l.phi) << l.id;
    EXPECT_EQ(sc.omega, l.omega) << l.id;
  }
}

TEST(Grid, SmallLevelListsAndFamilies) {
  GridLevels one;
  one.n = {50};
  one.beta0 = {0.5};
  one.phi = {kInfinity};
  one.omega = {0.0};
  EXPECT_EQ(build_grid(one, 1, 0).size(), 1u);

  one.omega = {0.0, 0.5};
  const auto g = build_grid(one, 1, 0);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].implied_family, FamilyKind::Poisson);
  EXPECT_EQ(g[1].implied_family, FamilyKind::ZIP);

  EXPECT_EQ(implied_family(2.0, 0.0), FamilyKind::NB2);
  EXPECT_EQ(implied_family(2.0, 0.1), FamilyKind::ZINB);
  ScenarioConfig sc;
  sc.beta0 = 1.0;
  sc.phi = 0.5;
  EXPECT_DOUBLE_EQ(sc.nu(), 0.5 * std::exp(1.0));
}

TEST(Grid, RejectsInvalidLevels) {
  GridLevels bad;
  bad.n = {};
  EXPECT_THROW(build_grid(bad, 1, 0), std::invalid_argument);
  bad = GridLevels{};
  bad.omega = {1.0};
  EXPECT_THROW(build_grid(bad, 1, 0), std::invalid_argument);
  bad = GridLevels{};
  bad.phi = {0.0};
  EXPECT_THROW(build_grid(bad, 1, 0), std::invalid_argument);
  EXPECT_THROW(build_grid(GridLevels{}, 0, 0), std::invalid_argument);
}

TEST(Simulate, DeterministicPerKey) {
  const auto g = small_grid(5);
  const auto a = simulate_dataset(g[3], 2);
  const auto b = simulate_dataset(g[3], 2);
  const auto c = simulate_dataset(g[3], 3);
  EXPECT_TRUE(std::equal(a.y().begin(), a.y().end(), b.y().begin()));
  EXPECT_TRUE(std::equal(a.x().begin(), a.x().end(), b.x().begin()));
  EXPECT_FALSE(std::equal(a.x().begin(), a.x().end(), c.x().begin()));
}

TEST(Simulate, PoissonGeneratorMean) {
  ScenarioConfig sc;
  sc.n = 5000;
  sc.beta0 = 1.0;
  sc.reps = 20;
  double sum = 0.0, sx = 0.0, sxx = 0.0;
  for (int r = 0; r < sc.reps; ++r) {
    const auto d = simulate_dataset(sc, r);
    for (auto y : d.y()) sum += static_cast<double>(y);
    for (auto x : d.x()) {
      sx += x;
      sxx += x * x;
    }
  }
  const double n = 1e5;
  EXPECT_NEAR(sum / n, std::exp(1.0), 0.05);
  EXPECT_NEAR(sx / n, 0.0, 0.2);
  EXPECT_NEAR(sxx / n, 100.0, 2.0);
}

TEST(Replication, BitIdenticalRecords) {
  const auto g = small_grid(3);
  for (const auto& sc : g) {
    const auto a = run_replication(sc, 1);
    const auto b = run_replication(sc, 1);
    for (int p = 0; p < 2; ++p) {
      EXPECT_EQ(a.traces[p].chosen, b.traces[p].chosen);
      EXPECT_EQ(a.traces[p].final_p, b.traces[p].final_p);
    }
    EXPECT_EQ(a.wald_p, b.wald_p);
    EXPECT_EQ(a.aic, b.aic);
    EXPECT_EQ(a.dl_p, b.dl_p);
  }
  EXPECT_THROW(run_replication(g[0], 3), std::out_of_range);
}

TEST(Aggregate, SingleRecord) {
  const auto a = aggregate({record(FamilyKind::Poisson, 0.2)});
  const auto& p = a.policy[0];
  EXPECT_EQ(p.selection_prob, (std::array<double, 4>{1, 0, 0, 0}));
  EXPECT_EQ(p.type1, 0.0);
  EXPECT_EQ(p.conditional_reject[0], 0.0);
  EXPECT_FALSE(p.conditional_reject[1].has_value());
}

TEST(Aggregate, WeightedSumIdentity) {
  std::vector<ReplicationRecord> recs;
  for (int i = 0; i < 50; ++i) recs.push_back(record(FamilyKind::Poisson, i < 5 ? 0.01 : 0.5));
  for (int i = 0; i < 50; ++i) recs.push_back(record(FamilyKind::NB2, i < 1 ? 0.01 : 0.5));
  const auto a = aggregate(recs);
  const auto& p = a.policy[0];
  EXPECT_DOUBLE_EQ(p.selection_prob[0], 0.5);
  EXPECT_DOUBLE_EQ(*p.conditional_reject[0], 0.1);
  EXPECT_DOUBLE_EQ(*p.conditional_reject[1], 0.02);
  EXPECT_NEAR(p.type1, 0.06, 1e-15);
  EXPECT_NEAR(p.mc_se, std::sqrt(0.06 * 0.94 / 100), 1e-15);
}

TEST(McSe, Examples) {
  EXPECT_NEAR(mc_se(0.05, 15000), kMcSe15000, 1e-17);
  EXPECT_NEAR(mc_se(0.05, 15000), 0.0018, 5e-5);
  EXPECT_EQ(mc_se(0.0, 123), 0.0);
  EXPECT_DOUBLE_EQ(mc_se(0.5, 100), 0.05);
  EXPECT_THROW(mc_se(1.5, 10), std::invalid_argument);
}

TEST(Run, ParallelEqualsSerialAndTableIdentity) {
  const auto g = small_grid(24);
  RunOptions serial;
  RunOptions parallel;
  parallel.workers = 3;
  const auto ts = run_scenarios(g, serial);
  const auto tp = run_scenarios(g, parallel);
  EXPECT_EQ(ts, tp);
  std::ostringstream a, b;
  write_results_csv(a, g, ts);
  write_results_csv(b, g, tp);
  EXPECT_EQ(a.str(), b.str());

  for (const auto& t : ts) {
    EXPECT_EQ(t.reps, 24u);
    const auto r = rates(t);
    for (const auto& p : r.policy) {
      double sel = 0.0, recon = 0.0;
      for (int m = 0; m < 4; ++m) {
        sel += p.selection_prob[m];
        recon += p.selection_prob[m] * p.conditional_reject[m].value_or(0.0);
      }
      EXPECT_NEAR(sel, 1.0, 1e-12);
      EXPECT_NEAR(recon, p.type1, 1e-10);
    }
  }
}

TEST(Csv, ResultsAndManifestLayout) {
  GridLevels lv;
  lv.n = {50};
  lv.beta0 = {0.5};
  lv.phi = {kInfinity};
  lv.omega = {0.0};
  const auto g = build_grid(lv, 1, 7);
  const auto t = run_scenarios(g);
  std::ostringstream out;
  write_results_csv(out, g, t);
  std::istringstream in(out.str());
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0],
            "scenario_id,n,beta0,phi,omega,family,policy,sel_pois,sel_nb,sel_zip,sel_zinb,"
            "rej_pois,rej_nb,rej_zip,rej_zinb,type1,mc_se,fallback_rate,reps,seed");
  EXPECT_EQ(lines[1].rfind("1,50,0.5,inf,0,pois,seven_step,", 0), 0u) << lines[1];
  EXPECT_EQ(lines[2].find("lowest_aic"), lines[1].find("seven_step"));
  // three families never selected in one replication: empty fields
  EXPECT_NE(lines[1].find(",,"), std::string::npos);
  EXPECT_EQ(lines[1].substr(lines[1].size() - 4), ",1,7");

  std::ostringstream man;
  write_manifest_csv(man, build_grid(GridLevels{}, 1, 0));
  const std::string m = man.str();
  EXPECT_EQ(m.rfind("scenario_id,n,beta0,phi,omega,family\n1,50,0.5,inf,0,pois\n", 0), 0u);
  EXPECT_NE(m.find("\n302,100,0.5,inf,0.1,zip\n"), std::string::npos);
  EXPECT_NE(m.find("\n750,2000,2.5,0.3333333333333333,0.5,zinb\n"), std::string::npos);
}
