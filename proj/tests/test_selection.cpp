#include <cmath>

#include <gtest/gtest.h>

#include "countsel/selection.hpp"
#include "test_support.hpp"

using namespace countsel;
using countsel::testing::null_dataset;

namespace {

FitResult failed(FamilyKind f, std::size_t n) {
  FitResult r;
  r.family = f;
  r.n_obs = n;
  r.n_free_params = n_free_params(f);
  r.params = initial_params(FamilyKind::Poisson, CountDataset({0, 1}, {0.0, 1.0}));
  if (is_zero_inflated(f)) {
    r.params.gamma0 = 0.0;
    r.params.gammaX = 0.0;
  }
  if (has_dispersion(f)) r.params.nu = 1.0;
  return r;
}

bool same(const SelectionTrace& a, const SelectionTrace& b) {
  return a.policy == b.policy && a.dl_p == b.dl_p && a.vuong_pois_zip_p == b.vuong_pois_zip_p &&
         a.vuong_nb_zinb_p == b.vuong_nb_zinb_p && a.aic_by_family == b.aic_by_family &&
         a.chosen == b.chosen && a.final_p == b.final_p && a.rejected_h0 == b.rejected_h0 &&
         a.fallback_used == b.fallback_used;
}

}  // namespace

TEST(SevenStep, AllNullPathEndsAtPoisson) {
  int checked = 0;
  for (std::uint64_t s = 0; s < 40 && checked < 5; ++s) {
    const auto d = null_dataset(FamilyKind::Poisson, 250, 0.5, 0, 0, 10.0, 60, s);
    FitCache fits(d);
    const auto t = select_seven_step(fits, {});
    if (*t.dl_p < 0.05 || (t.vuong_pois_zip_p && *t.vuong_pois_zip_p < 0.05)) continue;
    ++checked;
    EXPECT_EQ(t.chosen, FamilyKind::Poisson);
    EXPECT_DOUBLE_EQ(t.final_p, wald_test(fits.get(FamilyKind::Poisson)).p_value);
    EXPECT_FALSE(fits.has(FamilyKind::NB2));
    EXPECT_FALSE(fits.has(FamilyKind::ZINB));
  }
  EXPECT_EQ(checked, 5);
}

TEST(SevenStep, PathExclusivity) {
  for (std::uint64_t s = 0; s < 60; ++s) {
    const auto d = null_dataset(kAllFamilies[s % 4], 200, 1.0, 0.2, 1.5, 10.0, 61, s);
    const auto t = select_seven_step(d);
    ASSERT_TRUE(t.dl_p.has_value());
    const bool dl = *t.dl_p < 0.05;
    EXPECT_NE(t.vuong_pois_zip_p.has_value(), t.vuong_nb_zinb_p.has_value());
    EXPECT_EQ(t.vuong_nb_zinb_p.has_value(), dl);
    if (dl) {
      EXPECT_TRUE(t.chosen == FamilyKind::NB2 || t.chosen == FamilyKind::ZINB);
    } else {
      EXPECT_TRUE(t.chosen == FamilyKind::Poisson || t.chosen == FamilyKind::ZIP);
    }
    EXPECT_EQ(t.rejected_h0, t.final_p < 0.05);
  }
}

TEST(SevenStep, FailedPoissonFitFallsBack) {
  const auto d = null_dataset(FamilyKind::Poisson, 100, 1.0, 0, 0, 10.0, 62);
  FitCache fits(d);
  fits.put(failed(FamilyKind::Poisson, d.n()));
  const auto t = select_seven_step(fits, {});
  EXPECT_DOUBLE_EQ(*t.dl_p, kFallbackPValue);
  EXPECT_EQ(t.chosen, FamilyKind::Poisson);
  EXPECT_DOUBLE_EQ(t.final_p, kFallbackPValue);
  EXPECT_TRUE(t.fallback_used);
  EXPECT_FALSE(t.rejected_h0);
}

TEST(Selection, Deterministic) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto d = null_dataset(kAllFamilies[s % 4], 150, 1.0, 0.2, 1.0, 10.0, 63, s);
    EXPECT_TRUE(same(select_seven_step(d), select_seven_step(d)));
    EXPECT_TRUE(same(select_lowest_aic(d), select_lowest_aic(d)));
  }
}

TEST(LowestAic, ExactlyOneConvergedIsChosen) {
  const auto d = null_dataset(FamilyKind::ZIP, 200, 1.0, 0.2, 0, 10.0, 64);
  for (FamilyKind keep : kAllFamilies) {
    FitCache fits(d);
    for (FamilyKind f : kAllFamilies) {
      if (f != keep) fits.put(failed(f, d.n()));
    }
    const FitResult& kept = fits.get(keep);
    ASSERT_TRUE(kept.converged);
    const auto t = select_lowest_aic(fits, {PolicyKind::LowestAIC});
    EXPECT_EQ(t.chosen, keep);
    EXPECT_FALSE(t.fallback_used);
    EXPECT_DOUBLE_EQ(t.final_p, wald_test(kept).p_value);
  }
}

TEST(LowestAic, AllFailedFallsBackToPoisson) {
  const auto d = null_dataset(FamilyKind::Poisson, 50, 1.0, 0, 0, 10.0, 65);
  FitCache fits(d);
  for (FamilyKind f : kAllFamilies) fits.put(failed(f, d.n()));
  const auto t = select_lowest_aic(fits, {PolicyKind::LowestAIC});
  EXPECT_EQ(t.chosen, FamilyKind::Poisson);
  EXPECT_DOUBLE_EQ(t.final_p, kFallbackPValue);
  EXPECT_TRUE(t.fallback_used);
  for (double a : t.aic_by_family) EXPECT_TRUE(std::isinf(a));
}

TEST(LowestAic, TiesGoToSimplerFamily) {
  const auto d = null_dataset(FamilyKind::Poisson, 100, 1.0, 0, 0, 10.0, 66);
  FitCache fits(d);
  FitResult zip = fits.get(FamilyKind::ZIP);
  FitResult nb = fits.get(FamilyKind::NB2);
  FitResult pois = fits.get(FamilyKind::Poisson);
  pois.converged = false;
  pois.aic = kInfinity;
  nb.aic = zip.aic = 100.0;
  fits.put(pois);
  fits.put(nb);
  fits.put(zip);
  fits.put(failed(FamilyKind::ZINB, d.n()));
  EXPECT_EQ(select_lowest_aic(fits, {PolicyKind::LowestAIC}).chosen, FamilyKind::NB2);
}

TEST(LowestAic, ChoiceInvariantToCovariateShift) {
  int same_choice = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto d = null_dataset(kAllFamilies[s % 4], 200, 1.0, 0.2, 1.0, 10.0, 67, s);
    same_choice += select_lowest_aic(d).chosen == select_lowest_aic(d.shifted(7.5)).chosen;
  }
  EXPECT_GE(same_choice, 99);
}

TEST(Analysis, MatchesStandalonePolicies) {
  const auto d = null_dataset(FamilyKind::NB2, 300, 1.0, 0, 1.0, 10.0, 68);
  const auto a = analyze(d);
  EXPECT_TRUE(same(a.seven_step, select_seven_step(d)));
  EXPECT_TRUE(same(a.lowest_aic, select_lowest_aic(d)));
  for (FamilyKind f : kAllFamilies) {
    EXPECT_EQ(a.fits[family_index(f)].family, f);
    EXPECT_EQ(a.lowest_aic.aic_by_family[family_index(f)], a.fits[family_index(f)].aic);
  }
}

TEST(IndependenceTree, NominalLeaves) {
  const auto t = independence_tree(0.05);
  EXPECT_NEAR(t.leaf[family_index(FamilyKind::Poisson)], 90.25, 1e-12);
  EXPECT_NEAR(t.leaf[family_index(FamilyKind::ZIP)], 4.75, 1e-12);
  EXPECT_NEAR(t.leaf[family_index(FamilyKind::NB2)], 4.75, 1e-12);
  EXPECT_NEAR(t.leaf[family_index(FamilyKind::ZINB)], 0.25, 1e-12);
  double total = 0.0, rej = 0.0;
  for (int i = 0; i < 4; ++i) {
    total += t.leaf[i];
    rej += t.reject[i];
  }
  EXPECT_NEAR(total, 100.0, 1e-12);
  EXPECT_NEAR(rej, 5.0, 1e-12);
}

TEST(Policy, ParseAndCheck) {
  EXPECT_EQ(parse_policy("lowest_aic"), PolicyKind::LowestAIC);
  EXPECT_EQ(parse_policy(policy_token(PolicyKind::SevenStep)), PolicyKind::SevenStep);
  EXPECT_THROW(parse_policy("bic"), std::invalid_argument);
  const auto d = null_dataset(FamilyKind::Poisson, 50, 1.0, 0, 0, 10.0, 69);
  FitCache fits(d);
  EXPECT_THROW(select(fits, {PolicyKind::SevenStep, 1.5}), std::invalid_argument);
}
