#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "countsel/diagnostics.hpp"
#include "test_support.hpp"

using namespace countsel;
using countsel::testing::null_dataset;

namespace {

// 1 - Phi(-1) to 16 digits.
constexpr double kUpperTailMinusOne = 0.8413447460685429;

// logdL = (.1, -.2, .3, 0, .05): mean .05, sd (n-1) 0.18027756377319946.
constexpr double kVuongExampleV = 0.620173672946042281;
constexpr double kVuongExampleP = 0.26757172619887528;

FitResult fixed_fit(FamilyKind f, std::size_t n, ModelParams p) {
  FitResult r;
  r.family = f;
  r.params = p;
  r.converged = true;
  r.n_obs = n;
  r.n_free_params = n_free_params(f);
  return r;
}

}  // namespace

TEST(DeanLawless, ZeroResidualExample) {
  CountDataset d({1, 1}, {0.0, 3.0});
  const auto t = dean_lawless(d, fixed_fit(FamilyKind::Poisson, 2, {}));
  EXPECT_NEAR(t.statistic, -1.0, 1e-15);
  EXPECT_NEAR(t.p_value, kUpperTailMinusOne, 1e-14);
  EXPECT_FALSE(t.rejects());
}

TEST(DeanLawless, FailedFitFallsBack) {
  CountDataset d({1, 1}, {0.0, 3.0});
  auto f = fixed_fit(FamilyKind::Poisson, 2, {});
  f.converged = false;
  const auto t = dean_lawless(d, f);
  EXPECT_TRUE(t.fallback);
  EXPECT_DOUBLE_EQ(t.p_value, kFallbackPValue);
  EXPECT_THROW(dean_lawless(d, fixed_fit(FamilyKind::NB2, 2, {})), std::invalid_argument);
}

TEST(DeanLawless, PermutationInvariant) {
  const auto d = null_dataset(FamilyKind::NB2, 300, 1.0, 0, 2.0, 10.0, 41);
  const auto pf = fit(FamilyKind::Poisson, d);
  std::vector<std::size_t> idx(d.n());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 g(5);
  std::shuffle(idx.begin(), idx.end(), g);
  std::vector<std::int64_t> y;
  std::vector<double> x;
  for (auto i : idx) {
    y.push_back(d.y()[i]);
    x.push_back(d.x()[i]);
  }
  const auto a = dean_lawless(d, pf);
  const auto b = dean_lawless(CountDataset(y, x), pf);
  EXPECT_NEAR(a.statistic, b.statistic, 1e-10 * std::abs(a.statistic));
}

TEST(DeanLawless, NullCalibration) {
  int rejections = 0;
  const int reps = 2000;
  for (int r = 0; r < reps; ++r) {
    const auto d = null_dataset(FamilyKind::Poisson, 1000, 1.0, 0, 0, 10.0, 77, r);
    rejections += dean_lawless(d, fit(FamilyKind::Poisson, d)).rejects();
  }
  const double rate = static_cast<double>(rejections) / reps;
  EXPECT_GE(rate, 0.03);
  EXPECT_LE(rate, 0.06);
}

TEST(DeanLawless, DetectsStrongOverdispersion) {
  // phi = 1/3, dispersion index 4
  int rejections = 0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    const double lambda = std::exp(1.0);
    const auto d = null_dataset(FamilyKind::NB2, 500, 1.0, 0, lambda / 3.0, 10.0, 78, r);
    rejections += dean_lawless(d, fit(FamilyKind::Poisson, d)).rejects();
  }
  EXPECT_GE(rejections, static_cast<int>(0.95 * reps));
}

TEST(Vuong, HandExample) {
  const std::vector<double> d = {0.1, -0.2, 0.3, 0.0, 0.05};
  const auto v = vuong_from_logdl(d, 0);
  EXPECT_NEAR(v.raw.statistic, kVuongExampleV, 1e-14);
  EXPECT_NEAR(v.raw.p_value, kVuongExampleP, 1e-14);
  EXPECT_EQ(v.raw.direction, 1);
  EXPECT_EQ(v.n_eff, 5u);
  EXPECT_FALSE(v.rejects_toward_zi());
}

TEST(Vuong, CorrectionsPenaliseLargerModel) {
  const std::vector<double> d = {0.1, -0.2, 0.3, 0.0, 0.05};
  const auto v = vuong_from_logdl(d, 2);
  EXPECT_LT(v.aic.statistic, v.raw.statistic);
  EXPECT_LT(v.bic.statistic, v.raw.statistic);
  // same sd, mean shifted by 2/5
  EXPECT_NEAR(v.aic.statistic, (0.05 - 0.4) * std::sqrt(5.0) / 0.18027756377319946, 1e-12);
}

TEST(Vuong, DropsNonFiniteCases) {
  const std::vector<double> d = {0.1, -0.2, INFINITY, 0.3, 0.0, NAN, 0.05};
  const auto v = vuong_from_logdl(d, 0);
  EXPECT_EQ(v.dropped, 2u);
  EXPECT_EQ(v.n_eff, 5u);
  EXPECT_NEAR(v.raw.statistic, kVuongExampleV, 1e-14);
}

TEST(Vuong, IdenticalModelsAreDegenerate) {
  const auto d = null_dataset(FamilyKind::Poisson, 200, 0.5, 0, 0, 10.0, 9);
  const auto pf = fit(FamilyKind::Poisson, d);
  ModelParams zp = pf.params;
  zp.gamma0 = -1000.0;
  zp.gammaX = 0.0;
  const auto v = vuong(pf, fixed_fit(FamilyKind::ZIP, d.n(), zp), d);
  EXPECT_TRUE(v.degenerate);
  EXPECT_DOUBLE_EQ(v.raw.p_value, 1.0);
  EXPECT_FALSE(v.rejects_toward_zi());
}

TEST(Vuong, SkippedWithoutZerosOrFits) {
  CountDataset few({0, 1, 2, 3, 4, 5}, {0, 1, 2, 3, 4, 5});
  const auto pf = fit(FamilyKind::Poisson, few);
  const auto zf = fit(FamilyKind::ZIP, few, {}, &pf);
  EXPECT_TRUE(vuong(pf, zf, few).skipped);

  const auto d = null_dataset(FamilyKind::ZIP, 200, 1.0, 0.3, 0, 10.0, 10);
  auto p2 = fit(FamilyKind::Poisson, d);
  const auto z2 = fit(FamilyKind::ZIP, d, {}, &p2);
  p2.converged = false;
  const auto v = vuong(p2, z2, d);
  EXPECT_TRUE(v.skipped);
  EXPECT_DOUBLE_EQ(v.raw.p_value, 1.0);
}

TEST(Vuong, AntisymmetricAndAicBelowRaw) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto d = null_dataset(s % 2 ? FamilyKind::ZIP : FamilyKind::ZINB, 150, 1.0, 0.15,
                                2.0, 10.0, 500 + s);
    const auto pf = fit(FamilyKind::Poisson, d);
    const auto zf = fit(FamilyKind::ZIP, d, {}, &pf);
    const auto ab = vuong(pf, zf, d);
    const auto ba = vuong(zf, pf, d);
    if (ab.skipped || ab.degenerate) continue;
    EXPECT_NEAR(ab.raw.statistic, -ba.raw.statistic, 1e-9 * (1.0 + std::abs(ab.raw.statistic)));
    EXPECT_EQ(ab.dropped, ba.dropped);
    EXPECT_LE(ab.aic.statistic, ab.raw.statistic);
    EXPECT_LE(ab.bic.statistic, ab.aic.statistic);
  }
}

TEST(Vuong, DetectsStrongZeroInflation) {
  int hits = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto d = null_dataset(FamilyKind::ZIP, 500, 1.5, 0.3, 0, 10.0, 700, s);
    const auto pf = fit(FamilyKind::Poisson, d);
    hits += vuong(pf, fit(FamilyKind::ZIP, d, {}, &pf), d).rejects_toward_zi();
  }
  EXPECT_GE(hits, 48);
}

TEST(Vuong, RarelyFavoursZipOnPoissonData) {
  int hits = 0;
  const int reps = 500;
  for (int r = 0; r < reps; ++r) {
    const auto d = null_dataset(FamilyKind::Poisson, 250, 0.5, 0, 0, 10.0, 800, r);
    const auto pf = fit(FamilyKind::Poisson, d);
    hits += vuong(pf, fit(FamilyKind::ZIP, d, {}, &pf), d).rejects_toward_zi();
  }
  EXPECT_LE(hits, reps / 20);
}
