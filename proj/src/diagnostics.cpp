#include "countsel/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace countsel {

TestOutcome dean_lawless(const CountDataset& data, const FitResult& poisson_fit,
                         double alpha) {
  if (poisson_fit.family != FamilyKind::Poisson) {
    throw std::invalid_argument("Dean-Lawless test needs a Poisson fit");
  }
  TestOutcome out;
  out.alpha = alpha;
  if (!poisson_fit.converged) {
    out.statistic = std::numeric_limits<double>::quiet_NaN();
    out.p_value = kFallbackPValue;
    out.fallback = true;
    return out;
  }
  const auto ys = data.y();
  const auto xs = data.x();
  const double b0 = poisson_fit.params.beta0;
  const double bx = poisson_fit.params.betaX;
  double num = 0.0, lam_sq = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const double lam = std::exp(b0 + bx * xs[i]);
    const double y = static_cast<double>(ys[i]);
    num += (y - lam) * (y - lam) - y;
    lam_sq += lam * lam;
  }
  out.statistic = num / std::sqrt(2.0 * lam_sq);
  out.p_value = std::isfinite(out.statistic) ? normal_upper(out.statistic) : kFallbackPValue;
  out.fallback = !std::isfinite(out.statistic);
  return out;
}

namespace {

// Below this every logdL is rounding noise from two numerically equal models.
constexpr double kDegenerateLogdl = 1e-10;

VuongStat vuong_stat(const std::vector<double>& d, double shift) {
  const double n = static_cast<double>(d.size());
  double mean = 0.0;
  for (double v : d) mean += v - shift;
  mean /= n;
  double ss = 0.0;
  for (double v : d) ss += (v - shift - mean) * (v - shift - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  VuongStat s;
  s.statistic = std::sqrt(n) * mean / sd;
  s.p_value = normal_upper(std::abs(s.statistic));
  s.direction = s.statistic > 0.0 ? 1 : (s.statistic < 0.0 ? -1 : 0);
  return s;
}

}  // namespace

VuongOutcome vuong_from_logdl(std::span<const double> logdl, int k_diff, double alpha) {
  VuongOutcome out;
  out.alpha = alpha;
  std::vector<double> d;
  d.reserve(logdl.size());
  for (double v : logdl) {
    if (std::isfinite(v)) {
      d.push_back(v);
    } else {
      ++out.dropped;
    }
  }
  out.n_eff = d.size();
  if (d.size() < 2) {
    out.skipped = true;
    return out;
  }
  double max_abs = 0.0;
  for (double v : d) max_abs = std::max(max_abs, std::abs(v));
  const VuongStat raw = vuong_stat(d, 0.0);
  if (max_abs < kDegenerateLogdl || !std::isfinite(raw.statistic)) {
    out.degenerate = true;
    return out;
  }
  const double n = static_cast<double>(d.size());
  out.raw = raw;
  out.aic = vuong_stat(d, k_diff / n);
  out.bic = vuong_stat(d, k_diff * std::log(n) / (2.0 * n));
  return out;
}

VuongOutcome vuong(const FitResult& restricted, const FitResult& zero_inflated,
                   const CountDataset& data, double alpha) {
  if (restricted.n_obs != data.n() || zero_inflated.n_obs != data.n()) {
    throw std::invalid_argument("Vuong test fits must come from the same data");
  }
  VuongOutcome out;
  out.alpha = alpha;
  if (data.zero_count() < 2 || !restricted.converged || !zero_inflated.converged) {
    out.skipped = true;
    return out;
  }
  const auto a = pointwise_loglik(restricted.family, restricted.params, data);
  const auto b = pointwise_loglik(zero_inflated.family, zero_inflated.params, data);
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = b[i] - a[i];
  return vuong_from_logdl(d, zero_inflated.n_free_params - restricted.n_free_params, alpha);
}

}  // namespace countsel
