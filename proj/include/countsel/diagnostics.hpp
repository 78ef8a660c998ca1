#pragma once

#include <cstddef>
#include <span>

#include "countsel/fitters.hpp"

namespace countsel {

/// Dean-Lawless score test for overdispersion from a Poisson fit; one-sided,
/// large T1 means overdispersion. Non-converged fit gives the 0.99 fallback.
TestOutcome dean_lawless(const CountDataset& data, const FitResult& poisson_fit,
                         double alpha = 0.05);

/// One variant of the Vuong statistic.
struct VuongStat {
  double statistic = 0.0;
  double p_value = 1.0;  ///< 1 - Phi(|V|)
  int direction = 0;     ///< +1 favours the second model, -1 the first, 0 neither
};

struct VuongOutcome {
  VuongStat raw;
  VuongStat aic;  ///< logdL shifted by (k2 - k1) / n_eff
  VuongStat bic;  ///< logdL shifted by (k2 - k1) log(n_eff) / (2 n_eff)
  double alpha = 0.05;
  std::size_t n_eff = 0;
  std::size_t dropped = 0;  ///< non-finite logdL cases left out
  bool degenerate = false;  ///< logdL identically (numerically) zero
  bool skipped = false;     ///< fewer than two zeros or a failed fit

  /// Raw variant significant in favour of the zero-inflated (second) model.
  bool rejects_toward_zi() const {
    return !skipped && !degenerate && raw.direction > 0 && raw.p_value < alpha;
  }
};

/// Vuong test of `restricted` (Poisson or NB2) against `zero_inflated` (ZIP or
/// ZINB) fitted to `data`; logdL_i = log p_zi(y_i) - log p_restricted(y_i).
VuongOutcome vuong(const FitResult& restricted, const FitResult& zero_inflated,
                   const CountDataset& data, double alpha = 0.05);

/// Vuong statistics from precomputed logdL; k_diff = k_second - k_first.
VuongOutcome vuong_from_logdl(std::span<const double> logdl, int k_diff,
                              double alpha = 0.05);

}  // namespace countsel
