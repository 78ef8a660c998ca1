#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "countsel/countdist.hpp"
#include "countsel/fitters.hpp"
#include "countsel/rng.hpp"

namespace countsel::testing {

/// Null-hypothesis dataset: x ~ N(0, x_sd^2), y iid from `family` with the
/// given marginal parameters (no dependence on x).
inline CountDataset null_dataset(FamilyKind family, std::size_t n, double beta0,
                                 double omega, double nu, double x_sd,
                                 std::uint64_t seed, std::uint64_t stream = 0) {
  RngStream rng(seed, stream);
  std::normal_distribution<double> norm(0.0, x_sd);
  std::vector<double> x(n);
  for (auto& v : x) v = norm(rng);
  DistParams p;
  p.lambda = std::exp(beta0);
  p.omega = is_zero_inflated(family) ? omega : 0.0;
  p.nu = has_dispersion(family) ? nu : kInfinity;
  return CountDataset(sample(family, p, n, rng), std::move(x));
}

}  // namespace countsel::testing
