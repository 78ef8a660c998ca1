#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "countsel/family.hpp"
#include "countsel/rng.hpp"

namespace countsel {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Distribution parameters for a single observation.
///
/// `nu` is the NB2 dispersion; `kInfinity` is the sentinel for the Poisson
/// and ZIP families and selects the exact Poisson code path.
struct DistParams {
  double lambda = 1.0;
  double omega = 0.0;
  double nu = kInfinity;
};

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
  double dispersion_index = 1.0;
};

/// Throws DomainError unless `p` is a valid parameter set for `family`.
void validate(FamilyKind family, const DistParams& p);

/// Natural-log probability of `y`. Returns -inf for zero-probability events.
double log_pmf(FamilyKind family, const DistParams& p, std::int64_t y);

Moments moments(FamilyKind family, const DistParams& p);

/// `n` independent draws. Zero-inflated families are drawn compositionally
/// (Bernoulli(omega) structural zero, else a base count); NB2 is drawn as a
/// gamma(shape nu, scale lambda/nu) mixture of Poissons.
std::vector<std::int64_t> sample(FamilyKind family, const DistParams& p,
                                 std::size_t n, RngStream& rng);

/// Single draw; same scheme as `sample`.
std::int64_t sample_one(FamilyKind family, const DistParams& p, RngStream& rng);

namespace detail {

/// log Gamma(y + nu) - log Gamma(nu) - log Gamma(y + 1) for integer y >= 0.
double log_nb_coef(std::int64_t y, double nu);

/// log(y!) with a lookup table for small y.
double log_factorial(std::int64_t y);

/// log(exp(a) + exp(b)) without overflow.
double log_sum_exp(double a, double b);

/// Poisson log-pmf without validation.
double poisson_log_pmf(double lambda, std::int64_t y);

/// NB2 log-pmf without validation; nu finite.
double nb2_log_pmf(double lambda, double nu, std::int64_t y);

}  // namespace detail

}  // namespace countsel
