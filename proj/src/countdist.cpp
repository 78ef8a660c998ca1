#include "countsel/countdist.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <random>
#include <string>

#include <boost/math/special_functions/gamma.hpp>

namespace countsel {

std::string_view family_token(FamilyKind f) {
  switch (f) {
    case FamilyKind::Poisson: return "pois";
    case FamilyKind::NB2: return "nb";
    case FamilyKind::ZIP: return "zip";
    case FamilyKind::ZINB: return "zinb";
  }
  return "?";
}

std::string_view family_name(FamilyKind f) {
  switch (f) {
    case FamilyKind::Poisson: return "Poisson";
    case FamilyKind::NB2: return "NB";
    case FamilyKind::ZIP: return "ZIP";
    case FamilyKind::ZINB: return "ZINB";
  }
  return "?";
}

FamilyKind parse_family(std::string_view token) {
  std::string t(token);
  std::transform(t.begin(), t.end(), t.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (t == "pois" || t == "poisson") return FamilyKind::Poisson;
  if (t == "nb" || t == "nb2" || t == "negbin") return FamilyKind::NB2;
  if (t == "zip") return FamilyKind::ZIP;
  if (t == "zinb") return FamilyKind::ZINB;
  throw std::invalid_argument("unknown family '" + std::string(token) + "'");
}

void validate(FamilyKind family, const DistParams& p) {
  if (!(p.lambda > 0.0) || !std::isfinite(p.lambda)) {
    throw DomainError("lambda must be positive and finite");
  }
  if (!(p.omega >= 0.0 && p.omega < 1.0)) {
    throw DomainError("omega must lie in [0, 1)");
  }
  if (!(p.nu > 0.0)) {
    throw DomainError("nu must be positive or +infinity");
  }
  if (!is_zero_inflated(family) && p.omega != 0.0) {
    throw DomainError("omega must be 0 for non-zero-inflated families");
  }
  if (!has_dispersion(family) && p.nu != kInfinity) {
    throw DomainError("nu must be +infinity for Poisson and ZIP");
  }
}

namespace detail {

namespace {

constexpr std::int64_t kFactorialTable = 1024;
constexpr std::int64_t kCoefSumLimit = 1000;

const std::array<double, kFactorialTable>& log_factorials() {
  static const auto table = [] {
    std::array<double, kFactorialTable> t{};
    for (std::int64_t k = 0; k < kFactorialTable; ++k) {
      t[k] = boost::math::lgamma(static_cast<double>(k) + 1.0);
    }
    return t;
  }();
  return table;
}

}  // namespace

double log_factorial(std::int64_t y) {
  if (y < kFactorialTable) return log_factorials()[y];
  return boost::math::lgamma(static_cast<double>(y) + 1.0);
}

double log_sum_exp(double a, double b) {
  if (a == -kInfinity) return b;
  if (b == -kInfinity) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

double log_nb_coef(std::int64_t y, double nu) {
  if (y <= kCoefSumLimit) {
    double s = 0.0;
    for (std::int64_t j = 0; j < y; ++j) s += std::log(nu + static_cast<double>(j));
    return s - log_factorial(y);
  }
  return boost::math::lgamma(static_cast<double>(y) + nu) -
         boost::math::lgamma(nu) - log_factorial(y);
}

double poisson_log_pmf(double lambda, std::int64_t y) {
  if (y == 0) return -lambda;
  return static_cast<double>(y) * std::log(lambda) - lambda - log_factorial(y);
}

double nb2_log_pmf(double lambda, double nu, std::int64_t y) {
  // Written with log1p(lambda/nu) so that large nu reduces smoothly to Poisson:
  // sum_j log1p(j/nu) - log y! + y log(lambda) - (nu + y) log1p(lambda/nu).
  const double yd = static_cast<double>(y);
  const double tail = (nu + yd) * std::log1p(lambda / nu);
  double head;
  if (y <= kCoefSumLimit) {
    double s = 0.0;
    for (std::int64_t j = 1; j < y; ++j) s += std::log1p(static_cast<double>(j) / nu);
    head = s - log_factorial(y);
  } else {
    head = log_nb_coef(y, nu) - yd * std::log(nu);
  }
  return head + (y > 0 ? yd * std::log(lambda) : 0.0) - tail;
}

}  // namespace detail

double log_pmf(FamilyKind family, const DistParams& p, std::int64_t y) {
  validate(family, p);
  if (y < 0) throw DomainError("count must be nonnegative");

  const bool poisson_base = (p.nu == kInfinity);
  const double base = poisson_base ? detail::poisson_log_pmf(p.lambda, y)
                                   : detail::nb2_log_pmf(p.lambda, p.nu, y);
  if (!is_zero_inflated(family) || p.omega == 0.0) return base;

  const double log_omega = std::log(p.omega);
  const double log_keep = std::log1p(-p.omega);
  if (y == 0) return detail::log_sum_exp(log_omega, log_keep + base);
  return log_keep + base;
}

Moments moments(FamilyKind family, const DistParams& p) {
  validate(family, p);
  const double inv_nu = (p.nu == kInfinity) ? 0.0 : 1.0 / p.nu;
  const double keep = 1.0 - p.omega;
  Moments m;
  m.mean = p.lambda * keep;
  m.variance = keep * (p.lambda + p.lambda * p.lambda * (p.omega + inv_nu));
  m.dispersion_index = 1.0 + p.lambda * (p.omega + inv_nu);
  return m;
}

std::int64_t sample_one(FamilyKind family, const DistParams& p, RngStream& rng) {
  if (is_zero_inflated(family) && p.omega > 0.0 && rng.uniform() < p.omega) {
    return 0;
  }
  double mean = p.lambda;
  if (p.nu != kInfinity) {
    std::gamma_distribution<double> gamma(p.nu, p.lambda / p.nu);
    mean = gamma(rng);
    if (!(mean > 0.0)) return 0;
  }
  std::poisson_distribution<std::int64_t> pois(mean);
  return pois(rng);
}

std::vector<std::int64_t> sample(FamilyKind family, const DistParams& p,
                                 std::size_t n, RngStream& rng) {
  validate(family, p);
  std::vector<std::int64_t> out(n);
  for (auto& v : out) v = sample_one(family, p, rng);
  return out;
}

}  // namespace countsel
