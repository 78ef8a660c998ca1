#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "countsel/countdist.hpp"
#include "countsel/family.hpp"

namespace countsel {

/// Observed counts paired with a single real covariate.
class CountDataset {
 public:
  /// Throws std::invalid_argument unless sizes match, n >= 2 and y >= 0.
  CountDataset(std::vector<std::int64_t> y, std::vector<double> x);

  std::span<const std::int64_t> y() const { return y_; }
  std::span<const double> x() const { return x_; }
  std::size_t n() const { return y_.size(); }

  std::size_t zero_count() const;
  double mean_y() const;

  /// Same counts with every covariate shifted by `delta`.
  CountDataset shifted(double delta) const;

 private:
  std::vector<std::int64_t> y_;
  std::vector<double> x_;
};

/// Regression coefficients. lambda_i = exp(beta0 + betaX x_i) and, for the
/// zero-inflated families, omega_i = logistic(gamma0 + gammaX x_i).
struct ModelParams {
  double beta0 = 0.0;
  double betaX = 0.0;
  std::optional<double> gamma0;
  std::optional<double> gammaX;
  std::optional<double> nu;

  /// Throws DomainError if the presence pattern does not match `family`.
  void check(FamilyKind family) const;
};

/// Reference distribution of the Wald statistic. Mixed uses F for Poisson and
/// NB2 and chi-square for the zero-inflated families.
enum class WaldForm { ChiSquare, F, Mixed };

WaldForm parse_wald_form(std::string_view token);
std::string_view wald_form_token(WaldForm form);  // "chisq", "f", "mixed"

/// Outcome of a hypothesis test.
struct TestOutcome {
  double statistic = 0.0;
  std::optional<int> df;  ///< present iff the reference is chi-square (or F numerator)
  double p_value = 1.0;
  double alpha = 0.05;
  bool fallback = false;  ///< p-value came from the fit-failure policy
  bool flagged = false;   ///< numerical clamp (LRT) or degeneracy (Vuong)

  bool rejects() const { return p_value < alpha; }
};

struct FitOptions {
  int max_iter = 200;
  double rel_tol = 1e-8;
  double grad_tol = 1e-6;
  bool allow_em = true;
  bool record_trace = false;
};

struct FitResult {
  FamilyKind family = FamilyKind::Poisson;
  ModelParams params;
  /// Inverse observed information over the free parameters, ordered
  /// (beta0, betaX[, gamma0, gammaX][, log nu]). Rows and columns of a
  /// parameter pinned at a box bound are zero.
  Eigen::MatrixXd cov;
  double loglik = -kInfinity;
  double aic = kInfinity;
  int n_free_params = 0;
  std::size_t n_obs = 0;
  bool converged = false;
  int iterations = 0;
  bool used_em = false;
  bool at_bound = false;
  /// Log-likelihood after every accepted iterate (only with record_trace).
  std::vector<double> trace;
};

/// Fallback p-value used when a required fit fails.
inline constexpr double kFallbackPValue = 0.99;

/// Box bounds applied during fitting.
inline constexpr double kGamma0Lower = -30.0;
inline constexpr double kLogNuLower = -13.815510557964274;  // log(1e-6)
inline constexpr double kLogNuUpper = 18.420680743952367;   // log(1e8)

// --- parameter packing ----------------------------------------------------

/// Optimisation vector (beta0, betaX[, gamma0, gammaX][, log nu]).
Eigen::VectorXd pack(FamilyKind family, const ModelParams& p);
ModelParams unpack(FamilyKind family, const Eigen::VectorXd& theta);

// --- likelihood -----------------------------------------------------------

double loglik(FamilyKind family, const ModelParams& params,
              const CountDataset& data);

/// Per-observation log-likelihood contributions.
std::vector<double> pointwise_loglik(FamilyKind family, const ModelParams& params,
                                     const CountDataset& data);

/// Analytic score with respect to the packed vector.
Eigen::VectorXd loglik_gradient(FamilyKind family, const ModelParams& params,
                                const CountDataset& data);

/// Analytic Hessian with respect to the packed vector.
Eigen::MatrixXd loglik_hessian(FamilyKind family, const ModelParams& params,
                               const CountDataset& data);

// --- fitting --------------------------------------------------------------

/// Starting values. `base` is the Poisson fit (for NB2, ZIP) or the NB2 fit
/// (for ZINB); when absent it is computed.
ModelParams initial_params(FamilyKind family, const CountDataset& data,
                           const FitResult* base = nullptr);

/// Maximum likelihood fit. Never throws for numerical trouble; a failed fit
/// comes back with converged = false.
FitResult fit(FamilyKind family, const CountDataset& data,
              const FitOptions& options = {}, const FitResult* base = nullptr);

/// Fit of the null model of `family`: betaX (and gammaX) held at zero.
FitResult fit_null(FamilyKind family, const CountDataset& data,
                   const FitOptions& options = {});

/// Fit from explicit starting values.
FitResult fit_from(FamilyKind family, const CountDataset& data,
                   const ModelParams& start, const FitOptions& options = {});

// --- inference ------------------------------------------------------------

/// Wald test of H0: betaX = 0 (Poisson, NB2) or betaX = gammaX = 0 (ZIP, ZINB).
TestOutcome wald_test(const FitResult& fit, double alpha = 0.05,
                      WaldForm form = WaldForm::ChiSquare);

/// Likelihood-ratio test, statistic 2 (ll_full - ll_null) = D0 - D1.
TestOutcome deviance_lrt(const FitResult& fit_full, const FitResult& fit_null,
                         double alpha = 0.05);

/// -2 loglik + 2 k when converged, +inf otherwise.
double aic(const FitResult& fit);

/// Poisson deviance of `data` against fitted means exp(beta0 + betaX x).
double poisson_deviance(const CountDataset& data, double beta0, double betaX);

// --- reference distributions ----------------------------------------------

double chisq_upper(double statistic, int df);
double normal_upper(double z);
double normal_cdf(double z);
double f_upper(double statistic, int df1, int df2);

}  // namespace countsel
