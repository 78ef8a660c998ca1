#include "countsel/fitters.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

namespace countsel {

// ---------------------------------------------------------------------------
// Dataset and parameter plumbing

CountDataset::CountDataset(std::vector<std::int64_t> y, std::vector<double> x)
    : y_(std::move(y)), x_(std::move(x)) {
  if (y_.size() != x_.size()) {
    throw std::invalid_argument("y and x must have the same length");
  }
  if (y_.size() < 2) throw std::invalid_argument("need at least 2 observations");
  for (auto v : y_) {
    if (v < 0) throw std::invalid_argument("counts must be nonnegative");
  }
  for (auto v : x_) {
    if (!std::isfinite(v)) throw std::invalid_argument("covariate must be finite");
  }
}

std::size_t CountDataset::zero_count() const {
  return static_cast<std::size_t>(std::count(y_.begin(), y_.end(), 0));
}

double CountDataset::mean_y() const {
  const double s = std::accumulate(y_.begin(), y_.end(), 0.0);
  return s / static_cast<double>(y_.size());
}

CountDataset CountDataset::shifted(double delta) const {
  std::vector<double> x = x_;
  for (auto& v : x) v += delta;
  return CountDataset(y_, std::move(x));
}

void ModelParams::check(FamilyKind family) const {
  const bool zi = is_zero_inflated(family);
  if (gamma0.has_value() != zi || gammaX.has_value() != zi) {
    throw DomainError("zero-inflation coefficients must be present iff the family is ZIP/ZINB");
  }
  if (nu.has_value() != has_dispersion(family)) {
    throw DomainError("nu must be present iff the family is NB2/ZINB");
  }
  if (nu && !(*nu > 0.0 && std::isfinite(*nu))) {
    throw DomainError("nu must be positive and finite");
  }
  if (!std::isfinite(beta0) || !std::isfinite(betaX) ||
      (zi && (!std::isfinite(*gamma0) || !std::isfinite(*gammaX)))) {
    throw DomainError("regression coefficients must be finite");
  }
}

WaldForm parse_wald_form(std::string_view token) {
  if (token == "chisq" || token == "chi2" || token == "chisquare") return WaldForm::ChiSquare;
  if (token == "f" || token == "F") return WaldForm::F;
  if (token == "mixed") return WaldForm::Mixed;
  throw std::invalid_argument("unknown wald form '" + std::string(token) + "'");
}

std::string_view wald_form_token(WaldForm form) {
  switch (form) {
    case WaldForm::ChiSquare: return "chisq";
    case WaldForm::F: return "f";
    case WaldForm::Mixed: return "mixed";
  }
  return "chisq";
}

namespace {

constexpr int kBeta0 = 0;
constexpr int kBetaX = 1;
constexpr int kGamma0 = 2;
constexpr int kGammaX = 3;

// Linear predictors of one observation: log-mean, logit of the zero
// probability, and log-dispersion.
enum Component { kEta = 0, kZeta = 1, kTau = 2 };

struct Layout {
  FamilyKind family;
  int k;
  bool zi;
  bool nb;
  int tau;  // index of log nu, -1 if absent
  std::array<Component, 5> comp;
  std::array<bool, 5> times_x;
};

Layout layout_for(FamilyKind f) {
  Layout L{};
  L.family = f;
  L.k = n_free_params(f);
  L.zi = is_zero_inflated(f);
  L.nb = has_dispersion(f);
  L.comp = {kEta, kEta, kZeta, kZeta, kTau};
  L.times_x = {false, true, false, true, false};
  L.tau = -1;
  if (f == FamilyKind::NB2) {
    L.tau = 2;
    L.comp[2] = kTau;
    L.times_x[2] = false;
  } else if (f == FamilyKind::ZINB) {
    L.tau = 4;
  }
  return L;
}

double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Base count log-pmf and its derivatives in (eta, tau).
struct BaseTerms {
  double l = 0.0;
  double e = 0.0, t = 0.0;
  double ee = 0.0, et = 0.0, tt = 0.0;
};

constexpr std::int64_t kSumLimit = 1000;

BaseTerms base_terms(bool nb, double eta, double tau, std::int64_t y, bool deriv) {
  BaseTerms b;
  const double lambda = std::exp(eta);
  const double yd = static_cast<double>(y);
  if (!nb) {
    b.l = (y == 0) ? -lambda : yd * eta - lambda - detail::log_factorial(y);
    if (deriv) {
      b.e = yd - lambda;
      b.ee = -lambda;
    }
    return b;
  }

  const double nu = std::exp(tau);
  const double s = nu + lambda;
  const double log1p_ratio = std::log1p(lambda / nu);
  double head = 0.0, s1 = 0.0, s2 = 0.0;
  if (y <= kSumLimit) {
    for (std::int64_t j = 0; j < y; ++j) {
      const double jd = static_cast<double>(j);
      if (j > 0) head += std::log1p(jd / nu);
      if (deriv) {
        const double inv = 1.0 / (nu + jd);
        s1 += inv;
        s2 += inv * inv;
      }
    }
  } else {
    head = boost::math::lgamma(yd + nu) - boost::math::lgamma(nu) - yd * tau;
    if (deriv) {
      s1 = boost::math::digamma(yd + nu) - boost::math::digamma(nu);
      s2 = boost::math::trigamma(nu) - boost::math::trigamma(yd + nu);
    }
  }
  b.l = head - detail::log_factorial(y) + (y > 0 ? yd * eta : 0.0) -
        (nu + yd) * log1p_ratio;
  if (deriv) {
    const double s_sq = s * s;
    b.e = nu * (yd - lambda) / s;
    b.ee = -nu * lambda * (nu + yd) / s_sq;
    const double l_nu = s1 - log1p_ratio + (lambda - yd) / s;
    const double l_nunu = -s2 + lambda / (nu * s) - (lambda - yd) / s_sq;
    const double l_enu = (yd - lambda) * lambda / s_sq;
    b.t = nu * l_nu;
    b.tt = nu * l_nu + nu * nu * l_nunu;
    b.et = nu * l_enu;
  }
  return b;
}

// Per-observation log-likelihood with gradient/Hessian in (eta, zeta, tau).
struct ObsTerms {
  double l = 0.0;
  double g[3] = {0.0, 0.0, 0.0};
  double h[3][3] = {{0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}};
};

void obs_terms(const Layout& L, double eta, double zeta, double tau,
               std::int64_t y, bool deriv, ObsTerms& o) {
  const BaseTerms b = base_terms(L.nb, eta, tau, y, deriv);
  if (!L.zi) {
    o.l = b.l;
    if (deriv) {
      o.g[kEta] = b.e;
      o.g[kTau] = b.t;
      o.h[kEta][kEta] = b.ee;
      o.h[kEta][kTau] = o.h[kTau][kEta] = b.et;
      o.h[kTau][kTau] = b.tt;
    }
    return;
  }

  const double om = logistic(zeta);
  if (y > 0) {
    o.l = b.l - softplus(zeta);
    if (deriv) {
      o.g[kEta] = b.e;
      o.g[kZeta] = -om;
      o.g[kTau] = b.t;
      o.h[kEta][kEta] = b.ee;
      o.h[kEta][kTau] = o.h[kTau][kEta] = b.et;
      o.h[kTau][kTau] = b.tt;
      o.h[kZeta][kZeta] = -om * (1.0 - om);
      o.h[kEta][kZeta] = o.h[kZeta][kEta] = 0.0;
      o.h[kTau][kZeta] = o.h[kZeta][kTau] = 0.0;
    }
    return;
  }

  // y == 0: log(omega + (1 - omega) p0) = logsumexp(zeta, log p0) - softplus(zeta).
  const double lse = detail::log_sum_exp(zeta, b.l);
  o.l = lse - softplus(zeta);
  if (deriv) {
    const double q = std::exp(b.l - lse);   // weight of the count process
    const double p = std::exp(zeta - lse);  // weight of the structural zero
    const double qq = q * p;
    o.g[kEta] = q * b.e;
    o.g[kZeta] = p - om;
    o.g[kTau] = q * b.t;
    o.h[kEta][kEta] = qq * b.e * b.e + q * b.ee;
    o.h[kEta][kTau] = o.h[kTau][kEta] = qq * b.e * b.t + q * b.et;
    o.h[kTau][kTau] = qq * b.t * b.t + q * b.tt;
    o.h[kZeta][kZeta] = qq - om * (1.0 - om);
    o.h[kEta][kZeta] = o.h[kZeta][kEta] = -qq * b.e;
    o.h[kTau][kZeta] = o.h[kZeta][kTau] = -qq * b.t;
  }
}

void predictors(const Layout& L, const Eigen::VectorXd& th, double x,
                double& eta, double& zeta, double& tau) {
  eta = th[kBeta0] + th[kBetaX] * x;
  zeta = L.zi ? th[kGamma0] + th[kGammaX] * x : 0.0;
  tau = L.tau >= 0 ? th[L.tau] : 0.0;
}

// Full log-likelihood; derivatives filled when the pointers are non-null.
double evaluate(const Layout& L, const Eigen::VectorXd& th, const CountDataset& data,
                Eigen::VectorXd* grad, Eigen::MatrixXd* hess,
                std::vector<double>* pointwise = nullptr) {
  const bool deriv = grad != nullptr || hess != nullptr;
  const int k = L.k;
  double g[5] = {0, 0, 0, 0, 0};
  double h[5][5] = {};
  double total = 0.0;
  const auto ys = data.y();
  const auto xs = data.x();
  ObsTerms o;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    double eta, zeta, tau;
    predictors(L, th, xs[i], eta, zeta, tau);
    obs_terms(L, eta, zeta, tau, ys[i], deriv, o);
    total += o.l;
    if (pointwise) pointwise->push_back(o.l);
    if (!deriv) continue;
    double m[5];
    for (int a = 0; a < k; ++a) m[a] = L.times_x[a] ? xs[i] : 1.0;
    for (int a = 0; a < k; ++a) {
      g[a] += o.g[L.comp[a]] * m[a];
      for (int c = a; c < k; ++c) h[a][c] += o.h[L.comp[a]][L.comp[c]] * m[a] * m[c];
    }
  }
  if (grad) {
    grad->resize(k);
    for (int a = 0; a < k; ++a) (*grad)[a] = g[a];
  }
  if (hess) {
    hess->resize(k, k);
    for (int a = 0; a < k; ++a) {
      for (int c = a; c < k; ++c) (*hess)(a, c) = (*hess)(c, a) = h[a][c];
    }
  }
  return total;
}

Eigen::VectorXd checked_pack(FamilyKind family, const ModelParams& p) {
  p.check(family);
  return pack(family, p);
}

// ---------------------------------------------------------------------------
// Box-constrained Newton ascent

using EvalFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*,
                                    Eigen::MatrixXd*)>;

struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  void clamp(Eigen::VectorXd& th) const {
    th = th.cwiseMax(lo).cwiseMin(hi);
  }
  bool at_lower(const Eigen::VectorXd& th, int i) const { return th[i] <= lo[i]; }
  bool at_upper(const Eigen::VectorXd& th, int i) const { return th[i] >= hi[i]; }
};

struct NewtonResult {
  Eigen::VectorXd theta;
  double value = -kInfinity;
  int iterations = 0;
  bool converged = false;
};

std::vector<int> free_set(const Box& box, const Eigen::VectorXd& th,
                          const Eigen::VectorXd& g) {
  std::vector<int> idx;
  for (int i = 0; i < th.size(); ++i) {
    if (box.lo[i] == box.hi[i]) continue;
    if (box.at_lower(th, i) && g[i] <= 0.0) continue;
    if (box.at_upper(th, i) && g[i] >= 0.0) continue;
    idx.push_back(i);
  }
  return idx;
}

constexpr double kAbsLoglikTol = 1e-7;

NewtonResult newton_ascent(const EvalFn& f, Eigen::VectorXd theta, const Box& box,
                           int max_iter, double rel_tol, double grad_tol,
                           std::vector<double>* trace) {
  NewtonResult r;
  box.clamp(theta);
  Eigen::VectorXd g;
  Eigen::MatrixXd H;
  double val = f(theta, &g, &H);
  r.theta = theta;
  r.value = val;
  if (!std::isfinite(val) || !g.allFinite() || !H.allFinite()) return r;

  for (int iter = 0; iter < max_iter; ++iter) {
    const std::vector<int> fr = free_set(box, theta, g);
    double pg = 0.0;
    for (int i : fr) pg = std::max(pg, std::abs(g[i]));
    if (pg < grad_tol) {
      r.converged = true;
      break;
    }
    r.iterations = iter + 1;

    const int m = static_cast<int>(fr.size());
    Eigen::MatrixXd A(m, m);
    Eigen::VectorXd gf(m);
    for (int a = 0; a < m; ++a) {
      gf[a] = g[fr[a]];
      for (int c = 0; c < m; ++c) A(a, c) = -H(fr[a], fr[c]);
    }
    // Newton direction on the Jacobi-scaled system. Where that is not positive
    // definite the eigenvalues are replaced by their (floored) magnitudes, so
    // weakly curved directions still get full-size steps.
    Eigen::VectorXd sc = A.diagonal().cwiseAbs().cwiseSqrt();
    for (int a = 0; a < m; ++a) {
      if (!(sc[a] > 0.0) || !std::isfinite(sc[a])) sc[a] = 1.0;
    }
    const Eigen::VectorXd inv_sc = sc.cwiseInverse();
    const Eigen::MatrixXd As = inv_sc.asDiagonal() * A * inv_sc.asDiagonal();
    const Eigen::VectorXd gs = inv_sc.cwiseProduct(gf);
    bool regularised = false;
    Eigen::VectorXd d;
    Eigen::LLT<Eigen::MatrixXd> llt(As);
    if (llt.info() == Eigen::Success) {
      d = inv_sc.cwiseProduct(llt.solve(gs));
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(As);
      if (es.info() != Eigen::Success) break;
      Eigen::VectorXd ev = es.eigenvalues().cwiseAbs();
      ev = ev.cwiseMax(1e-8 * std::max(1.0, ev.maxCoeff()));
      d = inv_sc.cwiseProduct(
          es.eigenvectors() * (es.eigenvectors().transpose() * gs).cwiseQuotient(ev));
      regularised = true;
    }
    if (!d.allFinite()) break;
    // Predicted increase of the quadratic model; below the tolerance the
    // iterate is stationary. The tolerance is relative but capped at
    // kAbsLoglikTol, so slow drifts (nu -> infinity) still finish below
    // nested fits' slack; the floor stays above summation rounding.
    const double tol = std::max(std::min(rel_tol * std::max(1.0, std::abs(val)), kAbsLoglikTol),
                                1e-13 * std::abs(val));
    const bool small_decrement = !regularised && 0.5 * gf.dot(d) < tol;

    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd cand = theta;
    double cand_val = val;
    for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
      cand = theta;
      for (int a = 0; a < m; ++a) cand[fr[a]] += step * d[a];
      box.clamp(cand);
      cand_val = f(cand, nullptr, nullptr);
      if (std::isfinite(cand_val) &&
          (cand_val > val || (cand_val == val && step == 1.0))) {
        accepted = true;
        break;
      }
      // Nothing left to gain: halving further only chases rounding noise.
      if (small_decrement) break;
    }
    if (!accepted) {
      r.converged = small_decrement;
      break;
    }

    const double gain = cand_val - val;
    theta = cand;
    val = f(theta, &g, &H);
    if (trace) trace->push_back(val);
    r.theta = theta;
    r.value = val;
    if (!g.allFinite() || !H.allFinite()) break;
    if (small_decrement || (step == 1.0 && !regularised && gain < tol)) {
      r.converged = true;
      break;
    }
  }
  return r;
}

Box fit_box(const Layout& L, bool null_model) {
  Box box;
  box.lo = Eigen::VectorXd::Constant(L.k, -kInfinity);
  box.hi = Eigen::VectorXd::Constant(L.k, kInfinity);
  if (L.zi) box.lo[kGamma0] = kGamma0Lower;
  if (L.tau >= 0) {
    box.lo[L.tau] = kLogNuLower;
    box.hi[L.tau] = kLogNuUpper;
  }
  if (null_model) {
    box.lo[kBetaX] = box.hi[kBetaX] = 0.0;
    if (L.zi) box.lo[kGammaX] = box.hi[kGammaX] = 0.0;
  }
  return box;
}

// ---------------------------------------------------------------------------
// EM pass for the zero-inflated families: latent structural-zero indicator.

Eigen::VectorXd em_passes(const Layout& L, Eigen::VectorXd theta, const Box& box,
                          const CountDataset& data, int passes,
                          std::vector<double>* trace) {
  const auto ys = data.y();
  const auto xs = data.x();
  const std::size_t n = ys.size();
  std::vector<double> z(n, 0.0);
  double prev = evaluate(L, theta, data, nullptr, nullptr);

  for (int pass = 0; pass < passes; ++pass) {
    // E-step
    for (std::size_t i = 0; i < n; ++i) {
      if (ys[i] != 0) {
        z[i] = 0.0;
        continue;
      }
      double eta, zeta, tau;
      predictors(L, theta, xs[i], eta, zeta, tau);
      const double b0 = base_terms(L.nb, eta, tau, 0, false).l;
      z[i] = std::exp(zeta - detail::log_sum_exp(zeta, b0));
    }

    // M-step, zero part: weighted logistic regression of z on x.
    Box zbox;
    zbox.lo = Eigen::Vector2d(box.lo[kGamma0], box.lo[kGammaX]);
    zbox.hi = Eigen::Vector2d(box.hi[kGamma0], box.hi[kGammaX]);
    EvalFn zero_obj = [&](const Eigen::VectorXd& gm, Eigen::VectorXd* g,
                          Eigen::MatrixXd* H) {
      double v = 0.0;
      Eigen::Vector2d gg = Eigen::Vector2d::Zero();
      Eigen::Matrix2d hh = Eigen::Matrix2d::Zero();
      for (std::size_t i = 0; i < n; ++i) {
        const double zeta = gm[0] + gm[1] * xs[i];
        v += z[i] * zeta - softplus(zeta);
        if (g || H) {
          const double om = logistic(zeta);
          const Eigen::Vector2d m(1.0, xs[i]);
          gg += (z[i] - om) * m;
          hh -= om * (1.0 - om) * m * m.transpose();
        }
      }
      if (g) *g = gg;
      if (H) *H = hh;
      return v;
    };
    Eigen::VectorXd gm = Eigen::Vector2d(theta[kGamma0], theta[kGammaX]);
    gm = newton_ascent(zero_obj, gm, zbox, 50, 1e-12, 1e-8, nullptr).theta;
    theta[kGamma0] = gm[0];
    theta[kGammaX] = gm[1];

    // M-step, count part: base model weighted by 1 - z.
    std::vector<int> idx{kBeta0, kBetaX};
    if (L.tau >= 0) idx.push_back(L.tau);
    const int kc = static_cast<int>(idx.size());
    Box cbox;
    cbox.lo.resize(kc);
    cbox.hi.resize(kc);
    for (int a = 0; a < kc; ++a) {
      cbox.lo[a] = box.lo[idx[a]];
      cbox.hi[a] = box.hi[idx[a]];
    }
    EvalFn count_obj = [&](const Eigen::VectorXd& c, Eigen::VectorXd* g,
                           Eigen::MatrixXd* H) {
      const bool deriv = g || H;
      double v = 0.0;
      Eigen::VectorXd gg = Eigen::VectorXd::Zero(kc);
      Eigen::MatrixXd hh = Eigen::MatrixXd::Zero(kc, kc);
      const double tau = kc == 3 ? c[2] : 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double w = 1.0 - z[i];
        if (w <= 0.0) continue;
        const BaseTerms b = base_terms(L.nb, c[0] + c[1] * xs[i], tau, ys[i], deriv);
        v += w * b.l;
        if (!deriv) continue;
        const double x = xs[i];
        gg[0] += w * b.e;
        gg[1] += w * b.e * x;
        hh(0, 0) += w * b.ee;
        hh(0, 1) += w * b.ee * x;
        hh(1, 1) += w * b.ee * x * x;
        if (kc == 3) {
          gg[2] += w * b.t;
          hh(0, 2) += w * b.et;
          hh(1, 2) += w * b.et * x;
          hh(2, 2) += w * b.tt;
        }
      }
      if (g) *g = gg;
      if (H) {
        *H = hh.selfadjointView<Eigen::Upper>();
      }
      return v;
    };
    Eigen::VectorXd c(kc);
    for (int a = 0; a < kc; ++a) c[a] = theta[idx[a]];
    c = newton_ascent(count_obj, c, cbox, 50, 1e-12, 1e-8, nullptr).theta;
    for (int a = 0; a < kc; ++a) theta[idx[a]] = c[a];

    const double cur = evaluate(L, theta, data, nullptr, nullptr);
    if (trace) trace->push_back(cur);
    if (!std::isfinite(cur)) break;
    if (cur - prev < 1e-10 * std::max(1.0, std::abs(cur))) break;
    prev = cur;
  }
  return theta;
}

FitResult run_fit(FamilyKind family, const CountDataset& data,
                  const ModelParams& start, const FitOptions& opt, bool null_model) {
  const Layout L = layout_for(family);
  const Box box = fit_box(L, null_model);
  FitResult res;
  res.family = family;
  res.n_obs = data.n();
  res.n_free_params = L.k - (null_model ? (L.zi ? 2 : 1) : 0);

  Eigen::VectorXd theta = checked_pack(family, start);
  if (null_model) {
    theta[kBetaX] = 0.0;
    if (L.zi) theta[kGammaX] = 0.0;
  }
  std::vector<double>* trace = opt.record_trace ? &res.trace : nullptr;
  EvalFn obj = [&](const Eigen::VectorXd& th, Eigen::VectorXd* g, Eigen::MatrixXd* H) {
    return evaluate(L, th, data, g, H);
  };

  box.clamp(theta);
  if (trace) trace->push_back(evaluate(L, theta, data, nullptr, nullptr));

  NewtonResult nr = newton_ascent(obj, theta, box, opt.max_iter, opt.rel_tol,
                                  opt.grad_tol, trace);
  int iterations = nr.iterations;
  if (!nr.converged && L.zi && opt.allow_em) {
    res.used_em = true;
    Eigen::VectorXd em_start = std::isfinite(nr.value) ? nr.theta : theta;
    Eigen::VectorXd th = em_passes(L, em_start, box, data, 200, trace);
    NewtonResult again = newton_ascent(obj, th, box, opt.max_iter, opt.rel_tol,
                                       opt.grad_tol, trace);
    if (std::isfinite(again.value) &&
        (again.converged || !std::isfinite(nr.value) || again.value >= nr.value)) {
      nr = again;
    }
    iterations += again.iterations;
  }
  res.iterations = iterations;

  theta = nr.theta;
  res.params = unpack(family, theta);
  res.loglik = nr.value;

  // Observed information over the parameters not pinned at a bound.
  Eigen::VectorXd g;
  Eigen::MatrixXd H;
  const double ll = evaluate(L, theta, data, &g, &H);
  std::vector<int> fr;
  for (int i = 0; i < L.k; ++i) {
    if (box.lo[i] == box.hi[i]) continue;
    if (box.at_lower(theta, i) || box.at_upper(theta, i)) {
      res.at_bound = true;
      continue;
    }
    fr.push_back(i);
  }
  // With omega pinned at ~0 the slope of the zero part carries no information.
  if (L.zi && box.at_lower(theta, kGamma0)) {
    std::erase(fr, kGammaX);
  }
  res.cov = Eigen::MatrixXd::Zero(L.k, L.k);
  bool ok = nr.converged && std::isfinite(ll) && H.allFinite();
  if (ok) {
    const int m = static_cast<int>(fr.size());
    Eigen::MatrixXd info(m, m);
    for (int a = 0; a < m; ++a) {
      for (int c = 0; c < m; ++c) info(a, c) = -H(fr[a], fr[c]);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(info);
    const auto ev = es.eigenvalues();
    if (es.info() != Eigen::Success || !(ev.minCoeff() > 0.0) ||
        ev.minCoeff() < 1e-14 * ev.maxCoeff()) {
      ok = false;
    } else {
      const Eigen::MatrixXd inv =
          es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
      for (int a = 0; a < m; ++a) {
        for (int c = 0; c < m; ++c) res.cov(fr[a], fr[c]) = inv(a, c);
      }
      res.cov = 0.5 * (res.cov + res.cov.transpose());
    }
  }
  res.converged = ok;
  res.aic = aic(res);
  return res;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public API

Eigen::VectorXd pack(FamilyKind family, const ModelParams& p) {
  const Layout L = layout_for(family);
  Eigen::VectorXd th(L.k);
  th[kBeta0] = p.beta0;
  th[kBetaX] = p.betaX;
  if (L.zi) {
    th[kGamma0] = p.gamma0.value_or(0.0);
    th[kGammaX] = p.gammaX.value_or(0.0);
  }
  if (L.tau >= 0) th[L.tau] = std::log(p.nu.value_or(1.0));
  return th;
}

ModelParams unpack(FamilyKind family, const Eigen::VectorXd& theta) {
  const Layout L = layout_for(family);
  if (theta.size() != L.k) throw std::invalid_argument("parameter vector has wrong size");
  ModelParams p;
  p.beta0 = theta[kBeta0];
  p.betaX = theta[kBetaX];
  if (L.zi) {
    p.gamma0 = theta[kGamma0];
    p.gammaX = theta[kGammaX];
  }
  if (L.tau >= 0) p.nu = std::exp(theta[L.tau]);
  return p;
}

double loglik(FamilyKind family, const ModelParams& params, const CountDataset& data) {
  const Eigen::VectorXd th = checked_pack(family, params);
  const double v = evaluate(layout_for(family), th, data, nullptr, nullptr);
  return std::isnan(v) ? -kInfinity : v;
}

std::vector<double> pointwise_loglik(FamilyKind family, const ModelParams& params,
                                     const CountDataset& data) {
  const Eigen::VectorXd th = checked_pack(family, params);
  std::vector<double> out;
  out.reserve(data.n());
  evaluate(layout_for(family), th, data, nullptr, nullptr, &out);
  return out;
}

Eigen::VectorXd loglik_gradient(FamilyKind family, const ModelParams& params,
                                const CountDataset& data) {
  const Eigen::VectorXd th = checked_pack(family, params);
  Eigen::VectorXd g;
  evaluate(layout_for(family), th, data, &g, nullptr);
  return g;
}

Eigen::MatrixXd loglik_hessian(FamilyKind family, const ModelParams& params,
                               const CountDataset& data) {
  const Eigen::VectorXd th = checked_pack(family, params);
  Eigen::MatrixXd H;
  evaluate(layout_for(family), th, data, nullptr, &H);
  return H;
}

ModelParams initial_params(FamilyKind family, const CountDataset& data,
                           const FitResult* base) {
  ModelParams p;
  if (family == FamilyKind::Poisson) {
    p.beta0 = std::log(std::max(data.mean_y(), 0.1));
    return p;
  }

  const FamilyKind base_family =
      family == FamilyKind::ZINB ? FamilyKind::NB2 : FamilyKind::Poisson;
  FitResult local;
  if (base == nullptr || base->family != base_family) {
    local = fit(base_family, data);
    base = &local;
  }
  ModelParams bp = base->params;
  if (!std::isfinite(bp.beta0) || !std::isfinite(bp.betaX)) {
    bp = initial_params(FamilyKind::Poisson, data);
    if (base_family == FamilyKind::NB2) bp.nu = 1.0;
  }
  p.beta0 = bp.beta0;
  p.betaX = bp.betaX;

  const auto ys = data.y();
  const auto xs = data.x();
  const double n = static_cast<double>(data.n());

  if (family == FamilyKind::NB2) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const double lam = std::exp(bp.beta0 + bp.betaX * xs[i]);
      const double r = static_cast<double>(ys[i]) - lam;
      num += lam * lam;
      den += r * r - static_cast<double>(ys[i]);
    }
    const double nu = den > 0.0 ? num / den : 1e4;
    p.nu = std::clamp(nu, 0.01, 1e4);
    return p;
  }

  // Zero-inflated: count part from the base fit, zero part from the excess
  // of observed over predicted zeros.
  const double nu = bp.nu.value_or(kInfinity);
  double pred0 = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const double lam = std::exp(bp.beta0 + bp.betaX * xs[i]);
    pred0 += nu == kInfinity ? std::exp(-lam) : std::exp(-nu * std::log1p(lam / nu));
  }
  const double excess = static_cast<double>(data.zero_count()) / n - pred0 / n;
  const double w = std::max(excess, 0.01);
  p.gamma0 = std::log(w / (1.0 - w));
  p.gammaX = 0.0;
  if (family == FamilyKind::ZINB) p.nu = std::isfinite(nu) ? nu : 1e4;
  return p;
}

FitResult fit_from(FamilyKind family, const CountDataset& data,
                   const ModelParams& start, const FitOptions& options) {
  return run_fit(family, data, start, options, false);
}

namespace {

bool better(const FitResult& a, const FitResult& b) {
  if (a.converged != b.converged) return a.converged;
  return a.loglik > b.loglik;
}

// Zero-inflated optima often sit close to omega = 0, where Newton from an
// interior start creeps along gamma0. A second start at the embedded base
// model guarantees the fit is never worse than the nested one.
FitResult run_zi(FamilyKind family, const CountDataset& data, ModelParams start,
                 const FitOptions& options, bool null_model) {
  FitResult first = run_fit(family, data, start, options, null_model);
  start.gamma0 = kGamma0Lower;
  start.gammaX = 0.0;
  FitResult second = run_fit(family, data, start, options, null_model);
  second.iterations += first.iterations;
  return better(second, first) ? second : first;
}

}  // namespace

FitResult fit(FamilyKind family, const CountDataset& data, const FitOptions& options,
              const FitResult* base) {
  ModelParams start = initial_params(family, data, base);
  if (!is_zero_inflated(family)) return run_fit(family, data, start, options, false);
  return run_zi(family, data, start, options, false);
}

FitResult fit_null(FamilyKind family, const CountDataset& data, const FitOptions& options) {
  ModelParams start = initial_params(family, data);
  start.betaX = 0.0;
  if (!is_zero_inflated(family)) return run_fit(family, data, start, options, true);
  start.gammaX = 0.0;
  return run_zi(family, data, start, options, true);
}

double aic(const FitResult& fit) {
  if (!fit.converged || !std::isfinite(fit.loglik)) return kInfinity;
  return -2.0 * fit.loglik + 2.0 * fit.n_free_params;
}

TestOutcome wald_test(const FitResult& fit, double alpha, WaldForm form) {
  TestOutcome out;
  out.alpha = alpha;
  // A zero part pinned at the boundary leaves only the count slope to test.
  const bool zi = is_zero_inflated(fit.family) && fit.cov.rows() > kGammaX &&
                  fit.cov(kGammaX, kGammaX) != 0.0;
  const int df = zi ? 2 : 1;
  out.df = df;
  auto fallback = [&] {
    out.statistic = std::numeric_limits<double>::quiet_NaN();
    out.p_value = kFallbackPValue;
    out.fallback = true;
    return out;
  };
  if (!fit.converged || fit.cov.rows() < 2) return fallback();

  if (!zi) {
    const double var = fit.cov(kBetaX, kBetaX);
    if (!(var > 0.0) || !std::isfinite(var)) return fallback();
    out.statistic = fit.params.betaX * fit.params.betaX / var;
  } else {
    Eigen::Matrix2d sub;
    sub << fit.cov(kBetaX, kBetaX), fit.cov(kBetaX, kGammaX),
        fit.cov(kGammaX, kBetaX), fit.cov(kGammaX, kGammaX);
    Eigen::LLT<Eigen::Matrix2d> llt(sub);
    if (llt.info() != Eigen::Success || !sub.allFinite()) return fallback();
    const Eigen::Vector2d v(fit.params.betaX, fit.params.gammaX.value_or(0.0));
    out.statistic = v.dot(llt.solve(v));
  }
  if (!std::isfinite(out.statistic)) return fallback();

  if (form == WaldForm::ChiSquare || (form == WaldForm::Mixed && is_zero_inflated(fit.family))) {
    out.p_value = chisq_upper(out.statistic, df);
  } else {
    const int df2 = static_cast<int>(fit.n_obs) - fit.n_free_params;
    if (df2 < 1) return fallback();
    out.p_value = f_upper(out.statistic / df, df, df2);
  }
  return out;
}

TestOutcome deviance_lrt(const FitResult& fit_full, const FitResult& fit_null,
                         double alpha) {
  if (fit_full.family != fit_null.family) {
    throw std::invalid_argument("LRT requires fits of the same family");
  }
  const int df = fit_full.n_free_params - fit_null.n_free_params;
  if (df < 0) throw std::invalid_argument("null model has more parameters than full model");
  TestOutcome out;
  out.alpha = alpha;
  out.df = df;
  double stat = 2.0 * (fit_full.loglik - fit_null.loglik);
  if (!std::isfinite(stat)) {
    out.statistic = std::numeric_limits<double>::quiet_NaN();
    out.p_value = kFallbackPValue;
    out.fallback = true;
    return out;
  }
  if (stat < 0.0) {
    stat = 0.0;
    out.flagged = true;
  }
  out.statistic = stat;
  out.p_value = chisq_upper(stat, df);
  return out;
}

double poisson_deviance(const CountDataset& data, double beta0, double betaX) {
  const auto ys = data.y();
  const auto xs = data.x();
  double d = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const double lam = std::exp(beta0 + betaX * xs[i]);
    const double y = static_cast<double>(ys[i]);
    d += (ys[i] > 0 ? y * std::log(y / lam) : 0.0) - (y - lam);
  }
  return 2.0 * d;
}

double chisq_upper(double statistic, int df) {
  if (std::isnan(statistic)) return std::numeric_limits<double>::quiet_NaN();
  if (statistic <= 0.0 || df <= 0) return 1.0;
  if (statistic == kInfinity) return 0.0;
  return boost::math::cdf(
      boost::math::complement(boost::math::chi_squared_distribution<double>(df), statistic));
}

double normal_cdf(double z) {
  if (std::isnan(z)) return z;
  if (z == kInfinity) return 1.0;
  if (z == -kInfinity) return 0.0;
  return boost::math::cdf(boost::math::normal_distribution<double>(), z);
}

double normal_upper(double z) {
  if (std::isnan(z)) return z;
  if (z == kInfinity) return 0.0;
  if (z == -kInfinity) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::normal_distribution<double>(), z));
}

double f_upper(double statistic, int df1, int df2) {
  if (std::isnan(statistic)) return statistic;
  if (statistic <= 0.0) return 1.0;
  if (statistic == kInfinity) return 0.0;
  return boost::math::cdf(boost::math::complement(
      boost::math::fisher_f_distribution<double>(df1, df2), statistic));
}

}  // namespace countsel
