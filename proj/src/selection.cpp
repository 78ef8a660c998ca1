#include "countsel/selection.hpp"

#include <stdexcept>
#include <string>

namespace countsel {

std::string_view policy_token(PolicyKind p) {
  return p == PolicyKind::SevenStep ? "seven_step" : "lowest_aic";
}

PolicyKind parse_policy(std::string_view token) {
  if (token == "seven_step" || token == "sevenstep" || token == "seven") {
    return PolicyKind::SevenStep;
  }
  if (token == "lowest_aic" || token == "aic") return PolicyKind::LowestAIC;
  throw std::invalid_argument("unknown policy '" + std::string(token) + "'");
}

void SelectionPolicy::check() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
}

FitCache::FitCache(const CountDataset& data, FitOptions options)
    : data_(data), options_(options) {}

const FitResult& FitCache::get(FamilyKind family) {
  auto& slot = fits_[family_index(family)];
  if (!slot) {
    switch (family) {
      case FamilyKind::Poisson:
        slot = fit(family, data_, options_);
        break;
      case FamilyKind::NB2:
      case FamilyKind::ZIP:
        slot = fit(family, data_, options_, &get(FamilyKind::Poisson));
        break;
      case FamilyKind::ZINB:
        slot = fit(family, data_, options_, &get(FamilyKind::NB2));
        break;
    }
  }
  return *slot;
}

namespace {

void finish(SelectionTrace& t, const FitResult& chosen, const SelectionPolicy& policy) {
  t.chosen = chosen.family;
  const TestOutcome w = wald_test(chosen, policy.alpha, policy.wald_form);
  t.final_p = w.p_value;
  t.fallback_used = t.fallback_used || w.fallback;
  t.rejected_h0 = t.final_p < policy.alpha;
}

}  // namespace

SelectionTrace select_seven_step(FitCache& fits, const SelectionPolicy& policy) {
  policy.check();
  SelectionTrace t;
  t.policy = PolicyKind::SevenStep;
  t.alpha = policy.alpha;
  const CountDataset& data = fits.data();

  const FitResult& pois = fits.get(FamilyKind::Poisson);
  const TestOutcome dl = dean_lawless(data, pois, policy.alpha);
  t.dl_p = dl.p_value;
  t.fallback_used = dl.fallback;

  const FamilyKind restricted = dl.rejects() ? FamilyKind::NB2 : FamilyKind::Poisson;
  const FamilyKind inflated = dl.rejects() ? FamilyKind::ZINB : FamilyKind::ZIP;
  const FitResult& r = fits.get(restricted);
  const FitResult& z = fits.get(inflated);
  const VuongOutcome v = vuong(r, z, data, policy.alpha);
  (dl.rejects() ? t.vuong_nb_zinb_p : t.vuong_pois_zip_p) = v.raw.p_value;
  t.vuong_direction = v.raw.direction;
  // A skipped test for lack of zeros is part of the procedure, not a failure.
  t.fallback_used = t.fallback_used || !r.converged || !z.converged;

  finish(t, v.rejects_toward_zi() ? z : r, policy);
  return t;
}

SelectionTrace select_lowest_aic(FitCache& fits, const SelectionPolicy& policy) {
  policy.check();
  SelectionTrace t;
  t.policy = PolicyKind::LowestAIC;
  t.alpha = policy.alpha;
  const FitResult* best = nullptr;
  for (FamilyKind f : kAllFamilies) {
    const FitResult& r = fits.get(f);
    t.aic_by_family[family_index(f)] = r.aic;
    if (r.converged && (best == nullptr || r.aic < best->aic)) best = &r;
  }
  if (best == nullptr) {
    t.chosen = FamilyKind::Poisson;
    t.final_p = kFallbackPValue;
    t.fallback_used = true;
    t.rejected_h0 = false;
    return t;
  }
  finish(t, *best, policy);
  return t;
}

SelectionTrace select(FitCache& fits, const SelectionPolicy& policy) {
  return policy.kind == PolicyKind::SevenStep ? select_seven_step(fits, policy)
                                              : select_lowest_aic(fits, policy);
}

SelectionTrace select_seven_step(const CountDataset& data, double alpha, WaldForm form) {
  FitCache fits(data);
  return select_seven_step(fits, {PolicyKind::SevenStep, alpha, form});
}

SelectionTrace select_lowest_aic(const CountDataset& data, double alpha, WaldForm form) {
  FitCache fits(data);
  return select_lowest_aic(fits, {PolicyKind::LowestAIC, alpha, form});
}

Analysis analyze(const CountDataset& data, double alpha, WaldForm form,
                 const FitOptions& options) {
  FitCache cache(data, options);
  Analysis a;
  for (FamilyKind f : kAllFamilies) {
    a.fits[family_index(f)] = cache.get(f);
    a.wald[family_index(f)] = wald_test(cache.get(f), alpha, form);
  }
  a.dean_lawless = dean_lawless(data, cache.get(FamilyKind::Poisson), alpha);
  a.vuong_pois_zip =
      vuong(cache.get(FamilyKind::Poisson), cache.get(FamilyKind::ZIP), data, alpha);
  a.vuong_nb_zinb = vuong(cache.get(FamilyKind::NB2), cache.get(FamilyKind::ZINB), data, alpha);
  a.seven_step = select_seven_step(cache, {PolicyKind::SevenStep, alpha, form});
  a.lowest_aic = select_lowest_aic(cache, {PolicyKind::LowestAIC, alpha, form});
  return a;
}

IndependenceTree independence_tree(double alpha) {
  IndependenceTree t;
  t.dl_accept = 100.0 * (1.0 - alpha);
  t.dl_reject = 100.0 * alpha;
  t.leaf[family_index(FamilyKind::Poisson)] = t.dl_accept * (1.0 - alpha);
  t.leaf[family_index(FamilyKind::ZIP)] = t.dl_accept * alpha;
  t.leaf[family_index(FamilyKind::NB2)] = t.dl_reject * (1.0 - alpha);
  t.leaf[family_index(FamilyKind::ZINB)] = t.dl_reject * alpha;
  for (int i = 0; i < 4; ++i) t.reject[i] = t.leaf[i] * alpha;
  return t;
}

}  // namespace countsel
