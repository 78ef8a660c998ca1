#pragma once

#include <array>
#include <optional>
#include <string_view>

#include "countsel/diagnostics.hpp"
#include "countsel/fitters.hpp"

namespace countsel {

enum class PolicyKind { SevenStep = 0, LowestAIC = 1 };

inline constexpr std::array<PolicyKind, 2> kAllPolicies = {PolicyKind::SevenStep,
                                                          PolicyKind::LowestAIC};

std::string_view policy_token(PolicyKind p);  // "seven_step", "lowest_aic"
PolicyKind parse_policy(std::string_view token);

struct SelectionPolicy {
  PolicyKind kind = PolicyKind::SevenStep;
  double alpha = 0.05;
  WaldForm wald_form = WaldForm::ChiSquare;

  /// Throws std::invalid_argument unless alpha is in (0, 1).
  void check() const;
};

struct SelectionTrace {
  PolicyKind policy = PolicyKind::SevenStep;
  double alpha = 0.05;
  std::optional<double> dl_p;
  std::optional<double> vuong_pois_zip_p;
  std::optional<double> vuong_nb_zinb_p;
  /// Direction of whichever Vuong test was run: +1 towards the ZI model.
  std::optional<int> vuong_direction;
  std::array<double, 4> aic_by_family{kInfinity, kInfinity, kInfinity, kInfinity};
  FamilyKind chosen = FamilyKind::Poisson;
  double final_p = 1.0;
  bool rejected_h0 = false;
  /// Some fit the decision depended on failed and a fallback p-value was used.
  bool fallback_used = false;
};

/// Fits of one dataset, computed on first use. NB2 and ZIP start from the
/// Poisson fit, ZINB from the NB2 fit. Holds a reference to `data`.
class FitCache {
 public:
  explicit FitCache(const CountDataset& data, FitOptions options = {});

  const CountDataset& data() const { return data_; }
  const FitResult& get(FamilyKind family);
  bool has(FamilyKind family) const { return fits_[family_index(family)].has_value(); }
  /// Supplies a precomputed fit, replacing any cached one.
  void put(FitResult result) { fits_[family_index(result.family)] = std::move(result); }

 private:
  const CountDataset& data_;
  FitOptions options_;
  std::array<std::optional<FitResult>, 4> fits_;
};

/// The sequential procedure: Dean-Lawless, then Vuong(Poisson, ZIP) or
/// Vuong(NB2, ZINB), then the Wald test of the chosen model.
SelectionTrace select_seven_step(FitCache& fits, const SelectionPolicy& policy);
SelectionTrace select_seven_step(const CountDataset& data, double alpha = 0.05,
                                 WaldForm form = WaldForm::ChiSquare);

/// Wald test of the family with the smallest AIC; ties go to the simpler family.
SelectionTrace select_lowest_aic(FitCache& fits, const SelectionPolicy& policy);
SelectionTrace select_lowest_aic(const CountDataset& data, double alpha = 0.05,
                                 WaldForm form = WaldForm::ChiSquare);

SelectionTrace select(FitCache& fits, const SelectionPolicy& policy);

/// Everything both policies look at for one dataset.
struct Analysis {
  std::array<FitResult, 4> fits;
  std::array<TestOutcome, 4> wald;
  TestOutcome dean_lawless;
  VuongOutcome vuong_pois_zip;
  VuongOutcome vuong_nb_zinb;
  SelectionTrace seven_step;
  SelectionTrace lowest_aic;
};

Analysis analyze(const CountDataset& data, double alpha = 0.05,
                 WaldForm form = WaldForm::ChiSquare, const FitOptions& options = {});

/// Expected node counts per 100 datasets of the seven-step tree when every
/// test is independent and exactly at level alpha.
struct IndependenceTree {
  double dl_accept = 0.0;
  double dl_reject = 0.0;
  std::array<double, 4> leaf{};    ///< Poisson, NB2, ZIP, ZINB
  std::array<double, 4> reject{};  ///< leaf * alpha
};

IndependenceTree independence_tree(double alpha);

}  // namespace countsel
