#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

namespace countsel {

/// The four count-regression families, in the fixed reporting order.
enum class FamilyKind : int { Poisson = 0, NB2 = 1, ZIP = 2, ZINB = 3 };

inline constexpr std::array<FamilyKind, 4> kAllFamilies{
    FamilyKind::Poisson, FamilyKind::NB2, FamilyKind::ZIP, FamilyKind::ZINB};

constexpr int family_index(FamilyKind f) { return static_cast<int>(f); }

constexpr bool is_zero_inflated(FamilyKind f) {
  return f == FamilyKind::ZIP || f == FamilyKind::ZINB;
}

constexpr bool has_dispersion(FamilyKind f) {
  return f == FamilyKind::NB2 || f == FamilyKind::ZINB;
}

/// Free parameters in the regression model: Poisson 2, NB2 3, ZIP 4, ZINB 5.
constexpr int n_free_params(FamilyKind f) {
  switch (f) {
    case FamilyKind::Poisson: return 2;
    case FamilyKind::NB2: return 3;
    case FamilyKind::ZIP: return 4;
    case FamilyKind::ZINB: return 5;
  }
  return 0;
}

/// Short lowercase token used on the command line and in CSV files.
std::string_view family_token(FamilyKind f);

/// Human-readable name ("Poisson", "NB", "ZIP", "ZINB").
std::string_view family_name(FamilyKind f);

/// Parses "pois"/"poisson", "nb"/"nb2", "zip", "zinb" (case-insensitive).
FamilyKind parse_family(std::string_view token);

/// Raised for out-of-domain distribution or model parameters.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace countsel
