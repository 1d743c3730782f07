#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "crm/error.hpp"
#include "crm/model.hpp"

namespace crm {

/// Distance from an estimated toxicity probability to the target.
/// over_weight == 1 is the symmetric |p - theta|; larger values penalise
/// overshooting the target: over_weight * (p - theta)^+ + (theta - p)^+.
struct Distance {
  double over_weight = 1.0;

  static Distance symmetric() { return {1.0}; }
  static Distance asymmetric(double w) {
    if (!(w >= 1.0)) throw Error(ErrorCode::InvalidPolicy, "over_weight must be at least 1");
    return {w};
  }

  bool is_symmetric() const noexcept { return over_weight == 1.0; }

  double operator()(double p, double theta) const noexcept {
    if (p > theta) return std::isinf(over_weight) ? std::numeric_limits<double>::infinity() : over_weight * (p - theta);
    return theta - p;
  }

  friend bool operator==(const Distance&, const Distance&) = default;
};

enum class TieBreak { Lower, Upper };

struct TargetChoice {
  DoseIndex dose = 0;
  bool tied = false;
};

/// The dose whose probability is closest to theta; equidistant doses go to
/// the lower index unless told otherwise.
inline TargetChoice closest_to_target(std::span<const double> probs, double theta, Distance distance = {},
                                      TieBreak tie = TieBreak::Lower) {
  if (probs.empty()) throw Error(ErrorCode::InvalidConfig, "no doses to choose from");
  TargetChoice best;
  double best_d = std::numeric_limits<double>::infinity();
  bool have = false;
  for (DoseIndex i = 0; i < probs.size(); ++i) {
    const double d = distance(probs[i], theta);
    if (!have || d < best_d) {
      best_d = d;
      best.dose = i;
      best.tied = false;
      have = true;
    } else if (d == best_d) {
      best.tied = true;
      if (tie == TieBreak::Upper) best.dose = i;
    }
  }
  return best;
}

}  // namespace crm
