#pragma once

// Partition of the parameter interval [A,B] into the k regions on which
// each dose is the closest to target, the per-dose consistency constants,
// and the estimating-function diagnostics built on the score.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crm/error.hpp"
#include "crm/history.hpp"
#include "crm/likelihood.hpp"
#include "crm/model.hpp"
#include "crm/numerics.hpp"
#include "crm/target.hpp"

namespace crm {

/// kappas[0] = A < kappas[1] < ... < kappas[k] = B. Interval i (zero-based)
/// is [kappas[i], kappas[i+1]); B belongs to the last interval.
struct Partition {
  Bounds bounds;
  double theta = 0.0;
  std::vector<double> kappas;

  std::size_t dose_count() const noexcept { return kappas.empty() ? 0 : kappas.size() - 1; }

  DoseIndex interval_of(double a) const {
    if (a < bounds.lower || a > bounds.upper)
      throw Error(ErrorCode::ParameterOutOfDomain, "parameter outside the partitioned interval");
    const auto it = std::upper_bound(kappas.begin() + 1, kappas.end() - 1, a);
    return static_cast<DoseIndex>(it - (kappas.begin() + 1));
  }

  double width(DoseIndex i) const { return kappas.at(i + 1) - kappas.at(i); }
};

/// Solves psi(d_i, kappa) + psi(d_{i+1}, kappa) = 2 theta for each adjacent
/// pair, after checking psi(d_i, B) < theta < psi(d_i, A) for every dose.
inline Partition compute_partition(const WorkingModel& model, double theta, std::optional<Bounds> bounds = std::nullopt) {
  detail::require_one_parameter(model);
  if (!(theta > 0.0 && theta < 1.0)) throw Error(ErrorCode::InvalidConfig, "target must lie in (0,1)");
  const Bounds b = bounds.value_or(model.bounds());
  if (!(b.lower < b.upper)) throw Error(ErrorCode::InvalidConfig, "partition bounds must satisfy A < B");
  const std::size_t k = model.dose_count();
  for (DoseIndex i = 0; i < k; ++i) {
    const double at_upper = model.psi(i, b.upper);
    const double at_lower = model.psi(i, b.lower);
    if (!(at_upper < theta && theta < at_lower))
      throw Error(ErrorCode::Infeasible, "dose " + std::to_string(i + 1) +
                                              " violates psi(d,B) < theta < psi(d,A) on [" + std::to_string(b.lower) +
                                              ", " + std::to_string(b.upper) + "]");
  }
  Partition p{b, theta, {}};
  p.kappas.reserve(k + 1);
  p.kappas.push_back(b.lower);
  for (DoseIndex i = 0; i + 1 < k; ++i) {
    auto gap = [&](double a) { return model.psi(i, a) + model.psi(i + 1, a) - 2.0 * theta; };
    if (!((gap(b.lower) > 0.0) && (gap(b.upper) < 0.0)))
      throw Error(ErrorCode::Infeasible, "no crossing for doses " + std::to_string(i + 1) + "/" + std::to_string(i + 2));
    p.kappas.push_back(numerics::bisect(gap, b.lower, b.upper, 1e-12));
  }
  p.kappas.push_back(b.upper);
  for (std::size_t i = 1; i < p.kappas.size(); ++i)
    if (!(p.kappas[i] > p.kappas[i - 1]))
      throw Error(ErrorCode::NonUnique, "partition points are not strictly increasing near dose " + std::to_string(i));
  return p;
}

/// A union of disjoint open intervals.
struct IntervalSet {
  std::vector<std::pair<double, double>> pieces;

  bool contains(double a) const noexcept {
    for (const auto& [lo, hi] : pieces)
      if (a > lo && a < hi) return true;
    return false;
  }
  bool is_interval() const noexcept { return pieces.size() == 1; }
};

struct ConsistencyReport {
  std::vector<double> a_constants;     // psi(d_i, a_i) = R(d_i)
  DoseIndex mtd = 0;                   // d_0
  bool mtd_tied = false;
  double theta0 = 0.0;                 // R(d_0)
  double a0 = 0.0;
  IntervalSet s_set;                   // S(a_0)
  std::vector<bool> members_in_set;
  std::vector<std::string> warnings;

  bool consistent() const noexcept {
    return std::all_of(members_in_set.begin(), members_in_set.end(), [](bool b) { return b; });
  }
};

namespace detail {

inline bool strictly_closest(const WorkingModel& model, DoseIndex target_dose, double a, double theta) {
  const double d0 = std::abs(model.psi(target_dose, a) - theta);
  for (DoseIndex i = 0; i < model.dose_count(); ++i)
    if (i != target_dose && !(d0 < std::abs(model.psi(i, a) - theta))) return false;
  return true;
}

}  // namespace detail

/// Per-dose constants a_i, the true MTD d_0, and the set S(a_0) of
/// parameter values under which the model recommends d_0.
inline ConsistencyReport check_consistency(const WorkingModel& model, std::span<const double> true_tox, double theta,
                                           std::size_t scan_points = 4000) {
  detail::require_one_parameter(model);
  const std::size_t k = model.dose_count();
  if (true_tox.size() != k) throw Error(ErrorCode::InvalidConfig, "true curve and skeleton differ in length");
  for (DoseIndex i = 0; i < k; ++i) {
    if (!(true_tox[i] > 0.0 && true_tox[i] < 1.0))
      throw Error(ErrorCode::InvalidConfig, "true toxicity at dose " + std::to_string(i + 1) + " outside (0,1)");
    if (i > 0 && !(true_tox[i] > true_tox[i - 1]))
      throw Error(ErrorCode::InvalidConfig, "true toxicity curve is not strictly increasing");
  }
  const Bounds b = model.bounds();
  ConsistencyReport report;
  for (DoseIndex i = 0; i < k; ++i) {
    auto f = [&](double a) { return model.psi(i, a) - true_tox[i]; };
    if (!(f(b.lower) > 0.0 && f(b.upper) < 0.0))
      throw Error(ErrorCode::Infeasible, "true toxicity at dose " + std::to_string(i + 1) + " is not attainable within the model bounds");
    report.a_constants.push_back(numerics::bisect(f, b.lower, b.upper, 1e-13));
  }
  const TargetChoice choice = closest_to_target(true_tox, theta);
  report.mtd = choice.dose;
  report.mtd_tied = choice.tied;
  if (choice.tied) report.warnings.push_back("true curve has equidistant doses; the lower one is taken as the MTD");
  report.theta0 = true_tox[report.mtd];
  report.a0 = report.a_constants[report.mtd];

  // S(a_0): scan for changes in the closest dose, refine each change point.
  // Positive-only kinds are scanned on a log axis.
  const bool log_axis = b.lower > 0.0;
  auto to_axis = [&](double a) { return log_axis ? std::log(a) : a; };
  auto from_axis = [&](double u) { return log_axis ? std::exp(u) : u; };
  const double u_lo = to_axis(b.lower);
  const double u_hi = to_axis(b.upper);
  const double step = (u_hi - u_lo) / static_cast<double>(scan_points);
  auto inside = [&](double a) { return detail::strictly_closest(model, report.mtd, a, theta); };
  bool prev = inside(b.lower);
  double start = b.lower;
  for (std::size_t s = 1; s <= scan_points; ++s) {
    const double hi = s == scan_points ? b.upper : from_axis(u_lo + step * static_cast<double>(s));
    const double lo = from_axis(u_lo + step * static_cast<double>(s - 1));
    const bool now = inside(hi);
    if (now == prev) continue;
    double l = lo, h = hi;
    while (h - l > 1e-13 * std::max(1.0, std::abs(h))) {
      const double mid = 0.5 * (l + h);
      (inside(mid) == prev ? l : h) = mid;
    }
    const double edge = 0.5 * (l + h);
    if (prev) report.s_set.pieces.emplace_back(start, edge);
    start = edge;
    prev = now;
  }
  if (prev) report.s_set.pieces.emplace_back(start, b.upper);
  if (report.s_set.pieces.size() > 1)
    report.warnings.push_back("S(a0) is not a single interval for this skeleton");

  for (DoseIndex i = 0; i < k; ++i)
    report.members_in_set.push_back(inside(report.a_constants[i]));
  return report;
}

/// s(t, x, a) = t psi'/psi + (1 - t)(-psi')/(1 - psi).
inline double estimating_term(const WorkingModel& model, double t, DoseIndex dose, double a) {
  detail::require_one_parameter(model);
  const DoseTerms term = model.terms(dose, a);
  return t * term.dlog - (1.0 - t) * term.odds() * term.dlog;
}

/// I_n(a): the per-patient average of s(y_j, x_j, a).
inline double estimating_function(const WorkingModel& model, const TrialHistory& history, double a) {
  if (history.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : history.records()) total += estimating_term(model, r.toxicity, r.dose, a);
  return total / static_cast<double>(history.size());
}

/// The dose-level form sum_i pi_n(d_i) s{R(d_i), d_i, a}.
inline double estimating_function_by_dose(const WorkingModel& model, std::span<const double> allocation,
                                          std::span<const double> true_tox, double a) {
  if (allocation.size() != model.dose_count() || true_tox.size() != model.dose_count())
    throw Error(ErrorCode::InvalidConfig, "allocation and true curve must match the dose count");
  double total = 0.0;
  for (DoseIndex i = 0; i < allocation.size(); ++i)
    if (allocation[i] != 0.0) total += allocation[i] * estimating_term(model, true_tox[i], i, a);
  return total;
}

}  // namespace crm
