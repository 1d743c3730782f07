#pragma once

// Binary-response log-likelihood of the working model, its score and
// information, maximum likelihood, and the Wald-type interval for the
// toxicity probability at the next dose.

#include <array>
#include <cmath>
#include <limits>
#include <utility>

#include <boost/math/distributions/normal.hpp>

#include "crm/error.hpp"
#include "crm/history.hpp"
#include "crm/model.hpp"
#include "crm/numerics.hpp"

namespace crm {

namespace detail {

inline void require_one_parameter(const WorkingModel& model) {
  if (!model.one_parameter())
    throw Error(ErrorCode::InvalidConfig, "operation requires a one-parameter model");
}

inline void require_same_grid(const WorkingModel& model, const DoseTally& tally) {
  if (tally.dose_count() != model.dose_count())
    throw Error(ErrorCode::InvalidHistory, "tally and model dose counts differ");
}

}  // namespace detail

/// Log-likelihood up to the constant that does not involve a. Empty data
/// gives 0 (the log of an empty product).
inline double log_likelihood(const WorkingModel& model, const DoseTally& tally, double a) {
  detail::require_one_parameter(model);
  detail::require_same_grid(model, tally);
  double total = 0.0;
  for (DoseIndex i = 0; i < tally.dose_count(); ++i) {
    const double n = tally.patients[i];
    if (n == 0.0) continue;
    const double t = tally.events[i];
    const DoseTerms term = model.terms(i, a);
    if (t > 0.0) total += t * term.log_psi;
    if (n - t > 0.0) total += (n - t) * term.log1m_psi;
  }
  return total;
}

/// d log L / d a.
inline double score(const WorkingModel& model, const DoseTally& tally, double a) {
  detail::require_one_parameter(model);
  detail::require_same_grid(model, tally);
  double total = 0.0;
  for (DoseIndex i = 0; i < tally.dose_count(); ++i) {
    const double n = tally.patients[i];
    if (n == 0.0) continue;
    const double t = tally.events[i];
    const DoseTerms term = model.terms(i, a);
    total += t * term.dlog - (n - t) * term.odds() * term.dlog;
  }
  return total;
}

/// -d^2 log L / d a^2, optionally restricted to the non-toxic terms.
inline double observed_information(const WorkingModel& model, const DoseTally& tally, double a,
                                   bool non_toxic_only = false) {
  detail::require_one_parameter(model);
  detail::require_same_grid(model, tally);
  double total = 0.0;
  for (DoseIndex i = 0; i < tally.dose_count(); ++i) {
    const double n = tally.patients[i];
    if (n == 0.0) continue;
    const double t = tally.events[i];
    const DoseTerms term = model.terms(i, a);
    const double odds = term.odds();
    const double inv1m = std::exp(-term.log1m_psi);
    total += (n - t) * (odds * term.dlog * term.dlog * inv1m + odds * term.d2log);
    if (!non_toxic_only) total -= t * term.d2log;
  }
  return total;
}

/// Maximum likelihood estimate of a. Requires at least one toxic and one
/// non-toxic outcome; never returns a boundary value.
inline double mle(const WorkingModel& model, const DoseTally& tally) {
  detail::require_one_parameter(model);
  if (!tally.heterogeneous())
    throw Error(ErrorCode::NoInteriorMaximum,
                "likelihood has no interior maximum: at least one toxic and one non-toxic outcome are required");
  auto fdf = [&](double a) {
    return std::pair{score(model, tally, a), -observed_information(model, tally, a)};
  };
  return numerics::newton_bracketed(fdf, model.bounds().lower, model.bounds().upper, 1e-10);
}

inline double log_likelihood(const WorkingModel& model, const TrialHistory& history, const Params& p) {
  if (model.one_parameter()) return log_likelihood(model, tally_toxicity(history, model.dose_count()), p.a);
  double total = 0.0;
  for (const auto& r : history.records()) {
    const double v = model.psi(r.dose, p);
    total += r.toxicity ? std::log(v) : std::log1p(-v);
  }
  return total;
}

namespace detail {

/// Two-parameter logistic MLE by Newton's method with step halving.
inline Params mle_logistic(const WorkingModel& model, const TrialHistory& history) {
  const std::size_t k = model.dose_count();
  DoseTally tally = tally_toxicity(history, k);
  std::size_t distinct = 0;
  for (double n : tally.patients) distinct += n > 0.0;
  if (distinct < 2)
    throw Error(ErrorCode::NoInteriorMaximum, "two-parameter fit needs data on at least two doses");

  auto loglik = [&](const Params& p) {
    double s = 0.0;
    for (DoseIndex i = 0; i < k; ++i) {
      if (tally.patients[i] == 0.0) continue;
      const double eta = p.a * model.skeleton().alpha(i) + p.b;
      // log psi = -log1p(exp(-eta)), log(1-psi) = -log1p(exp(eta))
      s -= tally.events[i] * std::log1p(std::exp(-eta));
      s -= (tally.patients[i] - tally.events[i]) * std::log1p(std::exp(eta));
    }
    return s;
  };

  const double rate = tally.total_events() / tally.total();
  Params p{1.0, std::log(rate / (1.0 - rate))};
  double current = loglik(p);
  for (int it = 0; it < 200; ++it) {
    double ga = 0.0, gb = 0.0, haa = 0.0, hab = 0.0, hbb = 0.0;
    for (DoseIndex i = 0; i < k; ++i) {
      const double n = tally.patients[i];
      if (n == 0.0) continue;
      const double al = model.skeleton().alpha(i);
      const double v = model.psi(i, p);
      const double resid = tally.events[i] - n * v;
      const double w = n * v * (1.0 - v);
      ga += resid * al;
      gb += resid;
      haa += w * al * al;
      hab += w * al;
      hbb += w;
    }
    if (std::hypot(ga, gb) < 1e-10) return p;
    const double det = haa * hbb - hab * hab;
    if (!(det > 0.0)) break;
    double da = (hbb * ga - hab * gb) / det;
    double db = (haa * gb - hab * ga) / det;
    double step = 1.0;
    bool improved = false;
    for (int h = 0; h < 60; ++h) {
      const Params trial{p.a + step * da, p.b + step * db};
      if (trial.a > 0.0 && std::isfinite(trial.b)) {
        const double value = loglik(trial);
        if (value >= current) {
          p = trial;
          current = value;
          improved = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!improved || p.a > model.bounds().upper) break;
  }
  throw Error(ErrorCode::NoInteriorMaximum, "two-parameter likelihood has no interior maximum");
}

}  // namespace detail

inline Params mle(const WorkingModel& model, const TrialHistory& history) {
  if (!history.heterogeneous())
    throw Error(ErrorCode::NoInteriorMaximum,
                "likelihood has no interior maximum: at least one toxic and one non-toxic outcome are required");
  history.validate(model.dose_count());
  if (!model.one_parameter()) return detail::mle_logistic(model, history);
  return Params{mle(model, tally_toxicity(history, model.dose_count())), 0.0};
}

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
  double variance = 0.0;  // v(a_hat)
};

/// Interval for psi(next_dose, a_hat) from the variance estimate built on
/// the non-toxic records. For psi = alpha^a this is
/// v^{-1} = sum_{y=0} psi (log alpha)^2 / (1 - psi)^2.
inline ConfidenceInterval confidence_interval(const WorkingModel& model, const TrialHistory& history, double a_hat,
                                              DoseIndex next_dose, double level) {
  detail::require_one_parameter(model);
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidConfig, "confidence level must lie in (0,1)");
  const DoseTally tally = tally_toxicity(history, model.dose_count());
  if (!(tally.total() - tally.total_events() > 0.0))
    throw Error(ErrorCode::InvalidHistory, "confidence interval needs at least one non-toxic record");
  const double info = observed_information(model, tally, a_hat, true);
  if (!(info > 0.0) || !std::isfinite(info))
    throw Error(ErrorCode::InvalidHistory, "variance estimate is not positive");
  const double variance = 1.0 / info;
  const double z = boost::math::quantile(boost::math::normal(), 0.5 + 0.5 * level);
  const double half = z * std::sqrt(variance);

  auto at = [&](double a) {
    if (!model.admissible(Params{a, 0.0})) return 1.0;  // psi -> 1 as a -> 0+
    return model.psi(next_dose, a);
  };
  // psi decreases in a, so the upper parameter gives the lower bound.
  return ConfidenceInterval{at(a_hat + half), at(a_hat - half), variance};
}

}  // namespace crm
