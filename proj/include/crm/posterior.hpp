#pragma once

// Posterior summaries for the one-parameter working models: the posterior
// mean of a, its mode, the normalising constant, and the per-dose toxicity
// estimates both as posterior means of psi and as the plug-in psi(d, mu).

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "crm/error.hpp"
#include "crm/history.hpp"
#include "crm/likelihood.hpp"
#include "crm/model.hpp"
#include "crm/numerics.hpp"
#include "crm/partition.hpp"
#include "crm/prior.hpp"

namespace crm {

struct PosteriorSummary {
  double mean = 0.0;             // mu
  double mode = 0.0;
  std::vector<double> tox_mean;  // integral of psi(d_i, a) f(a) da
  std::vector<double> tox_plugin;  // psi(d_i, mu)
  double log_normalizer = 0.0;   // log A_j; NaN when likelihood-only
  std::vector<double> interval_mass;  // posterior mass per partition interval (partition prior only)
  bool likelihood_only = false;
};

namespace detail {

/// Integration domain for a model: power-direct works on u = log a.
struct Domain {
  double lo = 0.0;
  double hi = 0.0;
  bool log_axis = false;

  double to_param(double x) const { return log_axis ? std::exp(x) : x; }
  double to_axis(double a) const { return log_axis ? std::log(a) : a; }
  double jacobian(double x) const { return log_axis ? std::exp(x) : 1.0; }
};

inline constexpr double kLogAxisLo = -46.0;  // a ~ 1e-20
inline constexpr double kLogAxisHi = 23.0;   // a ~ 1e10

inline Domain domain_for(const WorkingModel& model, const std::optional<Bounds>& compact) {
  if (model.kind() == ModelKind::PowerDirect) {
    if (compact) return {std::log(compact->lower), std::log(compact->upper), true};
    return {kLogAxisLo, kLogAxisHi, true};
  }
  const Bounds b = compact.value_or(model.bounds());
  return {b.lower, b.upper, false};
}

template <class LogDensity>
PosteriorSummary integrate_posterior(const WorkingModel& model, LogDensity&& h, const Domain& dom,
                                     const Partition* partition) {
  const std::size_t k = model.dose_count();
  auto h_axis = [&](double x) { return h(dom.to_param(x)); };
  const auto [x_mode, h_max] = numerics::maximize(h_axis, dom.lo, dom.hi, 241);
  if (!std::isfinite(h_max)) throw Error(ErrorCode::Quadrature, "posterior density is not finite at its maximum");

  // the integrand on the axis carries the Jacobian, so its peak can differ from the mode in a
  auto l_axis = [&](double x) {
    const double hv = h_axis(x);
    return std::isfinite(hv) ? hv + std::log(dom.jacobian(x)) : hv;
  };
  const auto [x_peak, l_max] =
      dom.log_axis ? numerics::maximize(l_axis, dom.lo, dom.hi, 241) : std::pair<double, double>{x_mode, h_max};
  if (!std::isfinite(l_max)) throw Error(ErrorCode::Quadrature, "posterior density is not finite at its maximum");

  auto scale_at = [&](double x0, double f0) {
    const double dx = 1e-4 * std::max(1.0, std::abs(x0));
    double curvature = 0.0;
    if (x0 - dx > dom.lo && x0 + dx < dom.hi) curvature = -(l_axis(x0 + dx) - 2.0 * f0 + l_axis(x0 - dx)) / (dx * dx);
    const double sd = (curvature > 0.0 && std::isfinite(curvature)) ? 1.0 / std::sqrt(curvature) : (dom.hi - dom.lo) / 50.0;
    return std::min(sd, (dom.hi - dom.lo) / 4.0);
  };

  std::vector<double> breaks{dom.lo, dom.hi};
  for (double centre : {x_peak, x_mode}) {
    const double sd = scale_at(centre, l_axis(centre));
    breaks.push_back(centre);
    for (double m : {1.0, 3.0, 8.0, 20.0}) {
      breaks.push_back(std::clamp(centre - m * sd, dom.lo, dom.hi));
      breaks.push_back(std::clamp(centre + m * sd, dom.lo, dom.hi));
    }
  }
  if (partition) {
    for (double kappa : partition->kappas) breaks.push_back(std::clamp(dom.to_axis(kappa), dom.lo, dom.hi));
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  // rough mass of exp(l - l_max) so the tolerance is relative
  double mass_scale = 0.0;
  {
    constexpr int n = 241;
    const double step = (dom.hi - dom.lo) / n;
    for (int j = 0; j < n; ++j) {
      const double lv = l_axis(dom.lo + (j + 0.5) * step);
      if (std::isfinite(lv)) mass_scale += std::exp(lv - l_max) * step;
    }
    mass_scale = std::clamp(mass_scale, 1e-6 * scale_at(x_peak, l_max), dom.hi - dom.lo);
  }
  numerics::AdaptiveGaussLegendre::Options opts;
  opts.abs_tol = 1e-10 * mass_scale;
  opts.initial_panels = 8;
  const numerics::AdaptiveGaussLegendre quad(opts);

  const std::size_t width = 2 + k + (partition ? k : 0);
  auto integrand = [&](double x, std::vector<double>& out) {
    const double a = dom.to_param(x);
    const double lv = l_axis(x);
    const double w = std::isfinite(lv) ? std::exp(lv - l_max) : 0.0;
    out[0] = w;
    out[1] = w * a;
    if (w == 0.0) {
      std::fill(out.begin() + 2, out.begin() + 2 + static_cast<std::ptrdiff_t>(k), 0.0);
    } else {
      model.curve_into(a, std::span<double>(out.data() + 2, k));
      for (DoseIndex i = 0; i < k; ++i) out[2 + i] *= w;
    }
    if (partition) {
      for (DoseIndex i = 0; i < k; ++i) out[2 + k + i] = 0.0;
      const double clamped = std::clamp(a, partition->bounds.lower, partition->bounds.upper);
      out[2 + k + partition->interval_of(clamped)] = w;
    }
  };
  const std::vector<double> raw = quad.integrate(integrand, width, breaks);
  if (!(raw[0] > 0.0) || !std::isfinite(raw[0])) throw Error(ErrorCode::Quadrature, "posterior normaliser is not positive");

  PosteriorSummary s;
  s.mode = dom.to_param(x_mode);
  s.mean = raw[1] / raw[0];
  s.log_normalizer = l_max + std::log(raw[0]);
  s.tox_mean.resize(k);
  for (DoseIndex i = 0; i < k; ++i) s.tox_mean[i] = raw[2 + i] / raw[0];
  s.tox_plugin = model.curve(s.mean);
  if (partition) {
    s.interval_mass.resize(k);
    for (DoseIndex i = 0; i < k; ++i) s.interval_mass[i] = raw[2 + k + i] / raw[0];
  }
  return s;
}

}  // namespace detail

/// Posterior summary given tallied data. With NoPrior this is the MLE
/// plug-in summary and requires heterogeneous data.
inline PosteriorSummary posterior(const WorkingModel& model, const DoseTally& tally, const PriorSpec& prior) {
  detail::require_one_parameter(model);
  validate_prior(prior, model);
  const std::size_t k = model.dose_count();

  if (std::holds_alternative<NoPrior>(prior)) {
    const double a_hat = mle(model, tally);
    PosteriorSummary s;
    s.mean = s.mode = a_hat;
    s.tox_mean = s.tox_plugin = model.curve(a_hat);
    s.log_normalizer = std::numeric_limits<double>::quiet_NaN();
    s.likelihood_only = true;
    return s;
  }

  auto loglik = [&](double a) { return log_likelihood(model, tally, a); };

  if (const auto* g = std::get_if<GammaPrior>(&prior)) {
    return detail::integrate_posterior(model, [&](double a) { return g->log_density(a) + loglik(a); },
                                       detail::domain_for(model, std::nullopt), nullptr);
  }
  if (const auto* n = std::get_if<NormalPrior>(&prior)) {
    return detail::integrate_posterior(model, [&](double a) { return n->log_density(a) + loglik(a); },
                                       detail::domain_for(model, std::nullopt), nullptr);
  }
  if (const auto* p = std::get_if<PseudoDataPrior>(&prior)) {
    const DoseTally pseudo = tally_toxicity(p->records, k);
    const double w = p->weight;
    return detail::integrate_posterior(
        model,
        [&](double a) {
          const double prior_part = w * log_likelihood(model, pseudo, a);
          return w < 1.0 ? prior_part + (1.0 - w) * loglik(a) : prior_part;
        },
        detail::domain_for(model, std::nullopt), nullptr);
  }
  const auto& q = std::get<PartitionPrior>(prior);
  const Partition part = compute_partition(model, q.theta, q.bounds);
  std::vector<double> log_height(k);
  for (DoseIndex i = 0; i < k; ++i)
    log_height[i] = q.mass[i] > 0.0 ? std::log(q.mass[i] / part.width(i)) : -std::numeric_limits<double>::infinity();
  auto h = [&](double a) {
    if (a < part.bounds.lower || a > part.bounds.upper) return -std::numeric_limits<double>::infinity();
    const double lh = log_height[part.interval_of(a)];
    return std::isfinite(lh) ? lh + loglik(a) : lh;
  };
  return detail::integrate_posterior(model, h, detail::domain_for(model, part.bounds), &part);
}

inline PosteriorSummary posterior(const WorkingModel& model, const TrialHistory& history, const PriorSpec& prior) {
  history.validate(model.dose_count());
  return posterior(model, tally_toxicity(history, model.dose_count()), prior);
}

struct ModelClassPosterior {
  std::vector<double> weights;         // pi(m | data)
  std::vector<double> log_marginals;   // log of integral exp(L_m) g
  std::vector<PosteriorSummary> members;
};

/// Posterior model weights over a model class sharing one proper prior g.
/// Computed in log space with a max shift, so the result is invariant to a
/// common shift of the log marginals.
inline ModelClassPosterior model_class_posterior(const ModelClass& cls, const TrialHistory& history,
                                                 const PriorSpec& prior) {
  if (std::holds_alternative<NoPrior>(prior) || std::holds_alternative<PseudoDataPrior>(prior))
    throw Error(ErrorCode::InvalidPrior, "model class weights need a proper prior density (gamma, normal or partition)");
  ModelClassPosterior out;
  for (const auto& member : cls.members()) {
    const DoseTally tally = tally_toxicity(history, member.model.dose_count(), member.group_shift);
    out.members.push_back(posterior(member.model, tally, prior));
    out.log_marginals.push_back(out.members.back().log_normalizer);
  }
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < cls.size(); ++m)
    if (cls.prior_weights()[m] > 0.0) shift = std::max(shift, out.log_marginals[m]);
  double total = 0.0;
  out.weights.resize(cls.size());
  for (std::size_t m = 0; m < cls.size(); ++m) {
    const double pw = cls.prior_weights()[m];
    out.weights[m] = pw > 0.0 ? pw * std::exp(out.log_marginals[m] - shift) : 0.0;
    total += out.weights[m];
  }
  for (double& w : out.weights) w /= total;
  return out;
}

}  // namespace crm
