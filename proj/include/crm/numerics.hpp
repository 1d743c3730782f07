#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/minima.hpp>

#include "crm/error.hpp"

namespace crm::numerics {

/// Bisection on a bracket where f changes sign. Returns the midpoint of the
/// final bracket once its width falls under xtol.
template <class F>
double bisect(F&& f, double lo, double hi, double xtol = 1e-12, int max_iter = 400) {
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0)) throw Error(ErrorCode::Infeasible, "bisection bracket does not change sign");
  for (int it = 0; it < max_iter && hi - lo > xtol; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Safeguarded Newton iteration on a sign-changing bracket. fdf returns
/// (f, f'); a Newton step that leaves the bracket or fails to halve it is
/// replaced by a bisection step.
template <class FdF>
double newton_bracketed(FdF&& fdf, double lo, double hi, double ftol, int max_iter = 200) {
  auto [flo, dlo] = fdf(lo);
  auto [fhi, dhi] = fdf(hi);
  (void)dlo;
  (void)dhi;
  if (!std::isfinite(flo) || !std::isfinite(fhi))
    throw Error(ErrorCode::NoInteriorMaximum, "non-finite score at the search bracket");
  if (std::abs(flo) <= ftol) return lo;
  if (std::abs(fhi) <= ftol) return hi;
  if ((flo > 0.0) == (fhi > 0.0)) throw Error(ErrorCode::NoInteriorMaximum, "score does not change sign on the search bracket");
  const bool rising = flo < 0.0;
  double x = 0.5 * (lo + hi);
  double previous_width = hi - lo;
  for (int it = 0; it < max_iter; ++it) {
    auto [fx, dfx] = fdf(x);
    if (std::abs(fx) <= ftol) return x;
    if ((fx < 0.0) == rising) lo = x; else hi = x;
    const double width = hi - lo;
    if (width <= std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x))) return x;
    double next = (dfx != 0.0 && std::isfinite(dfx)) ? x - fx / dfx : std::numeric_limits<double>::quiet_NaN();
    if (!(next > lo && next < hi) || width > 0.5 * previous_width) next = 0.5 * (lo + hi);
    previous_width = width;
    x = next;
  }
  return x;
}

/// Maximizes a unimodal-near-the-optimum function on [lo, hi]: coarse grid
/// scan followed by Brent refinement around the best grid point.
template <class F>
std::pair<double, double> maximize(F&& f, double lo, double hi, std::size_t grid = 2001) {
  double best_x = lo;
  double best_f = -std::numeric_limits<double>::infinity();
  const double step = (hi - lo) / static_cast<double>(grid - 1);
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < grid; ++i) {
    const double x = i + 1 == grid ? hi : lo + step * static_cast<double>(i);
    const double v = f(x);
    if (v > best_f) {
      best_f = v;
      best_x = x;
      best_i = i;
    }
  }
  const double a = best_i == 0 ? lo : lo + step * static_cast<double>(best_i - 1);
  const double b = best_i + 1 >= grid ? hi : lo + step * static_cast<double>(best_i + 1);
  auto neg = [&](double x) { return -f(x); };
  auto [x, fneg] = boost::math::tools::brent_find_minima(neg, a, b, 52);
  if (-fneg >= best_f) return {x, -fneg};
  return {best_x, best_f};
}

/// Composite adaptive Gauss-Legendre (64 nodes per panel) for a vector of
/// integrands evaluated together. Panels are bisected until the 64-node
/// estimate on a panel agrees with the sum over its two halves.
class AdaptiveGaussLegendre {
 public:
  using Rule = boost::math::quadrature::gauss<double, 64>;

  struct Options {
    double abs_tol = 1e-8;
    std::size_t initial_panels = 64;
    std::size_t max_panels = 1 << 15;
  };

  AdaptiveGaussLegendre() = default;
  explicit AdaptiveGaussLegendre(Options opts) : opts_(opts) {}

  /// Integrates f over the union of [breaks[i], breaks[i+1]]. f(x, out) writes
  /// `width` values into out. Returns the integrals.
  template <class F>
  std::vector<double> integrate(F&& f, std::size_t width, const std::vector<double>& breaks) const {
    std::vector<double> total(width, 0.0);
    if (breaks.size() < 2) return total;
    const double span = breaks.back() - breaks.front();
    struct Item {
      double lo, hi;
      std::vector<double> whole;  // empty until known
    };
    std::vector<Item> work;
    for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
      const double lo = breaks[s];
      const double hi = breaks[s + 1];
      if (!(hi > lo)) continue;
      const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(
          std::ceil(static_cast<double>(opts_.initial_panels) * (hi - lo) / span)));
      for (std::size_t p = 0; p < n; ++p)
        work.push_back({lo + (hi - lo) * static_cast<double>(p) / static_cast<double>(n),
                        p + 1 == n ? hi : lo + (hi - lo) * static_cast<double>(p + 1) / static_cast<double>(n),
                        {}});
    }

    std::vector<double> left(width), right(width), buf(width);
    std::size_t panels = work.size();
    while (!work.empty()) {
      Item item = std::move(work.back());
      work.pop_back();
      const double lo = item.lo, hi = item.hi;
      const double mid = 0.5 * (lo + hi);
      if (item.whole.empty()) {
        item.whole.resize(width);
        panel(f, lo, hi, item.whole, buf);
      }
      panel(f, lo, mid, left, buf);
      panel(f, mid, hi, right, buf);
      double err = 0.0;
      for (std::size_t c = 0; c < width; ++c) {
        const double refined = left[c] + right[c];
        if (!std::isfinite(refined)) throw Error(ErrorCode::Quadrature, "non-finite integrand");
        err = std::max(err, std::abs(refined - item.whole[c]));
      }
      const double allowed = opts_.abs_tol * (hi - lo) / span;
      if (err <= allowed || hi - lo <= 1e-12 * std::max(1.0, std::abs(mid))) {
        for (std::size_t c = 0; c < width; ++c) total[c] += left[c] + right[c];
        continue;
      }
      if (++panels > opts_.max_panels) throw Error(ErrorCode::Quadrature, "quadrature did not converge within the panel budget");
      work.push_back({lo, mid, left});
      work.push_back({mid, hi, right});
    }
    return total;
  }

 private:
  template <class F>
  static void panel(F& f, double lo, double hi, std::vector<double>& out, std::vector<double>& buf) {
    std::fill(out.begin(), out.end(), 0.0);
    const double half = 0.5 * (hi - lo);
    const double centre = 0.5 * (hi + lo);
    const auto& x = Rule::abscissa();
    const auto& w = Rule::weights();
    for (std::size_t n = 0; n < x.size(); ++n) {
      for (int sign : {-1, 1}) {
        if (x[n] == 0.0 && sign > 0) continue;
        f(centre + sign * half * x[n], buf);
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += w[n] * buf[c];
      }
    }
    for (double& v : out) v *= half;
  }

  Options opts_;
};

}  // namespace crm::numerics
