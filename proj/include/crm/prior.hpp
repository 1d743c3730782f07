#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "crm/error.hpp"
#include "crm/history.hpp"
#include "crm/model.hpp"

namespace crm {

/// Likelihood only; the posterior summary is the MLE plug-in.
struct NoPrior {
  friend bool operator==(const NoPrior&, const NoPrior&) = default;
};

/// g(a) = lambda^c a^{c-1} exp(-lambda a) / Gamma(c) on a > 0.
struct GammaPrior {
  double lambda = 1.0;
  double shape = 1.0;

  double log_density(double a) const {
    if (!(a > 0.0)) return -INFINITY;
    return shape * std::log(lambda) + (shape - 1.0) * std::log(a) - lambda * a - std::lgamma(shape);
  }
  friend bool operator==(const GammaPrior&, const GammaPrior&) = default;
};

struct NormalPrior {
  double mean = 0.0;
  double variance = 1.0;

  double log_density(double a) const {
    const double z = a - mean;
    return -0.5 * z * z / variance - 0.5 * std::log(2.0 * M_PI * variance);
  }
  friend bool operator==(const NormalPrior&, const NormalPrior&) = default;
};

/// Weighted fictional observations: the log posterior is
/// w * L_pseudo(a) + (1 - w) * L(a).
struct PseudoDataPrior {
  TrialHistory records;
  double weight = 0.5;
  friend bool operator==(const PseudoDataPrior&, const PseudoDataPrior&) = default;
};

/// Piecewise-uniform prior putting mass[i] on the parameter region where
/// dose i is closest to theta.
struct PartitionPrior {
  std::vector<double> mass;
  double theta = 0.0;
  std::optional<Bounds> bounds;  // defaults to the model's bounds

  static PartitionPrior uniform(std::size_t k, double theta) {
    return {std::vector<double>(k, 1.0 / static_cast<double>(k)), theta, std::nullopt};
  }
  friend bool operator==(const PartitionPrior&, const PartitionPrior&) = default;
};

using PriorSpec = std::variant<NoPrior, GammaPrior, NormalPrior, PseudoDataPrior, PartitionPrior>;

inline std::string prior_kind(const PriorSpec& prior) {
  struct Visitor {
    std::string operator()(const NoPrior&) const { return "none"; }
    std::string operator()(const GammaPrior&) const { return "gamma"; }
    std::string operator()(const NormalPrior&) const { return "normal"; }
    std::string operator()(const PseudoDataPrior&) const { return "pseudo-data"; }
    std::string operator()(const PartitionPrior&) const { return "partition"; }
  };
  return std::visit(Visitor{}, prior);
}

inline void validate_prior(const PriorSpec& prior, const WorkingModel& model) {
  if (std::holds_alternative<NoPrior>(prior)) return;
  if (!model.one_parameter()) throw Error(ErrorCode::InvalidPrior, "priors are supported for one-parameter models only");
  if (const auto* g = std::get_if<GammaPrior>(&prior)) {
    if (!(g->lambda > 0.0 && g->shape > 0.0)) throw Error(ErrorCode::InvalidPrior, "gamma prior needs lambda > 0 and c > 0");
    if (model.kind() != ModelKind::PowerDirect)
      throw Error(ErrorCode::InvalidPrior, "gamma prior lives on a > 0 and needs the power-direct model");
  } else if (const auto* n = std::get_if<NormalPrior>(&prior)) {
    if (!(n->variance > 0.0) || !std::isfinite(n->mean)) throw Error(ErrorCode::InvalidPrior, "normal prior needs variance > 0");
    if (model.kind() != ModelKind::PowerExp)
      throw Error(ErrorCode::InvalidPrior, "normal prior lives on the real line and needs the power-exp model");
  } else if (const auto* p = std::get_if<PseudoDataPrior>(&prior)) {
    if (!(p->weight > 0.0 && p->weight <= 1.0)) throw Error(ErrorCode::InvalidPrior, "pseudo-data weight must lie in (0,1]");
    if (p->records.empty()) throw Error(ErrorCode::InvalidPrior, "pseudo-data prior has no records");
    p->records.validate(model.dose_count());
  } else if (const auto* q = std::get_if<PartitionPrior>(&prior)) {
    if (q->mass.size() != model.dose_count()) throw Error(ErrorCode::InvalidPrior, "partition prior needs one mass per dose");
    double total = 0.0;
    for (double m : q->mass) {
      if (!(m >= 0.0)) throw Error(ErrorCode::InvalidPrior, "partition prior masses must be non-negative");
      total += m;
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidPrior, "partition prior masses must sum to 1");
    if (!(q->theta > 0.0 && q->theta < 1.0)) throw Error(ErrorCode::InvalidPrior, "partition prior needs a target in (0,1)");
  }
}

}  // namespace crm
