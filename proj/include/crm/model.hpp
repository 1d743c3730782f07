#pragma once

// Working dose-toxicity models over a fixed, ordered dose grid.
//
// Dose indices are zero-based throughout the library (0 .. k-1). Wire formats
// (JSON, CLI) use one-based dose levels and convert at the boundary.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crm/error.hpp"

namespace crm {

using DoseIndex = std::size_t;

/// Ordered dose labels plus the working-model constants alpha_1 < ... < alpha_k.
class Skeleton {
 public:
  Skeleton() = default;

  explicit Skeleton(std::vector<double> alpha, std::vector<std::string> labels = {})
      : alpha_(std::move(alpha)), labels_(std::move(labels)) {
    if (labels_.empty()) {
      for (std::size_t i = 0; i < alpha_.size(); ++i) labels_.push_back("d" + std::to_string(i + 1));
    }
    validate();
    for (double a : alpha_) log_alpha_.push_back(std::log(a));
  }

  std::size_t size() const noexcept { return alpha_.size(); }
  double alpha(DoseIndex i) const { return alpha_.at(i); }
  double log_alpha(DoseIndex i) const { return log_alpha_.at(i); }
  const std::vector<double>& alphas() const noexcept { return alpha_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  friend bool operator==(const Skeleton&, const Skeleton&) = default;

 private:
  void validate() const {
    if (alpha_.size() < 2) throw Error(ErrorCode::InvalidSkeleton, "skeleton needs at least two doses");
    if (labels_.size() != alpha_.size())
      throw Error(ErrorCode::InvalidSkeleton, "dose labels and skeleton values differ in length");
    for (std::size_t i = 0; i < alpha_.size(); ++i) {
      const double a = alpha_[i];
      if (!(a > 0.0 && a < 1.0))
        throw Error(ErrorCode::InvalidSkeleton, "skeleton value at dose " + std::to_string(i + 1) + " is outside (0,1)");
      if (i > 0 && !(a > alpha_[i - 1]))
        throw Error(ErrorCode::InvalidSkeleton, "skeleton is not strictly increasing at dose " + std::to_string(i + 1));
    }
  }

  std::vector<double> alpha_;
  std::vector<double> log_alpha_;
  std::vector<std::string> labels_;
};

enum class ModelKind {
  PowerExp,     // psi = alpha^{exp(a)}, a real
  PowerDirect,  // psi = alpha^{a}, a > 0
  Logistic2p,   // psi = logistic(a * alpha + b), a >= 0
};

inline const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::PowerExp: return "power-exp";
    case ModelKind::PowerDirect: return "power-direct";
    case ModelKind::Logistic2p: return "logistic-2p";
  }
  return "unknown";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "power-exp") return ModelKind::PowerExp;
  if (s == "power-direct") return ModelKind::PowerDirect;
  if (s == "logistic-2p") return ModelKind::Logistic2p;
  throw Error(ErrorCode::InvalidConfig, "unknown model kind '" + s + "'");
}

struct Params {
  double a = 0.0;
  double b = 0.0;  // intercept, logistic-2p only
};

/// Closed interval [lower, upper] for the slope parameter a.
struct Bounds {
  double lower = 0.0;
  double upper = 0.0;

  bool contains(double a) const noexcept { return a >= lower && a <= upper; }
  friend bool operator==(const Bounds&, const Bounds&) = default;
};

inline Bounds default_bounds(ModelKind kind) {
  switch (kind) {
    case ModelKind::PowerExp: return {-10.0, 10.0};
    case ModelKind::PowerDirect: return {1e-4, 1e4};
    case ModelKind::Logistic2p: return {1e-8, 1e4};
  }
  return {};
}

/// Per-dose quantities for the one-parameter kinds, written through
/// g(a) = log psi(d_i, a) = s(a) * log(alpha_i).
struct DoseTerms {
  double psi = 0.0;
  double log_psi = 0.0;
  double log1m_psi = 0.0;  // log(1 - psi)
  double dlog = 0.0;       // g'(a)
  double d2log = 0.0;      // g''(a)

  /// psi / (1 - psi), evaluated without cancellation.
  double odds() const noexcept { return std::exp(log_psi - log1m_psi); }
};

class WorkingModel {
 public:
  WorkingModel() = default;
  WorkingModel(ModelKind kind, Skeleton skeleton)
      : WorkingModel(kind, std::move(skeleton), default_bounds(kind)) {}
  WorkingModel(ModelKind kind, Skeleton skeleton, Bounds bounds)
      : kind_(kind), skeleton_(std::move(skeleton)), bounds_(bounds) {
    if (!(bounds_.lower < bounds_.upper))
      throw Error(ErrorCode::InvalidConfig, "model bounds must satisfy lower < upper");
    if (kind_ != ModelKind::PowerExp && bounds_.lower <= 0.0)
      throw Error(ErrorCode::InvalidConfig, std::string(to_string(kind_)) + " requires a positive lower bound");
  }

  ModelKind kind() const noexcept { return kind_; }
  const Skeleton& skeleton() const noexcept { return skeleton_; }
  const Bounds& bounds() const noexcept { return bounds_; }
  std::size_t dose_count() const noexcept { return skeleton_.size(); }
  bool one_parameter() const noexcept { return kind_ != ModelKind::Logistic2p; }

  /// Whether a lies in the kind's natural domain (not the search bounds).
  bool admissible(const Params& p) const noexcept {
    if (!std::isfinite(p.a) || !std::isfinite(p.b)) return false;
    switch (kind_) {
      case ModelKind::PowerExp: return true;
      case ModelKind::PowerDirect: return p.a > 0.0;
      case ModelKind::Logistic2p: return p.a >= 0.0;  // a = 0 is the flat boundary curve
    }
    return false;
  }

  double psi(DoseIndex i, const Params& p) const {
    check(i, p);
    if (kind_ == ModelKind::Logistic2p) {
      const double eta = p.a * skeleton_.alpha(i) + p.b;
      return 1.0 / (1.0 + std::exp(-eta));
    }
    return std::exp(scale(p.a) * skeleton_.log_alpha(i));
  }

  double psi(DoseIndex i, double a) const { return psi(i, Params{a, 0.0}); }

  /// d psi / d a in closed form.
  double psi_derivative(DoseIndex i, const Params& p) const {
    check(i, p);
    if (kind_ == ModelKind::Logistic2p) {
      const double v = psi(i, p);
      return skeleton_.alpha(i) * v * (1.0 - v);
    }
    const DoseTerms t = terms(i, p.a);
    return t.psi * t.dlog;
  }

  double psi_derivative(DoseIndex i, double a) const { return psi_derivative(i, Params{a, 0.0}); }

  /// d psi / d b, logistic-2p only.
  double psi_derivative_b(DoseIndex i, const Params& p) const {
    if (kind_ != ModelKind::Logistic2p) return 0.0;
    const double v = psi(i, p);
    return v * (1.0 - v);
  }

  /// One-parameter kinds only.
  DoseTerms terms(DoseIndex i, double a) const {
    check(i, Params{a, 0.0});
    if (kind_ == ModelKind::Logistic2p)
      throw Error(ErrorCode::InvalidConfig, "logistic-2p has no one-parameter terms");
    const double la = skeleton_.log_alpha(i);
    DoseTerms t;
    t.log_psi = scale(a) * la;
    t.psi = std::exp(t.log_psi);
    t.log1m_psi = std::log(-std::expm1(t.log_psi));
    if (kind_ == ModelKind::PowerDirect) {
      t.dlog = la;
      t.d2log = 0.0;
    } else {
      t.dlog = std::exp(a) * la;
      t.d2log = t.dlog;
    }
    return t;
  }

  std::vector<double> curve(const Params& p) const {
    std::vector<double> out(dose_count());
    for (DoseIndex i = 0; i < out.size(); ++i) out[i] = psi(i, p);
    return out;
  }

  std::vector<double> curve(double a) const { return curve(Params{a, 0.0}); }

  /// psi(d_i, a) for every dose into out, one-parameter kinds only.
  void curve_into(double a, std::span<double> out) const {
    check(0, Params{a, 0.0});
    if (kind_ == ModelKind::Logistic2p) throw Error(ErrorCode::InvalidConfig, "curve_into needs a one-parameter model");
    const double s = scale(a);
    for (DoseIndex i = 0; i < out.size() && i < dose_count(); ++i) out[i] = std::exp(s * skeleton_.log_alpha(i));
  }

  friend bool operator==(const WorkingModel&, const WorkingModel&) = default;

 private:
  double scale(double a) const noexcept { return kind_ == ModelKind::PowerExp ? std::exp(a) : a; }

  void check(DoseIndex i, const Params& p) const {
    if (i >= dose_count())
      throw Error(ErrorCode::DoseOutOfRange, "dose index " + std::to_string(i + 1) + " outside 1.." + std::to_string(dose_count()));
    if (!admissible(p))
      throw Error(ErrorCode::ParameterOutOfDomain, std::string("parameter outside the admissible domain of ") + to_string(kind_));
  }

  ModelKind kind_ = ModelKind::PowerExp;
  Skeleton skeleton_;
  Bounds bounds_ = default_bounds(ModelKind::PowerExp);
};

/// One member of a model class. A nonzero group_shift makes group z=1
/// patients at dose i behave like group 0 patients at min(i + shift, k-1).
struct ClassMember {
  WorkingModel model;
  std::size_t group_shift = 0;

  DoseIndex effective_dose(DoseIndex dose, int group) const {
    if (group != 1 || group_shift == 0) return dose;
    return std::min(dose + group_shift, model.dose_count() - 1);
  }
};

class ModelClass {
 public:
  ModelClass() = default;
  ModelClass(std::vector<ClassMember> members, std::vector<double> prior_weights)
      : members_(std::move(members)), weights_(std::move(prior_weights)) {
    if (members_.empty()) throw Error(ErrorCode::InvalidConfig, "model class is empty");
    if (weights_.empty()) weights_.assign(members_.size(), 1.0 / static_cast<double>(members_.size()));
    if (weights_.size() != members_.size())
      throw Error(ErrorCode::InvalidConfig, "model class weights and members differ in length");
    double total = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0)) throw Error(ErrorCode::InvalidConfig, "model class weights must be non-negative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidConfig, "model class weights must sum to 1");
    for (const auto& m : members_) {
      if (!m.model.one_parameter())
        throw Error(ErrorCode::InvalidConfig, "model class members must be one-parameter models");
      if (m.model.kind() != members_.front().model.kind() ||
          m.model.dose_count() != members_.front().model.dose_count())
        throw Error(ErrorCode::InvalidConfig, "model class members must share kind and dose count");
    }
  }

  /// Model 1 (no group difference) and Model 2 (group 1 shifted one level up).
  static ModelClass two_group(const WorkingModel& model, std::vector<double> prior_weights = {0.5, 0.5}) {
    return ModelClass({{model, 0}, {model, 1}}, std::move(prior_weights));
  }

  std::size_t size() const noexcept { return members_.size(); }
  const ClassMember& member(std::size_t m) const { return members_.at(m); }
  const std::vector<ClassMember>& members() const noexcept { return members_; }
  const std::vector<double>& prior_weights() const noexcept { return weights_; }

 private:
  std::vector<ClassMember> members_;
  std::vector<double> weights_;
};

}  // namespace crm
