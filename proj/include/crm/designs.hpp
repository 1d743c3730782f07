#pragma once

// Allocation policies: the two-stage likelihood design with grade-gated
// escalation, Bayesian allocation under any prior, asymmetric distances,
// randomized allocation, model classes including the two-group shift, and
// the most-successful-dose design.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "crm/error.hpp"
#include "crm/history.hpp"
#include "crm/likelihood.hpp"
#include "crm/model.hpp"
#include "crm/posterior.hpp"
#include "crm/prior.hpp"
#include "crm/random.hpp"
#include "crm/target.hpp"

namespace crm {

/// Table 1 severities: 0 none, 1 mild, 2 non-mild, 3 severe, 4 dose-limiting.
struct EscalationRule {
  std::size_t cohort_size = 1;
  double severity_threshold = 2.0;
  std::array<double, 5> severity{0.0, 1.0, 2.0, 3.0, 4.0};  // grade -> S contribution

  friend bool operator==(const EscalationRule&, const EscalationRule&) = default;
};

enum class EstimateKind { PosteriorMean, PlugIn };

inline const char* to_string(EstimateKind e) { return e == EstimateKind::PosteriorMean ? "posterior-mean" : "plug-in"; }

struct BayesInference {
  PriorSpec prior = NoPrior{};
  EstimateKind estimate = EstimateKind::PosteriorMean;
};

struct LikelihoodTwoStage {
  EscalationRule rule;
};

struct RandomizeSpec {
  double delta_prob = 0.5;
};

/// Two members: no group difference, and group z=1 one level more toxic.
struct GroupingSpec {
  std::vector<double> prior_weights{0.5, 0.5};
};

/// Alternative skeletons sharing the design's model kind and prior.
struct ModelClassSpec {
  std::vector<std::vector<double>> skeletons;
  std::vector<double> prior_weights;
};

/// Efficacy model phi(d_i, b) = beta_i^{exp(b)} among non-toxic patients.
struct MsdSpec {
  std::vector<double> beta;
};

struct DesignPolicy {
  double target = 0.2;
  std::variant<BayesInference, LikelihoodTwoStage> inference = LikelihoodTwoStage{};
  Distance distance;
  std::optional<RandomizeSpec> randomize;
  std::optional<ModelClassSpec> model_class;
  std::optional<GroupingSpec> grouping;
  std::optional<MsdSpec> msd;
  bool no_skip = true;
  TieBreak tie = TieBreak::Lower;
  double confidence_level = 0.9;

  bool bayes() const noexcept { return std::holds_alternative<BayesInference>(inference); }
  const EscalationRule* escalation() const noexcept {
    const auto* l = std::get_if<LikelihoodTwoStage>(&inference);
    return l ? &l->rule : nullptr;
  }
  const BayesInference* bayes_inference() const noexcept { return std::get_if<BayesInference>(&inference); }
};

/// The prior actually used: a partition prior takes the design target.
inline PriorSpec effective_prior(const DesignPolicy& policy) {
  const auto* b = policy.bayes_inference();
  if (!b) return NoPrior{};
  PriorSpec prior = b->prior;
  if (auto* q = std::get_if<PartitionPrior>(&prior)) q->theta = policy.target;
  return prior;
}

inline void validate_policy(const DesignPolicy& policy, const WorkingModel& model) {
  const std::size_t k = model.dose_count();
  if (!(policy.target > 0.0 && policy.target < 1.0)) throw Error(ErrorCode::InvalidPolicy, "target must lie in (0,1)");
  if (!(policy.distance.over_weight >= 1.0)) throw Error(ErrorCode::InvalidPolicy, "over_weight must be at least 1");
  if (policy.randomize && !(policy.randomize->delta_prob > 0.0 && policy.randomize->delta_prob < 1.0))
    throw Error(ErrorCode::InvalidPolicy, "delta_prob must lie in (0,1)");
  if (!(policy.confidence_level > 0.0 && policy.confidence_level < 1.0))
    throw Error(ErrorCode::InvalidPolicy, "confidence_level must lie in (0,1)");
  if (const auto* r = policy.escalation()) {
    if (r->cohort_size < 1) throw Error(ErrorCode::InvalidPolicy, "cohort_size must be at least 1");
    if (!model.one_parameter()) throw Error(ErrorCode::InvalidPolicy, "the two-stage design needs a one-parameter model");
  }
  if (policy.bayes()) {
    if (!model.one_parameter()) throw Error(ErrorCode::InvalidPolicy, "Bayesian allocation needs a one-parameter model");
    validate_prior(effective_prior(policy), model);
  }
  if (policy.grouping && policy.model_class)
    throw Error(ErrorCode::InvalidPolicy, "grouping and model_class cannot both be set");
  if (policy.grouping || policy.model_class) {
    const PriorSpec prior = effective_prior(policy);
    if (std::holds_alternative<NoPrior>(prior) || std::holds_alternative<PseudoDataPrior>(prior))
      throw Error(ErrorCode::InvalidPolicy, "model class designs need a Bayesian design with a proper prior");
  }
  if (policy.grouping && policy.grouping->prior_weights.size() != 2)
    throw Error(ErrorCode::InvalidPolicy, "grouping needs two prior weights");
  if (policy.model_class) {
    for (const auto& s : policy.model_class->skeletons)
      if (s.size() != k) throw Error(ErrorCode::InvalidPolicy, "model class skeletons must have one value per dose");
  }
  if (policy.msd) {
    if (policy.msd->beta.size() != k) throw Error(ErrorCode::InvalidPolicy, "msd beta needs one value per dose");
    Skeleton(policy.msd->beta);
  }
}

/// The model class a design allocates under, if any.
inline std::optional<ModelClass> design_class(const DesignPolicy& policy, const WorkingModel& model) {
  if (policy.grouping) return ModelClass::two_group(model, policy.grouping->prior_weights);
  if (policy.model_class) {
    std::vector<ClassMember> members;
    for (const auto& s : policy.model_class->skeletons)
      members.push_back({WorkingModel(model.kind(), Skeleton(s), model.bounds()), 0});
    return ModelClass(std::move(members), policy.model_class->prior_weights);
  }
  return std::nullopt;
}

enum class Stage { StageOne, ModelBased, Closed };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::StageOne: return "stage_one";
    case Stage::ModelBased: return "model_based";
    case Stage::Closed: return "closed";
  }
  return "unknown";
}

enum class StageDecision { Escalate, Stay, HandOff };

inline const char* to_string(StageDecision d) {
  switch (d) {
    case StageDecision::Escalate: return "escalate";
    case StageDecision::Stay: return "stay";
    case StageDecision::HandOff: return "hand_off";
  }
  return "unknown";
}

namespace detail {

inline int grade_of(const PatientRecord& r) {
  if (r.grade) return *r.grade;
  throw Error(ErrorCode::MissingData, "stage-one escalation needs a toxicity grade for every patient");
}

inline std::string level(DoseIndex i) { return std::to_string(i + 1); }

inline std::string fixed(double x, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

}  // namespace detail

struct StageStep {
  StageDecision decision = StageDecision::Stay;
  DoseIndex level = 0;
  double mean_severity = 0.0;
  std::size_t at_level = 0;
};

/// One decision of the initial escalation stage at the level of the most
/// recent patient. Decisions are taken at cohort completion: a dose-limiting
/// toxicity hands off, otherwise the level is left when S(i) < threshold.
inline StageStep two_stage_step(const EscalationRule& rule, const TrialHistory& history) {
  if (history.empty()) throw Error(ErrorCode::InvalidHistory, "stage-one step needs at least one patient");
  StageStep step;
  step.level = history.back().dose;
  double severity = 0.0;
  bool dlt = false;
  for (const auto& r : history.records()) {
    const int g = detail::grade_of(r);
    dlt = dlt || g == 4;
    if (r.dose != step.level) continue;
    severity += rule.severity.at(static_cast<std::size_t>(g));
    ++step.at_level;
  }
  step.mean_severity = severity / static_cast<double>(step.at_level);
  if (step.at_level % rule.cohort_size != 0) {
    step.decision = StageDecision::Stay;
  } else if (dlt) {
    step.decision = StageDecision::HandOff;
  } else {
    step.decision = step.mean_severity < rule.severity_threshold ? StageDecision::Escalate : StageDecision::Stay;
  }
  return step;
}

/// Number of patients included in the initial stage, or nullopt while it
/// is still running.
inline std::optional<std::size_t> handoff_point(const EscalationRule& rule, const TrialHistory& history) {
  std::vector<std::size_t> count;
  bool dlt = false;
  for (std::size_t j = 0; j < history.size(); ++j) {
    const auto& r = history[j];
    if (count.size() <= r.dose) count.resize(r.dose + 1, 0);
    ++count[r.dose];
    dlt = dlt || r.toxicity == 1;
    if (dlt && count[r.dose] % rule.cohort_size == 0) return j + 1;
  }
  return std::nullopt;
}

inline Stage design_stage(const DesignPolicy& policy, const TrialHistory& history) {
  if (const auto* rule = policy.escalation()) return handoff_point(*rule, history) ? Stage::ModelBased : Stage::StageOne;
  return Stage::ModelBased;
}

/// Randomized allocation around the base dose: one level up with
/// probability delta_prob when the base estimate is at or below target,
/// one level down when above. At the grid edges allocation is systematic.
inline DoseIndex randomized_next_dose(const RandomizeSpec& spec, double theta, DoseIndex base, std::span<const double> estimates,
                                      RandomStream& rng, std::optional<int>* delta_out = nullptr) {
  const std::size_t k = estimates.size();
  const bool low = estimates[base] <= theta;
  if ((low && base + 1 == k) || (!low && base == 0)) return base;
  const int delta = rng.bernoulli(spec.delta_prob) ? 1 : 0;
  if (delta_out) *delta_out = delta;
  return low ? base + delta : base - delta;
}

struct MsdChoice {
  DoseIndex dose = 0;
  double a_hat = 0.0;
  double b_hat = 0.0;
  std::vector<double> toxicity;  // psi(d_i, a_hat)
  std::vector<double> efficacy;  // phi(d_i, b_hat)
  std::vector<double> success;   // phi (1 - psi)
};

/// argmax_i phi_i (1 - psi_i), ties to the lower dose.
inline DoseIndex msd_select(std::span<const double> efficacy, std::span<const double> toxicity) {
  if (efficacy.size() != toxicity.size() || efficacy.empty())
    throw Error(ErrorCode::InvalidConfig, "efficacy and toxicity curves must match");
  DoseIndex best = 0;
  double best_p = -1.0;
  for (DoseIndex i = 0; i < efficacy.size(); ++i) {
    const double p = efficacy[i] * (1.0 - toxicity[i]);
    if (p > best_p) {
      best_p = p;
      best = i;
    }
  }
  return best;
}

/// Fits the toxicity model on all patients and the efficacy model on the
/// non-toxic patients' responses, then maximises the estimated success.
inline MsdChoice msd_next_dose(const MsdSpec& spec, const WorkingModel& tox_model, const TrialHistory& history) {
  detail::require_one_parameter(tox_model);
  const std::size_t k = tox_model.dose_count();
  if (spec.beta.size() != k) throw Error(ErrorCode::InvalidPolicy, "msd beta needs one value per dose");
  const WorkingModel eff_model(ModelKind::PowerExp, Skeleton(spec.beta));
  const DoseTally resp = tally_response(history, k);
  if (resp.empty()) throw Error(ErrorCode::MissingData, "no non-toxic records for the response fit");
  MsdChoice c;
  c.a_hat = mle(tox_model, tally_toxicity(history, k));
  c.b_hat = mle(eff_model, resp);
  c.toxicity = tox_model.curve(c.a_hat);
  c.efficacy = eff_model.curve(c.b_hat);
  c.success.resize(k);
  for (DoseIndex i = 0; i < k; ++i) c.success[i] = c.efficacy[i] * (1.0 - c.toxicity[i]);
  c.dose = msd_select(c.efficacy, c.toxicity);
  return c;
}

struct Recommendation {
  DoseIndex dose = 0;       // the dose for the next patient
  DoseIndex base_dose = 0;  // before randomization; the current MTD/MSD estimate
  Stage stage = Stage::ModelBased;
  std::string rationale;
  std::optional<StageDecision> stage_decision;
  std::vector<double> estimates;  // R-hat per dose; empty during stage one
  std::optional<double> parameter;
  std::optional<ConfidenceInterval> interval;  // for the recommended dose, likelihood estimates only
  std::vector<double> model_weights;
  std::optional<std::size_t> selected_member;
  std::optional<int> group;
  std::optional<int> delta;
  std::vector<double> efficacy;
  std::vector<double> success;
};

namespace detail {

inline DoseIndex cap_no_skip(const DesignPolicy& policy, const TrialHistory& history, DoseIndex dose,
                             std::string& rationale) {
  if (!policy.no_skip || history.empty()) return dose;
  const DoseIndex cap = *history.highest_tried() + 1;
  if (dose <= cap) return dose;
  rationale += "; no skipping limits the dose to level " + level(cap);
  return cap;
}

inline std::string estimate_list(std::span<const double> r) {
  std::string s = "(";
  for (std::size_t i = 0; i < r.size(); ++i) s += (i ? ", " : "") + fixed(r[i]);
  return s + ")";
}

inline void attach_interval(const DesignPolicy& policy, const WorkingModel& model, const TrialHistory& history,
                            Recommendation& rec) {
  if (!rec.parameter) return;
  try {
    rec.interval = confidence_interval(model, history, *rec.parameter, rec.base_dose, policy.confidence_level);
  } catch (const Error&) {
    rec.interval.reset();
  }
}

inline DoseIndex prior_modal_dose(const PartitionPrior& q) {
  return static_cast<DoseIndex>(std::max_element(q.mass.begin(), q.mass.end()) - q.mass.begin());
}

}  // namespace detail

/// The next dose for a patient in group z (ignored unless grouping is set).
/// Deterministic in (policy, model, history, rng state); rng is advanced
/// only by randomized allocation.
inline Recommendation next_dose(const DesignPolicy& policy, const WorkingModel& model, const TrialHistory& history,
                                RandomStream& rng, int group = 0) {
  const std::size_t k = model.dose_count();
  history.validate(k);
  Recommendation rec;
  if (policy.grouping) {
    if (group != 0 && group != 1) throw Error(ErrorCode::InvalidHistory, "group must be 0 or 1");
    for (const auto& r : history.records())
      if (!r.group) throw Error(ErrorCode::MissingData, "grouping is active but a record has no group label");
    rec.group = group;
  }

  // initial escalation stage
  if (const auto* rule = policy.escalation()) {
    if (history.empty()) {
      rec.stage = Stage::StageOne;
      rec.stage_decision = StageDecision::Stay;
      rec.rationale = "stage one: the first patient is treated at the lowest level";
      return rec;
    }
    if (!handoff_point(*rule, history)) {
      const StageStep step = two_stage_step(*rule, history);
      rec.stage = Stage::StageOne;
      rec.stage_decision = step.decision;
      const std::string sev = "mean severity " + detail::fixed(step.mean_severity, 2) + " over " +
                              std::to_string(step.at_level) + " patient(s) at level " + detail::level(step.level);
      if (step.decision == StageDecision::Escalate && step.level + 1 < k) {
        rec.dose = rec.base_dose = step.level + 1;
        rec.rationale = "stage one: " + sev + " is below " + detail::fixed(rule->severity_threshold, 2) +
                        ", escalate to level " + detail::level(rec.dose);
      } else {
        rec.dose = rec.base_dose = step.level;
        if (step.at_level % rule->cohort_size != 0)
          rec.rationale = "stage one: complete the cohort of " + std::to_string(rule->cohort_size) + " at level " +
                          detail::level(step.level);
        else if (step.decision == StageDecision::Escalate)
          rec.rationale = "stage one: " + sev + ", already at the highest level";
        else
          rec.rationale = "stage one: " + sev + " is not below " + detail::fixed(rule->severity_threshold, 2) +
                          ", include another patient at level " + detail::level(step.level);
      }
      return rec;
    }
    rec.stage_decision = StageDecision::HandOff;
  }
  rec.stage = Stage::ModelBased;

  // most successful dose
  if (policy.msd) {
    const DoseTally tox = tally_toxicity(history, k);
    bool ready = tox.heterogeneous();
    if (ready) {
      const DoseTally resp = tally_response(history, k);
      ready = resp.heterogeneous();
    }
    if (!ready) {
      if (history.empty()) {
        rec.rationale = "msd: no data yet, start at the lowest level";
      } else if (tox.total_events() == tox.total()) {
        rec.rationale = "msd: every patient so far had a toxicity, return to the lowest level";
      } else {
        rec.dose = std::min(history.back().dose + 1, k - 1);
        rec.rationale = "msd: toxicity or response data not yet heterogeneous, escalate one level to " +
                        detail::level(rec.dose);
      }
      rec.base_dose = rec.dose;
      return rec;
    }
    const MsdChoice c = msd_next_dose(*policy.msd, model, history);
    rec.base_dose = c.dose;
    rec.parameter = c.a_hat;
    rec.estimates = c.toxicity;
    rec.efficacy = c.efficacy;
    rec.success = c.success;
    rec.rationale = "msd: estimated success " + detail::estimate_list(c.success) + " is largest at level " +
                    detail::level(c.dose);
    rec.dose = detail::cap_no_skip(policy, history, c.dose, rec.rationale);
    return rec;
  }

  std::vector<double> estimates;
  std::string how;
  if (const auto* b = policy.bayes_inference()) {
    const PriorSpec prior = effective_prior(policy);
    if (history.empty()) {
      if (const auto* q = std::get_if<PartitionPrior>(&prior)) {
        const DoseIndex d = detail::prior_modal_dose(*q);
        const PosteriorSummary s = posterior(model, TrialHistory{}, prior);
        rec.estimates = b->estimate == EstimateKind::PosteriorMean ? s.tox_mean : s.tox_plugin;
        rec.parameter = s.mean;
        rec.dose = rec.base_dose = d;
        rec.rationale = "prior: the partition prior puts most mass on the interval of level " + detail::level(d);
        return rec;
      }
    }
    if (auto cls = design_class(policy, model)) {
      const ModelClassPosterior mp = model_class_posterior(*cls, history, prior);
      std::size_t m = 0;
      for (std::size_t j = 1; j < mp.weights.size(); ++j)
        if (mp.weights[j] > mp.weights[m]) m = j;
      const ClassMember& member = cls->member(m);
      const PosteriorSummary& s = mp.members[m];
      const auto& curve = b->estimate == EstimateKind::PosteriorMean ? s.tox_mean : s.tox_plugin;
      estimates.resize(k);
      for (DoseIndex i = 0; i < k; ++i) estimates[i] = curve[member.effective_dose(i, group)];
      rec.model_weights = mp.weights;
      rec.selected_member = m;
      rec.parameter = s.mean;
      how = "model " + std::to_string(m + 1) + " (posterior weight " + detail::fixed(mp.weights[m]) + ")" +
            (policy.grouping ? " for group " + std::to_string(group) : std::string());
    } else {
      const PosteriorSummary s = posterior(model, history, prior);
      estimates = b->estimate == EstimateKind::PosteriorMean ? s.tox_mean : s.tox_plugin;
      rec.parameter = s.mean;
      if (s.likelihood_only) detail::attach_interval(policy, model, history, rec);
      how = s.likelihood_only ? "maximum likelihood" : std::string(to_string(b->estimate)) + " estimates";
    }
  } else {
    const DoseTally tally = tally_toxicity(history, k);
    if (tally.total_events() == tally.total()) {
      rec.rationale = "likelihood: every patient so far had a toxicity, return to the lowest level";
      return rec;
    }
    const double a_hat = mle(model, tally);
    estimates = model.curve(a_hat);
    rec.parameter = a_hat;
    how = "maximum likelihood";
  }

  const TargetChoice choice = closest_to_target(estimates, policy.target, policy.distance, policy.tie);
  rec.base_dose = choice.dose;
  rec.estimates = estimates;
  rec.rationale = how + ": estimates " + detail::estimate_list(estimates) + "; level " + detail::level(choice.dose) +
                  " is closest to the target " + detail::fixed(policy.target) +
                  (policy.distance.is_symmetric() ? "" : " under the asymmetric distance") +
                  (choice.tied ? " (tie broken to the " + std::string(policy.tie == TieBreak::Lower ? "lower" : "upper") + " level)" : "");
  if (!policy.bayes()) detail::attach_interval(policy, model, history, rec);

  DoseIndex dose = choice.dose;
  if (policy.randomize) {
    std::optional<int> delta;
    dose = randomized_next_dose(*policy.randomize, policy.target, dose, estimates, rng, &delta);
    rec.delta = delta;
    if (delta) rec.rationale += "; randomization drew delta = " + std::to_string(*delta) + ", allocate level " + detail::level(dose);
  }
  rec.dose = detail::cap_no_skip(policy, history, dose, rec.rationale);
  return rec;
}

/// The two-group allocation of section 5.1 as a free function: choose the
/// member with the larger posterior weight (ties to Model 1) and allocate
/// under that member's curve for group z.
inline DoseIndex two_group_next_dose(const ModelClass& cls, const TrialHistory& history, const PriorSpec& prior, int group,
                                     double theta, Distance distance = {}, EstimateKind estimate = EstimateKind::PosteriorMean) {
  for (const auto& r : history.records())
    if (!r.group) throw Error(ErrorCode::MissingData, "grouping is active but a record has no group label");
  const ModelClassPosterior mp = model_class_posterior(cls, history, prior);
  std::size_t m = 0;
  for (std::size_t j = 1; j < mp.weights.size(); ++j)
    if (mp.weights[j] > mp.weights[m]) m = j;
  const ClassMember& member = cls.member(m);
  const std::size_t k = member.model.dose_count();
  const PosteriorSummary& s = mp.members[m];
  const auto& curve = estimate == EstimateKind::PosteriorMean ? s.tox_mean : s.tox_plugin;
  std::vector<double> est(k);
  for (DoseIndex i = 0; i < k; ++i) est[i] = curve[member.effective_dose(i, group)];
  return closest_to_target(est, theta, distance).dose;
}

}  // namespace crm
