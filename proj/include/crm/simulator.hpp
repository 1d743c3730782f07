#pragma once

// Replicated trial simulation under a known truth. Each replicate owns its
// random streams, so results do not depend on how replicates are scheduled,
// and the aggregation is an in-order fold of per-trial summaries.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "crm/designs.hpp"
#include "crm/error.hpp"
#include "crm/history.hpp"
#include "crm/model.hpp"
#include "crm/random.hpp"
#include "crm/target.hpp"

namespace crm {

struct Scenario {
  std::string name;
  std::vector<double> true_tox;                  // R(d_i)
  std::optional<std::vector<double>> true_resp;  // Q(d_i)
  bool group_shift = false;  // group 1 toxicity is R(d_{i+1}), saturating at d_k
  double group_prob = 0.5;   // Pr(z = 1) when groups are drawn
  std::size_t n = 16;
  std::uint64_t seed = 0;
  /// Per-dose probabilities of grades 0..3 given no dose-limiting toxicity.
  /// Without it a non-toxic patient has grade 0 and a toxic one grade 4.
  std::optional<std::vector<std::array<double, 4>>> grade_probs;

  void validate(std::size_t k) const {
    if (true_tox.size() != k) throw Error(ErrorCode::InvalidConfig, "scenario true_tox must have one value per dose");
    for (std::size_t i = 0; i < k; ++i) {
      if (!(true_tox[i] >= 0.0 && true_tox[i] <= 1.0))
        throw Error(ErrorCode::InvalidConfig, "scenario true_tox outside [0,1] at dose " + std::to_string(i + 1));
      if (i > 0 && !(true_tox[i] > true_tox[i - 1]))
        throw Error(ErrorCode::InvalidConfig, "scenario true_tox is not strictly increasing");
    }
    if (true_resp) {
      if (true_resp->size() != k) throw Error(ErrorCode::InvalidConfig, "scenario true_resp must have one value per dose");
      for (double q : *true_resp)
        if (!(q > 0.0 && q < 1.0)) throw Error(ErrorCode::InvalidConfig, "scenario true_resp entries must lie in (0,1)");
    }
    if (!(group_prob >= 0.0 && group_prob <= 1.0)) throw Error(ErrorCode::InvalidConfig, "group_prob must lie in [0,1]");
    if (n < 1) throw Error(ErrorCode::InvalidConfig, "scenario sample size must be at least 1");
    if (grade_probs && grade_probs->size() != k)
      throw Error(ErrorCode::InvalidConfig, "scenario grade_probs must have one row per dose");
  }

  double tox(DoseIndex d, int group) const {
    if (group_shift && group == 1) d = std::min(d + 1, true_tox.size() - 1);
    return true_tox[d];
  }

  /// The dose closest to target under the true curve (ties to the lower).
  DoseIndex mtd(double theta) const { return closest_to_target(true_tox, theta).dose; }
};

/// What happens to patient j at the given dose: toxicity, grade, response.
struct PatientOutcome {
  int toxicity = 0;
  std::optional<int> grade;
  std::optional<int> response;
};

/// Supplies outcomes in place of random draws (patient index j is zero-based).
using OutcomeScript = std::function<PatientOutcome(std::size_t j, DoseIndex dose, int group)>;

struct TrialResult {
  TrialHistory history;
  Recommendation final;           // the recommendation for patient n+1
  DoseIndex recommended = 0;      // the final MTD (or MSD) estimate
  double theta_hat = std::numeric_limits<double>::quiet_NaN();  // estimate at the recommended dose
  std::size_t settle_index = 0;   // 1-based index of the first patient after which allocation never changes
};

namespace detail {

inline bool needs_groups(const DesignPolicy& policy, const Scenario& s) { return policy.grouping.has_value() || s.group_shift; }

inline std::size_t settle_index(const TrialHistory& h) {
  std::size_t j = h.size();
  while (j > 1 && h[j - 2].dose == h.back().dose) --j;
  return j;
}

}  // namespace detail

/// One simulated trial. Outcome draws use stream 1 of the seed, design
/// randomization stream 2.
inline TrialResult run_trial(const DesignPolicy& policy, const WorkingModel& model, const Scenario& scenario,
                             std::uint64_t seed, const OutcomeScript& script = {}) {
  const std::size_t k = model.dose_count();
  scenario.validate(k);
  RandomStream outcomes(seed, 1);
  RandomStream design(seed, 2);
  const bool groups = detail::needs_groups(policy, scenario);
  TrialResult result;
  auto& h = result.history;
  for (std::size_t j = 0; j < scenario.n; ++j) {
    const int z = groups && outcomes.bernoulli(scenario.group_prob) ? 1 : 0;
    Recommendation rec;
    try {
      rec = next_dose(policy, model, h, design, z);
    } catch (const Error& e) {
      throw Error(e.code(), "patient " + std::to_string(j + 1) + ": " + e.what());
    }
    PatientRecord r;
    r.dose = rec.dose;
    if (groups) r.group = z;
    if (script) {
      const PatientOutcome o = script(j, rec.dose, z);
      r.toxicity = o.toxicity;
      r.grade = o.grade ? o.grade : std::optional<int>(o.toxicity ? 4 : 0);
      r.response = o.response;
    } else {
      r.toxicity = outcomes.bernoulli(scenario.tox(rec.dose, z)) ? 1 : 0;
      if (r.toxicity) {
        r.grade = 4;
      } else if (scenario.grade_probs) {
        const auto& row = (*scenario.grade_probs)[rec.dose];
        r.grade = static_cast<int>(outcomes.categorical(row));
      } else {
        r.grade = 0;
      }
      if (scenario.true_resp && !r.toxicity) r.response = outcomes.bernoulli((*scenario.true_resp)[rec.dose]) ? 1 : 0;
    }
    h.add(std::move(r));
  }
  try {
    result.final = next_dose(policy, model, h, design, 0);
  } catch (const Error& e) {
    throw Error(e.code(), "final recommendation: " + std::string(e.what()));
  }
  result.recommended = result.final.base_dose;
  if (!result.final.estimates.empty()) result.theta_hat = result.final.estimates[result.recommended];
  result.settle_index = detail::settle_index(h);
  return result;
}

/// The part of a trial the operating characteristics are built from.
struct TrialSummary {
  DoseIndex recommended = 0;
  std::vector<std::size_t> allocation;  // patients per dose
  std::size_t toxicities = 0;
  std::size_t settle_index = 0;
  bool settled_on_mtd = false;  // the final window of allocations all at the true MTD
  double theta_hat = std::numeric_limits<double>::quiet_NaN();
};

inline TrialSummary summarize(const TrialResult& r, std::size_t k, DoseIndex mtd, std::size_t window) {
  TrialSummary s;
  s.recommended = r.recommended;
  s.allocation.assign(k, 0);
  for (const auto& p : r.history.records()) {
    ++s.allocation[p.dose];
    s.toxicities += static_cast<std::size_t>(p.toxicity);
  }
  s.settle_index = r.settle_index;
  const std::size_t n = r.history.size();
  const std::size_t w = std::min(window, n);
  s.settled_on_mtd = true;
  for (std::size_t j = n - w; j < n; ++j) s.settled_on_mtd = s.settled_on_mtd && r.history[j].dose == mtd;
  s.theta_hat = r.theta_hat;
  return s;
}

struct OperatingCharacteristics {
  std::size_t replicates = 0;
  std::size_t n = 0;
  DoseIndex true_mtd = 0;
  double theta0 = 0.0;                      // R(d_0)
  std::vector<double> recommendation_dist;  // per dose
  std::vector<double> allocation_dist;      // pi_n(d_i), pooled over replicates
  double toxicity_rate = 0.0;
  std::vector<double> settle_dist;          // settling index 1..n (entry j-1 for index j)
  double settle_mean = 0.0;
  std::size_t settle_window = 0;
  double settled_fraction = 0.0;            // replicates whose final window is constant at d_0
  std::size_t theta_hat_count = 0;
  double theta_hat_mean = std::numeric_limits<double>::quiet_NaN();
  double theta_hat_var = std::numeric_limits<double>::quiet_NaN();
  double scaled_variance = std::numeric_limits<double>::quiet_NaN();  // n var(theta_hat)
  double scaled_mse = std::numeric_limits<double>::quiet_NaN();       // n E(theta_hat - theta0)^2
};

/// In-order fold of trial summaries.
inline OperatingCharacteristics fold_summaries(const std::vector<TrialSummary>& trials, std::size_t k, std::size_t n,
                                               DoseIndex mtd, double theta0, std::size_t window) {
  OperatingCharacteristics oc;
  oc.replicates = trials.size();
  oc.n = n;
  oc.true_mtd = mtd;
  oc.theta0 = theta0;
  oc.settle_window = window;
  oc.recommendation_dist.assign(k, 0.0);
  oc.allocation_dist.assign(k, 0.0);
  oc.settle_dist.assign(n, 0.0);
  if (trials.empty()) return oc;
  std::vector<std::size_t> rec_count(k, 0), alloc_count(k, 0), settle_count(n, 0);
  std::size_t tox = 0, settled = 0, settle_sum = 0;
  for (const auto& t : trials) {
    ++rec_count[t.recommended];
    for (DoseIndex i = 0; i < k; ++i) alloc_count[i] += t.allocation[i];
    tox += t.toxicities;
    ++settle_count[t.settle_index - 1];
    settle_sum += t.settle_index;
    settled += t.settled_on_mtd ? 1 : 0;
  }
  const double reps = static_cast<double>(trials.size());
  const double patients = reps * static_cast<double>(n);
  for (DoseIndex i = 0; i < k; ++i) {
    oc.recommendation_dist[i] = static_cast<double>(rec_count[i]) / reps;
    oc.allocation_dist[i] = static_cast<double>(alloc_count[i]) / patients;
  }
  for (std::size_t j = 0; j < n; ++j) oc.settle_dist[j] = static_cast<double>(settle_count[j]) / reps;
  oc.toxicity_rate = static_cast<double>(tox) / patients;
  oc.settle_mean = static_cast<double>(settle_sum) / reps;
  oc.settled_fraction = static_cast<double>(settled) / reps;

  double sum = 0.0;
  for (const auto& t : trials)
    if (std::isfinite(t.theta_hat)) {
      sum += t.theta_hat;
      ++oc.theta_hat_count;
    }
  if (oc.theta_hat_count > 0) {
    const double m = sum / static_cast<double>(oc.theta_hat_count);
    double ss = 0.0, se = 0.0;
    for (const auto& t : trials)
      if (std::isfinite(t.theta_hat)) {
        ss += (t.theta_hat - m) * (t.theta_hat - m);
        se += (t.theta_hat - theta0) * (t.theta_hat - theta0);
      }
    oc.theta_hat_mean = m;
    oc.theta_hat_var = oc.theta_hat_count > 1 ? ss / static_cast<double>(oc.theta_hat_count - 1) : 0.0;
    oc.scaled_variance = static_cast<double>(n) * oc.theta_hat_var;
    oc.scaled_mse = static_cast<double>(n) * se / static_cast<double>(oc.theta_hat_count);
  }
  return oc;
}

struct SimulationOptions {
  std::size_t threads = 1;
  std::optional<std::size_t> settle_window;  // defaults to the final 20% of patients
};

/// Replicate r uses seed base_seed + r.
inline OperatingCharacteristics operating_characteristics(const DesignPolicy& policy, const WorkingModel& model,
                                                          const Scenario& scenario, std::size_t replicates,
                                                          std::uint64_t base_seed, SimulationOptions options = {}) {
  if (replicates < 1) throw Error(ErrorCode::InvalidConfig, "replicates must be at least 1");
  const std::size_t k = model.dose_count();
  scenario.validate(k);
  validate_policy(policy, model);
  const DoseIndex mtd = scenario.mtd(policy.target);
  const std::size_t window = options.settle_window.value_or(std::max<std::size_t>(1, scenario.n / 5));
  std::vector<TrialSummary> trials(replicates);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r)
      trials[r] = summarize(run_trial(policy, model, scenario, base_seed + r), k, mtd, window);
  };
  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, replicates);
  if (threads == 1) {
    work(0, replicates);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t chunk = (replicates + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(std::min(replicates, t * chunk), std::min(replicates, (t + 1) * chunk));
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return fold_summaries(trials, k, scenario.n, mtd, scenario.true_tox[mtd], window);
}

}  // namespace crm
