#pragma once

// JSON and text forms of designs, scenarios, records, recommendations and
// reports. Dose levels on the wire are one-based; doubles are written in
// shortest round-trip form, so every value reads back bit-identical.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crm/designs.hpp"
#include "crm/error.hpp"
#include "crm/history.hpp"
#include "crm/model.hpp"
#include "crm/partition.hpp"
#include "crm/prior.hpp"
#include "crm/simulator.hpp"

namespace crm {

using json = nlohmann::json;

/// A parsed design document: the model, the policy, and run settings.
struct Design {
  std::string name;
  WorkingModel model;
  DesignPolicy policy;
  std::uint64_t seed = 0;
  std::optional<std::size_t> sample_size;
  json document;  // the validated source, kept verbatim for persistence
};

namespace config_detail {

[[noreturn]] inline void fail(const std::string& path, const std::string& msg) {
  throw Error(ErrorCode::InvalidConfig, path + ": " + msg);
}

inline void only_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(path, "expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) fail(path + "." + key, "unknown field");
}

inline const json& need(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) fail(path + "." + key, "required field is missing");
  return j.at(key);
}

inline double number(const json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "infinity" || s == "Infinity") return std::numeric_limits<double>::infinity();
  }
  fail(path, "expected a number");
}

inline std::int64_t integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<std::int64_t>();
}

inline bool boolean(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected true or false");
  return j.get<bool>();
}

inline std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

inline std::vector<double> numbers(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

/// Runs f, prefixing any library error with the field path.
template <class F>
auto at_field(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidConfig && std::string(e.what()).rfind("design", 0) == 0) throw;
    throw Error(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
}

inline json level_json(DoseIndex d) { return static_cast<std::int64_t>(d) + 1; }

inline json optional_number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

/// Shortest text that reads back as the same double.
inline std::string num(double x) { return json(x).dump(); }

}  // namespace config_detail

inline PatientRecord parse_record(const json& j, std::size_t dose_count, const std::string& path = "record") {
  using namespace config_detail;
  only_keys(j, path, {"dose", "toxicity", "grade", "group", "response"});
  PatientRecord r;
  const auto level = integer(need(j, path, "dose"), path + ".dose");
  if (level < 1 || static_cast<std::size_t>(level) > dose_count)
    fail(path + ".dose", "level must lie in 1.." + std::to_string(dose_count));
  r.dose = static_cast<DoseIndex>(level - 1);
  r.toxicity = static_cast<int>(integer(need(j, path, "toxicity"), path + ".toxicity"));
  if (j.contains("grade") && !j["grade"].is_null()) r.grade = static_cast<int>(integer(j["grade"], path + ".grade"));
  if (j.contains("group") && !j["group"].is_null()) r.group = static_cast<int>(integer(j["group"], path + ".group"));
  if (j.contains("response") && !j["response"].is_null())
    r.response = static_cast<int>(integer(j["response"], path + ".response"));
  at_field(path, [&] {
    validate_record(r, dose_count);
    return 0;
  });
  return r;
}

inline json record_to_json(const PatientRecord& r) {
  json j{{"dose", config_detail::level_json(r.dose)}, {"toxicity", r.toxicity}};
  if (r.grade) j["grade"] = *r.grade;
  if (r.group) j["group"] = *r.group;
  if (r.response) j["response"] = *r.response;
  return j;
}

inline json history_to_json(const TrialHistory& h) {
  json out = json::array();
  for (const auto& r : h.records()) out.push_back(record_to_json(r));
  return out;
}

inline TrialHistory parse_history(const json& j, std::size_t dose_count, const std::string& path) {
  if (!j.is_array()) config_detail::fail(path, "expected an array of records");
  TrialHistory h;
  for (std::size_t i = 0; i < j.size(); ++i) h.add(parse_record(j[i], dose_count, path + "[" + std::to_string(i) + "]"));
  return h;
}

inline PriorSpec parse_prior(const json& j, std::size_t dose_count, const std::string& path = "design.inference.prior") {
  using namespace config_detail;
  if (!j.is_object()) fail(path, "expected an object");
  const std::string kind = text(need(j, path, "kind"), path + ".kind");
  if (kind == "none") {
    only_keys(j, path, {"kind"});
    return NoPrior{};
  }
  if (kind == "gamma") {
    only_keys(j, path, {"kind", "lambda", "shape"});
    return GammaPrior{number(need(j, path, "lambda"), path + ".lambda"), number(need(j, path, "shape"), path + ".shape")};
  }
  if (kind == "normal") {
    only_keys(j, path, {"kind", "mean", "variance"});
    return NormalPrior{j.contains("mean") ? number(j["mean"], path + ".mean") : 0.0,
                       number(need(j, path, "variance"), path + ".variance")};
  }
  if (kind == "pseudo-data") {
    only_keys(j, path, {"kind", "weight", "records"});
    return PseudoDataPrior{parse_history(need(j, path, "records"), dose_count, path + ".records"),
                           number(need(j, path, "weight"), path + ".weight")};
  }
  if (kind == "partition") {
    only_keys(j, path, {"kind", "mass", "bounds"});
    PartitionPrior q;
    q.mass = j.contains("mass") ? numbers(j["mass"], path + ".mass")
                                : std::vector<double>(dose_count, 1.0 / static_cast<double>(dose_count));
    if (j.contains("bounds")) {
      const auto b = numbers(j["bounds"], path + ".bounds");
      if (b.size() != 2) fail(path + ".bounds", "expected [lower, upper]");
      q.bounds = Bounds{b[0], b[1]};
    }
    return q;
  }
  fail(path + ".kind", "unknown prior kind '" + kind + "' (gamma, normal, pseudo-data, partition, none)");
}

inline json prior_to_json(const PriorSpec& prior) {
  json j{{"kind", prior_kind(prior)}};
  if (const auto* g = std::get_if<GammaPrior>(&prior)) {
    j["lambda"] = g->lambda;
    j["shape"] = g->shape;
  } else if (const auto* n = std::get_if<NormalPrior>(&prior)) {
    j["mean"] = n->mean;
    j["variance"] = n->variance;
  } else if (const auto* p = std::get_if<PseudoDataPrior>(&prior)) {
    j["weight"] = p->weight;
    j["records"] = history_to_json(p->records);
  } else if (const auto* q = std::get_if<PartitionPrior>(&prior)) {
    j["mass"] = q->mass;
    if (q->bounds) j["bounds"] = {q->bounds->lower, q->bounds->upper};
  }
  return j;
}

/// Parses and validates a design document; errors name the offending field.
inline Design parse_design(const json& j) {
  using namespace config_detail;
  const std::string path = "design";
  only_keys(j, path,
            {"name", "description", "skeleton", "labels", "model", "bounds", "target", "inference", "distance",
             "randomize", "no_skip", "tie_break", "confidence_level", "grouping", "model_class", "msd", "seed",
             "sample_size"});
  Design d;
  d.document = j;
  if (j.contains("name")) d.name = text(j["name"], path + ".name");

  const auto alpha = numbers(need(j, path, "skeleton"), path + ".skeleton");
  std::vector<std::string> labels;
  if (j.contains("labels")) {
    if (!j["labels"].is_array()) fail(path + ".labels", "expected an array of strings");
    for (std::size_t i = 0; i < j["labels"].size(); ++i)
      labels.push_back(text(j["labels"][i], path + ".labels[" + std::to_string(i) + "]"));
  }
  const Skeleton skeleton = at_field(path + ".skeleton", [&] { return Skeleton(alpha, labels); });
  const ModelKind kind = at_field(path + ".model", [&] {
    return j.contains("model") ? model_kind_from_string(text(j["model"], path + ".model")) : ModelKind::PowerExp;
  });
  Bounds bounds = default_bounds(kind);
  if (j.contains("bounds")) {
    const auto b = numbers(j["bounds"], path + ".bounds");
    if (b.size() != 2) fail(path + ".bounds", "expected [lower, upper]");
    bounds = Bounds{b[0], b[1]};
  }
  d.model = at_field(path + ".bounds", [&] { return WorkingModel(kind, skeleton, bounds); });
  const std::size_t k = d.model.dose_count();

  DesignPolicy& p = d.policy;
  p.target = number(need(j, path, "target"), path + ".target");

  const json& inf = need(j, path, "inference");
  const std::string ipath = path + ".inference";
  const std::string mode = text(need(inf, ipath, "mode"), ipath + ".mode");
  if (mode == "likelihood-two-stage") {
    only_keys(inf, ipath, {"mode", "cohort_size", "severity_threshold", "severity"});
    EscalationRule rule;
    if (inf.contains("cohort_size")) {
      const auto c = integer(inf["cohort_size"], ipath + ".cohort_size");
      if (c < 1) fail(ipath + ".cohort_size", "must be at least 1");
      rule.cohort_size = static_cast<std::size_t>(c);
    }
    if (inf.contains("severity_threshold")) rule.severity_threshold = number(inf["severity_threshold"], ipath + ".severity_threshold");
    if (inf.contains("severity")) {
      const auto s = numbers(inf["severity"], ipath + ".severity");
      if (s.size() != 5) fail(ipath + ".severity", "expected five values for grades 0..4");
      std::copy(s.begin(), s.end(), rule.severity.begin());
    }
    p.inference = LikelihoodTwoStage{rule};
  } else if (mode == "bayes") {
    only_keys(inf, ipath, {"mode", "prior", "estimate"});
    BayesInference b;
    b.prior = parse_prior(need(inf, ipath, "prior"), k, ipath + ".prior");
    if (inf.contains("estimate")) {
      const auto e = text(inf["estimate"], ipath + ".estimate");
      if (e == "posterior-mean") b.estimate = EstimateKind::PosteriorMean;
      else if (e == "plug-in") b.estimate = EstimateKind::PlugIn;
      else fail(ipath + ".estimate", "expected 'posterior-mean' or 'plug-in'");
    }
    p.inference = b;
  } else {
    fail(ipath + ".mode", "expected 'likelihood-two-stage' or 'bayes'");
  }

  if (j.contains("distance")) {
    only_keys(j["distance"], path + ".distance", {"over_weight"});
    if (j["distance"].contains("over_weight"))
      p.distance.over_weight = number(j["distance"]["over_weight"], path + ".distance.over_weight");
  }
  if (j.contains("randomize") && !j["randomize"].is_null()) {
    only_keys(j["randomize"], path + ".randomize", {"delta_prob"});
    RandomizeSpec r;
    if (j["randomize"].contains("delta_prob")) r.delta_prob = number(j["randomize"]["delta_prob"], path + ".randomize.delta_prob");
    p.randomize = r;
  }
  if (j.contains("no_skip")) p.no_skip = boolean(j["no_skip"], path + ".no_skip");
  if (j.contains("tie_break")) {
    const auto t = text(j["tie_break"], path + ".tie_break");
    if (t == "lower") p.tie = TieBreak::Lower;
    else if (t == "upper") p.tie = TieBreak::Upper;
    else fail(path + ".tie_break", "expected 'lower' or 'upper'");
  }
  if (j.contains("confidence_level")) p.confidence_level = number(j["confidence_level"], path + ".confidence_level");
  if (j.contains("grouping") && !j["grouping"].is_null()) {
    only_keys(j["grouping"], path + ".grouping", {"prior_weights"});
    GroupingSpec g;
    if (j["grouping"].contains("prior_weights")) g.prior_weights = numbers(j["grouping"]["prior_weights"], path + ".grouping.prior_weights");
    p.grouping = g;
  }
  if (j.contains("model_class") && !j["model_class"].is_null()) {
    const std::string cpath = path + ".model_class";
    only_keys(j["model_class"], cpath, {"skeletons", "prior_weights"});
    ModelClassSpec c;
    const json& sk = need(j["model_class"], cpath, "skeletons");
    if (!sk.is_array()) fail(cpath + ".skeletons", "expected an array of skeletons");
    for (std::size_t i = 0; i < sk.size(); ++i) c.skeletons.push_back(numbers(sk[i], cpath + ".skeletons[" + std::to_string(i) + "]"));
    if (j["model_class"].contains("prior_weights")) c.prior_weights = numbers(j["model_class"]["prior_weights"], cpath + ".prior_weights");
    p.model_class = c;
  }
  if (j.contains("msd") && !j["msd"].is_null()) {
    only_keys(j["msd"], path + ".msd", {"beta"});
    p.msd = MsdSpec{numbers(need(j["msd"], path + ".msd", "beta"), path + ".msd.beta")};
  }
  if (j.contains("seed")) {
    const auto s = integer(j["seed"], path + ".seed");
    if (s < 0) fail(path + ".seed", "must be non-negative");
    d.seed = static_cast<std::uint64_t>(s);
  }
  if (j.contains("sample_size")) {
    const auto n = integer(j["sample_size"], path + ".sample_size");
    if (n < 1) fail(path + ".sample_size", "must be at least 1");
    d.sample_size = static_cast<std::size_t>(n);
  }
  at_field(path, [&] {
    validate_policy(p, d.model);
    if (p.model_class) design_class(p, d.model);
    if (p.bayes()) {
      const PriorSpec prior = effective_prior(p);
      if (std::holds_alternative<PartitionPrior>(prior)) compute_partition(d.model, p.target, std::get<PartitionPrior>(prior).bounds);
    }
    return 0;
  });
  return d;
}

inline Scenario parse_scenario(const json& j, std::size_t dose_count, const std::string& path = "scenario",
                               std::optional<std::size_t> default_n = std::nullopt) {
  using namespace config_detail;
  only_keys(j, path, {"name", "true_tox", "true_resp", "group_shift", "group_prob", "n", "seed", "grade_probs"});
  Scenario s;
  if (j.contains("name")) s.name = text(j["name"], path + ".name");
  if (default_n) s.n = *default_n;
  s.true_tox = numbers(need(j, path, "true_tox"), path + ".true_tox");
  if (j.contains("true_resp") && !j["true_resp"].is_null()) s.true_resp = numbers(j["true_resp"], path + ".true_resp");
  if (j.contains("group_shift")) s.group_shift = boolean(j["group_shift"], path + ".group_shift");
  if (j.contains("group_prob")) s.group_prob = number(j["group_prob"], path + ".group_prob");
  if (j.contains("n")) {
    const auto n = integer(j["n"], path + ".n");
    if (n < 1) fail(path + ".n", "must be at least 1");
    s.n = static_cast<std::size_t>(n);
  }
  if (j.contains("seed")) s.seed = static_cast<std::uint64_t>(integer(j["seed"], path + ".seed"));
  if (j.contains("grade_probs") && !j["grade_probs"].is_null()) {
    const json& g = j["grade_probs"];
    if (!g.is_array()) fail(path + ".grade_probs", "expected one row per dose");
    std::vector<std::array<double, 4>> rows;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto row = numbers(g[i], path + ".grade_probs[" + std::to_string(i) + "]");
      if (row.size() != 4) fail(path + ".grade_probs[" + std::to_string(i) + "]", "expected probabilities of grades 0..3");
      rows.push_back({row[0], row[1], row[2], row[3]});
    }
    s.grade_probs = rows;
  }
  at_field(path, [&] {
    s.validate(dose_count);
    return 0;
  });
  return s;
}

/// A single scenario object, an array, or {"scenarios": [...]}.
inline std::vector<Scenario> parse_scenarios(const json& j, std::size_t dose_count,
                                             std::optional<std::size_t> default_n = std::nullopt) {
  const json* list = &j;
  if (j.is_object() && j.contains("scenarios")) list = &j["scenarios"];
  std::vector<Scenario> out;
  if (list->is_array()) {
    for (std::size_t i = 0; i < list->size(); ++i)
      out.push_back(parse_scenario((*list)[i], dose_count, "scenarios[" + std::to_string(i) + "]", default_n));
  } else {
    out.push_back(parse_scenario(*list, dose_count, "scenario", default_n));
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i].name.empty()) out[i].name = "scenario" + std::to_string(i + 1);
  return out;
}

inline json interval_to_json(const ConfidenceInterval& ci, double level) {
  return json{{"level", level}, {"lower", ci.lower}, {"upper", ci.upper}, {"variance", ci.variance}};
}

inline json recommendation_to_json(const Recommendation& r, const DesignPolicy& policy) {
  using config_detail::level_json;
  json j{{"dose", level_json(r.dose)},
         {"mtd_estimate", level_json(r.base_dose)},
         {"stage", to_string(r.stage)},
         {"rationale", r.rationale},
         {"estimates", r.estimates}};
  if (r.stage_decision) j["stage_decision"] = to_string(*r.stage_decision);
  j["parameter"] = r.parameter ? json(*r.parameter) : json(nullptr);
  j["interval"] = r.interval ? interval_to_json(*r.interval, policy.confidence_level) : json(nullptr);
  if (!r.model_weights.empty()) {
    j["model_weights"] = r.model_weights;
    j["selected_model"] = static_cast<std::int64_t>(*r.selected_member) + 1;
  }
  if (r.group) j["group"] = *r.group;
  if (r.delta) j["delta"] = *r.delta;
  if (!r.efficacy.empty()) {
    j["efficacy"] = r.efficacy;
    j["success"] = r.success;
  }
  return j;
}

inline json partition_to_json(const Partition& p, const WorkingModel& model) {
  json intervals = json::array();
  for (DoseIndex i = 0; i < p.dose_count(); ++i)
    intervals.push_back({{"dose", config_detail::level_json(i)},
                         {"label", model.skeleton().labels()[i]},
                         {"lower", p.kappas[i]},
                         {"upper", p.kappas[i + 1]},
                         {"closed_right", i + 1 == p.dose_count()}});
  return json{{"model", to_string(model.kind())},
              {"theta", p.theta},
              {"bounds", {p.bounds.lower, p.bounds.upper}},
              {"kappas", p.kappas},
              {"intervals", intervals}};
}

inline std::string partition_to_tsv(const Partition& p, const WorkingModel& model) {
  std::ostringstream out;
  out << "dose\tlabel\tlower\tupper\n";
  for (DoseIndex i = 0; i < p.dose_count(); ++i)
    out << i + 1 << '\t' << model.skeleton().labels()[i] << '\t' << config_detail::num(p.kappas[i]) << '\t'
        << config_detail::num(p.kappas[i + 1]) << '\n';
  return out.str();
}

inline json consistency_to_json(const ConsistencyReport& r) {
  json pieces = json::array();
  for (const auto& [lo, hi] : r.s_set.pieces) pieces.push_back({lo, hi});
  return json{{"a_constants", r.a_constants}, {"mtd", config_detail::level_json(r.mtd)}, {"mtd_tied", r.mtd_tied},
              {"theta0", r.theta0},           {"a0", r.a0},                              {"s_set", pieces},
              {"members_in_set", r.members_in_set}, {"consistent", r.consistent()},      {"warnings", r.warnings}};
}

inline json oc_to_json(const OperatingCharacteristics& oc, const Scenario& s) {
  using config_detail::optional_number;
  return json{{"scenario", s.name},
              {"true_tox", s.true_tox},
              {"replicates", oc.replicates},
              {"n", oc.n},
              {"true_mtd", config_detail::level_json(oc.true_mtd)},
              {"theta0", oc.theta0},
              {"recommendation_dist", oc.recommendation_dist},
              {"allocation_dist", oc.allocation_dist},
              {"toxicity_rate", oc.toxicity_rate},
              {"settle_mean", oc.settle_mean},
              {"settle_window", oc.settle_window},
              {"settled_fraction", oc.settled_fraction},
              {"settle_dist", oc.settle_dist},
              {"theta_hat_count", oc.theta_hat_count},
              {"theta_hat_mean", optional_number(oc.theta_hat_mean)},
              {"theta_hat_var", optional_number(oc.theta_hat_var)},
              {"scaled_variance", optional_number(oc.scaled_variance)},
              {"scaled_mse", optional_number(oc.scaled_mse)}};
}

/// One row per dose level.
inline std::string oc_to_csv(const OperatingCharacteristics& oc, const Scenario& s, const WorkingModel& model) {
  std::ostringstream out;
  out << "scenario,level,label,true_tox,recommendation,allocation\n";
  for (DoseIndex i = 0; i < oc.recommendation_dist.size(); ++i)
    out << s.name << ',' << i + 1 << ',' << model.skeleton().labels()[i] << ',' << config_detail::num(s.true_tox[i]) << ','
        << config_detail::num(oc.recommendation_dist[i]) << ',' << config_detail::num(oc.allocation_dist[i]) << '\n';
  return out.str();
}

}  // namespace crm
