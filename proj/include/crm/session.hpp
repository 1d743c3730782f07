#pragma once

// Live-trial sessions. A session is rebuilt entirely from its event log;
// the snapshot is a convenience copy of the derived state.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include "crm/config.hpp"
#include "crm/designs.hpp"
#include "crm/random.hpp"

namespace crm {

namespace session_detail {

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline bool valid_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')) return false;
  return true;
}

inline std::string fresh_id() {
  std::random_device rd;
  const std::uint64_t x = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  char buf[24];
  std::snprintf(buf, sizeof buf, "s%012llx", static_cast<unsigned long long>(x & 0xffffffffffffULL));
  return buf;
}

}  // namespace session_detail

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::StageOne: return "stage_one";
    case Stage::ModelBased: return "model_based";
    case Stage::Closed: return "closed";
  }
  return "unknown";
}

/// An outcome as entered: the record plus the protocol override flag.
struct OutcomeEntry {
  PatientRecord record;
  bool override_dose = false;
  std::string note;
};

class Session {
 public:
  /// Validates the design and computes the opening recommendation.
  static Session create(const json& design_document, std::string id) {
    if (!session_detail::valid_id(id))
      throw Error(ErrorCode::InvalidConfig, "session id must be 1-64 characters from [A-Za-z0-9_-]");
    Session s;
    s.id_ = std::move(id);
    s.design_ = parse_design(design_document);
    s.rng_ = RandomStream(s.design_.seed, 2);
    s.log({{"type", "session_created"}, {"id", s.id_}, {"design", s.design_.document}});
    s.refresh();
    return s;
  }

  /// Rebuilds a session from its events, checking that every logged
  /// recommendation is reproduced exactly.
  static Session replay(const std::vector<json>& events) {
    if (events.empty() || events.front().value("type", "") != "session_created")
      throw Error(ErrorCode::Io, "event log does not start with session_created");
    Session s = create(events.front().at("design"), events.front().at("id").get<std::string>());
    const std::size_t k = s.design_.model.dose_count();
    for (std::size_t i = 1; i < events.size(); ++i) {
      const json& e = events[i];
      const std::string type = e.value("type", "");
      if (type == "outcome_entered")
        s.record_outcome({parse_record(e.at("record"), k), e.value("override", false), e.value("note", "")});
      else if (type == "session_closed")
        s.close(e.value("reason", ""));
    }
    auto issued = [](const std::vector<json>& log) {
      std::vector<json> out;
      for (const auto& e : log)
        if (e.value("type", "") == "recommendation_issued") out.push_back(e.at("recommendation"));
      return out;
    };
    const auto logged = issued(events);
    const auto recomputed = issued(s.events_);
    for (std::size_t i = 0; i < std::min(logged.size(), recomputed.size()); ++i)
      if (logged[i] != recomputed[i])
        throw Error(ErrorCode::Io, "replay diverged at recommendation " + std::to_string(i + 1));
    s.events_ = events;
    return s;
  }

  const std::string& id() const noexcept { return id_; }
  const Design& design() const noexcept { return design_; }
  const TrialHistory& history() const noexcept { return history_; }
  const std::vector<json>& events() const noexcept { return events_; }
  const RandomStream& rng() const noexcept { return rng_; }
  bool closed() const noexcept { return closed_; }

  Stage stage() const { return closed_ ? Stage::Closed : design_stage(design_.policy, history_); }

  /// The outstanding recommendation for a patient of the given group.
  const Recommendation& recommendation(int group = 0) const {
    if (group < 0 || static_cast<std::size_t>(group) >= current_.size())
      throw Error(ErrorCode::InvalidHistory, "no recommendation for group " + std::to_string(group));
    return current_[static_cast<std::size_t>(group)];
  }

  /// Appends an outcome and issues the next recommendation. Returns the
  /// events written, for the store to persist.
  std::vector<json> record_outcome(const OutcomeEntry& raw) {
    if (closed_) throw Error(ErrorCode::SessionClosed, "session " + id_ + " is closed");
    const OutcomeEntry entry = complete(raw);
    validate_record(entry.record, design_.model.dose_count());
    const std::size_t before = events_.size();
    const int group = entry.record.group.value_or(0);
    const DoseIndex expected = recommendation(group).dose;
    if (entry.record.dose != expected) {
      if (!entry.override_dose)
        throw Error(ErrorCode::ProtocolViolation, "outcome at level " + std::to_string(entry.record.dose + 1) +
                                                      " but level " + std::to_string(expected + 1) +
                                                      " is recommended; set override to record it");
      json o{{"type", "override_recorded"},
             {"patient", history_.size() + 1},
             {"recommended_dose", expected + 1},
             {"administered_dose", entry.record.dose + 1}};
      if (!entry.note.empty()) o["note"] = entry.note;
      log(std::move(o));
    }
    TrialHistory next = history_;
    next.add(entry.record);
    RandomStream rng = rng_;
    auto recs = recommend(next, rng);
    history_ = std::move(next);
    rng_ = rng;
    json ev{{"type", "outcome_entered"},
            {"patient", history_.size()},
            {"record", record_to_json(entry.record)},
            {"override", entry.override_dose}};
    if (!entry.note.empty()) ev["note"] = entry.note;
    log(std::move(ev));
    current_ = std::move(recs);
    log_recommendation();
    return {events_.begin() + static_cast<std::ptrdiff_t>(before), events_.end()};
  }

  /// The recommendation record_outcome would give after these outcomes,
  /// computed on copies.
  Recommendation what_if(const std::vector<OutcomeEntry>& outcomes, int group = 0) const {
    if (closed_) throw Error(ErrorCode::SessionClosed, "session " + id_ + " is closed");
    if (outcomes.empty()) throw Error(ErrorCode::InvalidHistory, "what-if needs at least one outcome");
    TrialHistory h = history_;
    RandomStream rng = rng_;
    std::vector<Recommendation> recs = current_;
    for (const auto& raw : outcomes) {
      const OutcomeEntry o = complete(raw);
      validate_record(o.record, design_.model.dose_count());
      const int g = o.record.group.value_or(0);
      if (g < 0 || static_cast<std::size_t>(g) >= recs.size())
        throw Error(ErrorCode::InvalidHistory, "no recommendation for group " + std::to_string(g));
      if (o.record.dose != recs[static_cast<std::size_t>(g)].dose && !o.override_dose)
        throw Error(ErrorCode::ProtocolViolation, "hypothetical outcome at level " + std::to_string(o.record.dose + 1) +
                                                      " but level " +
                                                      std::to_string(recs[static_cast<std::size_t>(g)].dose + 1) +
                                                      " is recommended; set override");
      h.add(o.record);
      recs = recommend(h, rng);
    }
    if (group < 0 || static_cast<std::size_t>(group) >= recs.size())
      throw Error(ErrorCode::InvalidHistory, "no recommendation for group " + std::to_string(group));
    return recs[static_cast<std::size_t>(group)];
  }

  std::vector<json> close(const std::string& reason) {
    if (closed_) throw Error(ErrorCode::SessionClosed, "session " + id_ + " is already closed");
    closed_ = true;
    json ev{{"type", "session_closed"}, {"patients", history_.size()}};
    if (!reason.empty()) ev["reason"] = reason;
    log(std::move(ev));
    return {events_.end() - 1, events_.end()};
  }

  json recommendation_json(int group = 0) const {
    json j = recommendation_to_json(recommendation(group), design_.policy);
    j["session"] = id_;
    j["patients"] = history_.size();
    j["session_stage"] = stage_name(stage());
    return j;
  }

  /// Per-dose estimates and the interval at the recommended dose.
  json estimates_json(int group = 0) const {
    const Recommendation& r = recommendation(group);
    const auto& sk = design_.model.skeleton();
    json doses = json::array();
    for (DoseIndex i = 0; i < design_.model.dose_count(); ++i) {
      json d{{"dose", i + 1}, {"label", sk.labels()[i]}, {"skeleton", sk.alpha(i)}};
      d["estimate"] = r.estimates.empty() ? json(nullptr) : json(r.estimates[i]);
      if (!r.efficacy.empty()) {
        d["efficacy"] = r.efficacy[i];
        d["success"] = r.success[i];
      }
      doses.push_back(std::move(d));
    }
    json j{{"session", id_},
           {"patients", history_.size()},
           {"session_stage", stage_name(stage())},
           {"target", design_.policy.target},
           {"model", to_string(design_.model.kind())},
           {"mtd_estimate", r.base_dose + 1},
           {"parameter", r.parameter ? json(*r.parameter) : json(nullptr)},
           {"doses", doses}};
    j["interval"] = r.interval ? json{{"dose", r.base_dose + 1},
                                      {"level", design_.policy.confidence_level},
                                      {"lower", r.interval->lower},
                                      {"upper", r.interval->upper}}
                               : json(nullptr);
    if (!r.model_weights.empty()) j["model_weights"] = r.model_weights;
    return j;
  }

  json summary_json() const {
    json recs = json::array();
    for (std::size_t g = 0; g < current_.size(); ++g) recs.push_back(recommendation_json(static_cast<int>(g)));
    return json{{"id", id_},
                {"name", design_.name},
                {"stage", stage_name(stage())},
                {"closed", closed_},
                {"patients", history_.size()},
                {"history", history_to_json(history_)},
                {"recommendations", recs},
                {"rng", {{"seed", rng_.seed()}, {"stream", rng_.stream()}, {"counter", rng_.counter()}}},
                {"events", events_.size()},
                {"design", design_.document}};
  }

 private:
  Session() = default;

  /// Two-stage designs grade every patient; an entry without a grade gets
  /// 4 for a toxicity and 0 otherwise.
  OutcomeEntry complete(OutcomeEntry e) const {
    if (design_.policy.escalation() && !e.record.grade) e.record.grade = e.record.toxicity == 1 ? 4 : 0;
    return e;
  }

  std::vector<Recommendation> recommend(const TrialHistory& h, RandomStream& rng) const {
    std::vector<Recommendation> out;
    const int groups = design_.policy.grouping ? 2 : 1;
    for (int g = 0; g < groups; ++g) out.push_back(next_dose(design_.policy, design_.model, h, rng, g));
    return out;
  }

  void refresh() {
    RandomStream rng = rng_;
    current_ = recommend(history_, rng);
    rng_ = rng;
    log_recommendation();
  }

  void log_recommendation() {
    json recs = json::array();
    for (std::size_t g = 0; g < current_.size(); ++g)
      recs.push_back(recommendation_to_json(current_[g], design_.policy));
    log({{"type", "recommendation_issued"},
         {"patients", history_.size()},
         {"recommendation", current_.size() == 1 ? recs[0] : recs}});
  }

  void log(json ev) {
    json e{{"seq", events_.size()}, {"time", session_detail::utc_now()}};
    e.update(ev);
    events_.push_back(std::move(e));
  }

  std::string id_;
  Design design_;
  TrialHistory history_;
  RandomStream rng_;
  std::vector<Recommendation> current_;
  std::vector<json> events_;
  bool closed_ = false;
};

/// Sessions on disk: <root>/<id>/events.jsonl (append-only, one event per
/// line) and <root>/<id>/snapshot.json. Writers to one session are
/// serialized; readers share.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
  }

  const std::filesystem::path& root() const noexcept { return root_; }

  json create(const json& design_document, std::string id = {}) {
    if (id.empty()) id = session_detail::fresh_id();
    Session s = Session::create(design_document, id);
    std::unique_lock registry(registry_mutex_);
    const auto dir = root_ / id;
    if (sessions_.count(id) || std::filesystem::exists(dir))
      throw Error(ErrorCode::InvalidConfig, "session '" + id + "' already exists");
    std::filesystem::create_directories(dir);
    append(dir, s.events());
    write_snapshot(dir, s);
    auto entry = std::make_shared<Entry>(std::move(s));
    const json out = entry->session.summary_json();
    sessions_.emplace(id, std::move(entry));
    return out;
  }

  /// Runs f with shared access to the session.
  template <class F>
  auto read(const std::string& id, F&& f) {
    auto e = entry(id);
    std::shared_lock lock(e->mutex);
    return f(static_cast<const Session&>(e->session));
  }

  json record_outcome(const std::string& id, const OutcomeEntry& outcome) {
    auto e = entry(id);
    std::unique_lock lock(e->mutex);
    Session copy = e->session;
    const auto written = copy.record_outcome(outcome);
    append(root_ / id, written);
    e->session = std::move(copy);
    write_snapshot(root_ / id, e->session);
    return e->session.recommendation_json(outcome.record.group.value_or(0));
  }

  json close(const std::string& id, const std::string& reason) {
    auto e = entry(id);
    std::unique_lock lock(e->mutex);
    Session copy = e->session;
    append(root_ / id, copy.close(reason));
    e->session = std::move(copy);
    write_snapshot(root_ / id, e->session);
    return e->session.summary_json();
  }

  std::vector<std::string> list() const {
    std::vector<std::string> ids;
    if (!std::filesystem::exists(root_)) return ids;
    for (const auto& d : std::filesystem::directory_iterator(root_))
      if (std::filesystem::exists(d.path() / "events.jsonl")) ids.push_back(d.path().filename().string());
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  /// Reads an event log, ignoring a torn final line.
  static std::vector<json> read_events(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + file.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);)
      if (!line.empty()) lines.push_back(line);
    std::vector<json> events;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      try {
        events.push_back(json::parse(lines[i]));
      } catch (const json::parse_error&) {
        if (i + 1 == lines.size()) break;
        throw Error(ErrorCode::Io, file.string() + ": malformed event on line " + std::to_string(i + 1));
      }
    }
    return events;
  }

 private:
  struct Entry {
    explicit Entry(Session s) : session(std::move(s)) {}
    std::shared_mutex mutex;
    Session session;
  };

  std::shared_ptr<Entry> entry(const std::string& id) {
    if (!session_detail::valid_id(id)) throw Error(ErrorCode::NotFound, "no session '" + id + "'");
    std::unique_lock registry(registry_mutex_);
    if (auto it = sessions_.find(id); it != sessions_.end()) return it->second;
    const auto file = root_ / id / "events.jsonl";
    if (!std::filesystem::exists(file)) throw Error(ErrorCode::NotFound, "no session '" + id + "'");
    Session s = Session::replay(read_events(file));
    write_snapshot(root_ / id, s);
    auto e = std::make_shared<Entry>(std::move(s));
    sessions_.emplace(id, e);
    return e;
  }

  static void append(const std::filesystem::path& dir, const std::vector<json>& events) {
    std::string batch;
    for (const auto& e : events) batch += e.dump() + "\n";
    std::ofstream out(dir / "events.jsonl", std::ios::app | std::ios::binary);
    out << batch;
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "cannot append to " + (dir / "events.jsonl").string());
  }

  static void write_snapshot(const std::filesystem::path& dir, const Session& s) {
    const auto tmp = dir / "snapshot.json.tmp";
    {
      std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
      out << s.summary_json().dump(2) << "\n";
      if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, dir / "snapshot.json");
  }

  std::filesystem::path root_;
  std::mutex registry_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

}  // namespace crm
