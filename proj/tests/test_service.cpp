#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "crm/http.hpp"
#include "crm/session.hpp"
#include "test_support.hpp"

namespace crm {
namespace {

namespace fs = std::filesystem;

json two_stage_doc() {
  return json::parse(R"({
    "name": "illustration",
    "skeleton": [0.04, 0.07, 0.20, 0.35, 0.55, 0.70],
    "model": "power-direct",
    "target": 0.2,
    "inference": {"mode": "likelihood-two-stage", "cohort_size": 3},
    "seed": 5
  })");
}

json partition_doc() {
  return json::parse(R"({
    "skeleton": [0.04, 0.07, 0.20, 0.35, 0.55, 0.70],
    "model": "power-exp",
    "target": 0.2,
    "inference": {"mode": "bayes", "prior": {"kind": "partition", "mass": [0.05, 0.19, 0.19, 0.19, 0.19, 0.19]}}
  })");
}

json randomized_doc() {
  json d = two_stage_doc();
  d["inference"] = json{{"mode", "bayes"}, {"prior", {{"kind", "gamma"}, {"lambda", 1}, {"shape", 1}}}};
  d["randomize"] = json{{"delta_prob", 0.5}};
  d["no_skip"] = false;
  return d;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> n{0};
    path_ = fs::temp_directory_path() / ("crm_test_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
    fs::remove_all(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

OutcomeEntry outcome(DoseIndex dose, int y, bool override_dose = false) {
  return {testing::rec(dose, y), override_dose, {}};
}

std::string error_of(const std::function<void()>& f, ErrorCode* code = nullptr) {
  try {
    f();
  } catch (const Error& e) {
    if (code) *code = e.code();
    return e.what();
  }
  return {};
}

// ---- configuration ----------------------------------------------------

TEST(Config, ParsesTwoStageDesign) {
  const Design d = parse_design(two_stage_doc());
  EXPECT_EQ(d.name, "illustration");
  EXPECT_EQ(d.model.kind(), ModelKind::PowerDirect);
  EXPECT_EQ(d.model.dose_count(), 6u);
  ASSERT_NE(d.policy.escalation(), nullptr);
  EXPECT_EQ(d.policy.escalation()->cohort_size, 3u);
  EXPECT_EQ(d.seed, 5u);
  EXPECT_EQ(d.model.skeleton().labels()[3], "d4");
}

TEST(Config, FieldLevelErrors) {
  struct Case {
    const char* pointer;
    json value;
    const char* field;
  };
  const std::vector<Case> cases{
      {"/skeleton", json::array({0.3, 0.2}), "design.skeleton"},
      {"/skeleton", "x", "design.skeleton"},
      {"/target", 1.5, "design"},
      {"/model", "probit", "design.model"},
      {"/inference/mode", "frequentist", "design.inference.mode"},
      {"/inference/cohort_size", 0, "design.inference.cohort_size"},
      {"/tie_break", "middle", "design.tie_break"},
      {"/distance", json{{"over_weight", 0.5}}, "design"},
      {"/colour", "blue", "design.colour"},
  };
  for (const auto& c : cases) {
    json doc = two_stage_doc();
    doc[json::json_pointer(c.pointer)] = c.value;
    ErrorCode code{};
    const std::string msg = error_of([&] { parse_design(doc); }, &code);
    EXPECT_EQ(code, ErrorCode::InvalidConfig) << c.pointer;
    EXPECT_EQ(msg.rfind(c.field, 0), 0u) << c.pointer << ": " << msg;
  }
  json doc = two_stage_doc();
  doc.erase("target");
  EXPECT_NE(error_of([&] { parse_design(doc); }).find("design.target: required"), std::string::npos);
  json bad_prior = partition_doc();
  bad_prior["inference"]["prior"]["mass"] = json::array({0.5, 0.5});
  EXPECT_NE(error_of([&] { parse_design(bad_prior); }).find("partition prior needs one mass per dose"), std::string::npos);
}

TEST(Config, InfiniteOverWeightAndStringInfinity) {
  json doc = two_stage_doc();
  doc["distance"] = json{{"over_weight", "inf"}};
  EXPECT_TRUE(std::isinf(parse_design(doc).policy.distance.over_weight));
}

TEST(Config, PriorsRoundTrip) {
  const std::vector<PriorSpec> priors{NoPrior{}, GammaPrior{2.0, 3.5}, NormalPrior{0.25, 1.34 * 1.34},
                                      PseudoDataPrior{testing::illustration_first_nine(), 0.3},
                                      PartitionPrior{{0.05, 0.19, 0.19, 0.19, 0.19, 0.19}, 0.0, Bounds{-5.0, 5.0}}};
  for (const auto& p : priors) {
    const json j = json::parse(prior_to_json(p).dump());
    EXPECT_EQ(parse_prior(j, 6), p) << j.dump();
  }
}

TEST(Config, RecordsAreOneBasedOnTheWire) {
  const PatientRecord r = parse_record(json{{"dose", 3}, {"toxicity", 1}, {"grade", 4}}, 6);
  EXPECT_EQ(r.dose, 2u);
  EXPECT_EQ(record_to_json(r), (json{{"dose", 3}, {"toxicity", 1}, {"grade", 4}}));
  EXPECT_NE(error_of([] { parse_record(json{{"dose", 0}, {"toxicity", 0}}, 6); }).find("record.dose"), std::string::npos);
  EXPECT_NE(error_of([] { parse_record(json{{"dose", 7}, {"toxicity", 0}}, 6); }).find("record.dose"), std::string::npos);
  EXPECT_NE(error_of([] { parse_record(json{{"dose", 1}, {"toxicity", 2}}, 6); }).find("toxicity must be 0 or 1"),
            std::string::npos);
}

TEST(Config, DoublesSurviveTextExactly) {
  for (double x : {0.1, 1.0 / 3.0, 0.21271501104856405, 1e-300, 123456.789012345}) {
    const double back = json::parse(json(x).dump()).get<double>();
    EXPECT_EQ(back, x);
  }
}

TEST(Config, ScenarioBankAndDefaultSampleSize) {
  const json bank = json::parse(R"({"scenarios": [
    {"name": "a", "true_tox": [0.03, 0.22, 0.45, 0.60, 0.80, 0.95]},
    {"true_tox": [0.01, 0.02, 0.03, 0.04, 0.05, 0.06], "n": 9, "true_resp": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]}]})");
  const auto s = parse_scenarios(bank, 6, 30);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].name, "a");
  EXPECT_EQ(s[0].n, 30u);
  EXPECT_EQ(s[1].name, "scenario2");
  EXPECT_EQ(s[1].n, 9u);
  EXPECT_TRUE(s[1].true_resp.has_value());
  const json bad = json::parse(R"({"true_tox": [0.3, 0.2, 0.4, 0.5, 0.6, 0.7]})");
  EXPECT_EQ(error_of([&] { parse_scenarios(bad, 6); }).rfind("scenario:", 0), 0u);
}

TEST(Config, OperatingCharacteristicsReports) {
  const Design d = parse_design(two_stage_doc());
  Scenario s;
  s.name = "illustration";
  s.true_tox = testing::kIllustrationTruth;
  const auto oc = operating_characteristics(d.policy, d.model, s, 40, 3);
  const json j = json::parse(oc_to_json(oc, s).dump());
  EXPECT_EQ(j["recommendation_dist"].get<std::vector<double>>(), oc.recommendation_dist);
  EXPECT_EQ(j["true_mtd"], 2);
  const std::string csv = oc_to_csv(oc, s, d.model);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "scenario,level,label,true_tox,recommendation,allocation");
}

TEST(Config, PartitionExports) {
  const Design d = parse_design(two_stage_doc());
  const auto p = compute_partition(d.model, 0.2);
  const json j = partition_to_json(p, d.model);
  EXPECT_EQ(j["kappas"].get<std::vector<double>>(), p.kappas);
  EXPECT_EQ(j["intervals"].size(), 6u);
  const std::string tsv = partition_to_tsv(p, d.model);
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 7);
}

// ---- sessions ---------------------------------------------------------

TEST(Session, TwoStageStartsAtLowestLevel) {
  const Session s = Session::create(two_stage_doc(), "a");
  EXPECT_EQ(s.recommendation().dose, 0u);
  EXPECT_EQ(s.stage(), Stage::StageOne);
  EXPECT_EQ(s.events().size(), 2u);
}

TEST(Session, PartitionPriorStartsAtPriorMode) {
  const Session s = Session::create(partition_doc(), "b");
  const std::vector<double> mass{0.05, 0.19, 0.19, 0.19, 0.19, 0.19};
  const auto mode = static_cast<DoseIndex>(std::max_element(mass.begin(), mass.end()) - mass.begin());
  EXPECT_EQ(s.recommendation().dose, mode);
  EXPECT_EQ(s.stage(), Stage::ModelBased);
}

TEST(Session, InvalidSkeletonRejected) {
  json doc = two_stage_doc();
  doc["skeleton"] = json::array({0.04, 0.2, 0.07, 0.35, 0.55, 0.70});
  EXPECT_THROW(Session::create(doc, "c"), Error);
  EXPECT_THROW(Session::create(two_stage_doc(), "bad id"), Error);
}

TEST(Session, IllustrationSixteenOutcomes) {
  Session s = Session::create(two_stage_doc(), "x");
  const TrialHistory full = testing::illustration_full();
  const std::vector<DoseIndex> next{0, 0, 1, 1, 1, 2, 2, 2, 1, 1, 1, 1, 1, 1, 1, 1};
  std::vector<Stage> stages;
  for (std::size_t j = 0; j < full.size(); ++j) {
    ASSERT_EQ(s.recommendation().dose, full[j].dose) << "before patient " << j + 1;
    s.record_outcome({full[j], false, {}});
    EXPECT_EQ(s.recommendation().dose, next[j]) << "after patient " << j + 1;
    stages.push_back(s.stage());
  }
  for (std::size_t j = 1; j < stages.size(); ++j) EXPECT_GE(static_cast<int>(stages[j]), static_cast<int>(stages[j - 1]));
  EXPECT_EQ(stages[7], Stage::StageOne);
  EXPECT_EQ(stages[8], Stage::ModelBased);
  const auto& r = s.recommendation();
  EXPECT_EQ(r.dose, 1u);
  EXPECT_NEAR(r.estimates[1], 0.212, 1e-3);
  std::size_t outcome_events = 0;
  for (const auto& e : s.events()) outcome_events += e["type"] == "outcome_entered";
  EXPECT_EQ(outcome_events, s.history().size());
}

TEST(Session, ProtocolGuardAndOverride) {
  Session s = Session::create(two_stage_doc(), "g");
  ErrorCode code{};
  error_of([&] { s.record_outcome(outcome(2, 0)); }, &code);
  EXPECT_EQ(code, ErrorCode::ProtocolViolation);
  EXPECT_EQ(s.history().size(), 0u);
  EXPECT_EQ(s.events().size(), 2u);
  const auto written = s.record_outcome(outcome(2, 0, true));
  ASSERT_EQ(written.size(), 3u);
  EXPECT_EQ(written[0]["type"], "override_recorded");
  EXPECT_EQ(written[0]["recommended_dose"], 1);
  EXPECT_EQ(written[0]["administered_dose"], 3);
  EXPECT_EQ(written[1]["type"], "outcome_entered");
  EXPECT_EQ(written[2]["type"], "recommendation_issued");
  EXPECT_EQ(s.history().size(), 1u);
}

TEST(Session, WhatIfIsPure) {
  Session s = Session::create(two_stage_doc(), "w");
  const TrialHistory nine = testing::illustration_first_nine();
  for (const auto& r : nine.records()) s.record_outcome({r, false, {}});
  const auto history = s.history();
  const auto events = s.events().size();
  const Recommendation a = s.what_if({outcome(1, 0)});
  const Recommendation b = s.what_if({outcome(1, 0)});
  EXPECT_EQ(s.history(), history);
  EXPECT_EQ(s.events().size(), events);
  EXPECT_EQ(recommendation_to_json(a, s.design().policy), recommendation_to_json(b, s.design().policy));
  ASSERT_TRUE(a.parameter.has_value());
  EXPECT_NEAR(*a.parameter, 0.759, 1e-3);
  s.record_outcome(outcome(1, 0));
  EXPECT_EQ(recommendation_to_json(s.recommendation(), s.design().policy), recommendation_to_json(a, s.design().policy));
}

TEST(Session, WhatIfCohortChainsRecommendations) {
  Session s = Session::create(two_stage_doc(), "wc");
  const Recommendation r = s.what_if({outcome(0, 0), outcome(0, 0), outcome(0, 0)});
  EXPECT_EQ(r.dose, 1u);
  EXPECT_THROW(s.what_if({outcome(0, 0), outcome(1, 0)}), Error);
  EXPECT_EQ(s.history().size(), 0u);
}

TEST(Session, ClosedSessionRejectsChanges) {
  Session s = Session::create(two_stage_doc(), "cl");
  s.record_outcome(outcome(0, 0));
  s.close("done");
  EXPECT_EQ(s.stage(), Stage::Closed);
  ErrorCode code{};
  error_of([&] { s.record_outcome(outcome(0, 0)); }, &code);
  EXPECT_EQ(code, ErrorCode::SessionClosed);
  EXPECT_THROW(s.what_if({outcome(0, 0)}), Error);
  EXPECT_THROW(s.close("again"), Error);
}

TEST(Session, MissingGradeFilledFromToxicity) {
  Session s = Session::create(two_stage_doc(), "mg");
  s.record_outcome(outcome(0, 0));
  EXPECT_EQ(s.history()[0].grade, 0);
  const auto& e = s.events()[s.events().size() - 2];
  EXPECT_EQ(e["record"]["grade"], 0);
}

TEST(Session, RandomStreamAdvancesOnlyOnRecord) {
  Session s = Session::create(randomized_doc(), "r");
  std::vector<DoseIndex> doses;
  for (int j = 0; j < 8; ++j) {
    const auto before = s.rng();
    const DoseIndex d = s.recommendation().dose;
    s.what_if({outcome(d, j == 3 ? 1 : 0)});
    EXPECT_EQ(s.rng(), before);
    s.record_outcome(outcome(d, j == 3 ? 1 : 0));
    doses.push_back(d);
  }
  EXPECT_GT(s.rng().counter(), 0u);
  const Session again = Session::replay(s.events());
  EXPECT_EQ(again.rng(), s.rng());
  EXPECT_EQ(again.history(), s.history());
  EXPECT_EQ(again.recommendation_json().dump(), s.recommendation_json().dump());
}

// ---- persistence ------------------------------------------------------

void enter_illustration(SessionStore& store, const std::string& id) {
  const TrialHistory h = testing::illustration_full();
  for (const auto& r : h.records()) store.record_outcome(id, {r, false, {}});
}

TEST(Store, ReloadReproducesPayloadsByteForByte) {
  TempDir dir;
  std::string estimates, recommendation, summary;
  {
    SessionStore store(dir.path());
    store.create(two_stage_doc(), "trial");
    enter_illustration(store, "trial");
    store.read("trial", [&](const Session& s) {
      estimates = s.estimates_json().dump();
      recommendation = s.recommendation_json().dump();
      summary = s.summary_json().dump();
      return 0;
    });
  }
  EXPECT_TRUE(fs::exists(dir.path() / "trial" / "events.jsonl"));
  EXPECT_TRUE(fs::exists(dir.path() / "trial" / "snapshot.json"));
  SessionStore reloaded(dir.path());
  reloaded.read("trial", [&](const Session& s) {
    EXPECT_EQ(s.estimates_json().dump(), estimates);
    EXPECT_EQ(s.recommendation_json().dump(), recommendation);
    EXPECT_EQ(s.summary_json().dump(), summary);
    return 0;
  });
  std::ifstream snap(dir.path() / "trial" / "snapshot.json");
  EXPECT_EQ(json::parse(snap).dump(), summary);
}

TEST(Store, TornFinalLineIsIgnored) {
  TempDir dir;
  {
    SessionStore store(dir.path());
    store.create(two_stage_doc(), "t");
    store.record_outcome("t", outcome(0, 0));
  }
  {
    std::ofstream out(dir.path() / "t" / "events.jsonl", std::ios::app);
    out << R"({"seq": 5, "type": "outcome_ent)";
  }
  SessionStore store(dir.path());
  EXPECT_EQ(store.read("t", [](const Session& s) { return s.history().size(); }), 1u);
}

TEST(Store, TamperedLogIsDetected) {
  TempDir dir;
  {
    SessionStore store(dir.path());
    store.create(two_stage_doc(), "t");
    store.record_outcome("t", outcome(0, 0));
  }
  const auto file = dir.path() / "t" / "events.jsonl";
  auto events = SessionStore::read_events(file);
  events.back()["recommendation"]["dose"] = 4;
  {
    std::ofstream out(file, std::ios::trunc);
    for (const auto& e : events) out << e.dump() << "\n";
  }
  SessionStore store(dir.path());
  ErrorCode code{};
  error_of([&] { store.read("t", [](const Session& s) { return s.history().size(); }); }, &code);
  EXPECT_EQ(code, ErrorCode::Io);
}

TEST(Store, DuplicateAndUnknownIds) {
  TempDir dir;
  SessionStore store(dir.path());
  store.create(two_stage_doc(), "one");
  EXPECT_THROW(store.create(two_stage_doc(), "one"), Error);
  ErrorCode code{};
  error_of([&] { store.read("two", [](const Session&) { return 0; }); }, &code);
  EXPECT_EQ(code, ErrorCode::NotFound);
  EXPECT_EQ(store.list(), std::vector<std::string>{"one"});
  const json fresh = store.create(two_stage_doc());
  EXPECT_FALSE(fresh["id"].get<std::string>().empty());
}

TEST(Store, ConcurrentWritersToOneSessionAreSerialized) {
  TempDir dir;
  SessionStore store(dir.path());
  json doc = two_stage_doc();
  doc["inference"]["cohort_size"] = 1;
  store.create(doc, "c");
  std::atomic<int> ok{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < 8; ++t)
    pool.emplace_back([&] {
      for (int i = 0; i < 5; ++i) {
        try {
          store.record_outcome("c", outcome(0, 0, true));
          ++ok;
        } catch (const Error&) {
        }
        store.read("c", [](const Session& s) { return s.estimates_json(); });
      }
    });
  for (auto& th : pool) th.join();
  EXPECT_EQ(ok.load(), 40);
  SessionStore reloaded(dir.path());
  EXPECT_EQ(reloaded.read("c", [](const Session& s) { return s.history().size(); }), 40u);
}

// ---- HTTP -------------------------------------------------------------

class Http : public ::testing::Test {
 protected:
  void SetUp() override {
    store_ = std::make_unique<SessionStore>(dir_.path());
    mount_session_api(server_, *store_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

  TempDir dir_;
  std::unique_ptr<SessionStore> store_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

json body_of(const httplib::Result& r) { return json::parse(r->body); }

TEST_F(Http, ConductIllustrationTrial) {
  auto c = client();
  auto created = c.Post("/sessions", json{{"id", "h1"}, {"design", two_stage_doc()}}.dump(), "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  EXPECT_EQ(body_of(created)["recommendations"][0]["dose"], 1);

  const TrialHistory nine = testing::illustration_first_nine();
  for (const auto& r : nine.records()) {
    auto res = c.Post("/sessions/h1/outcomes", record_to_json(r).dump(), "application/json");
    ASSERT_EQ(res->status, 200) << res->body;
  }
  auto wi = c.Post("/sessions/h1/what-if", json{{"dose", 2}, {"toxicity", 0}}.dump(), "application/json");
  ASSERT_EQ(wi->status, 200) << wi->body;
  EXPECT_NEAR(body_of(wi)["parameter"].get<double>(), 0.759, 1e-3);
  EXPECT_EQ(body_of(c.Get("/sessions/h1"))["patients"], 9);

  const auto late = testing::illustration_full();
  for (std::size_t j = 9; j < late.size(); ++j)
    ASSERT_EQ(c.Post("/sessions/h1/outcomes", record_to_json(late[j]).dump(), "application/json")->status, 200);
  const json est = body_of(c.Get("/sessions/h1/estimates"));
  EXPECT_EQ(est["mtd_estimate"], 2);
  EXPECT_NEAR(est["doses"][1]["estimate"].get<double>(), 0.212, 1e-3);
  EXPECT_EQ(est["interval"]["dose"], 2);
  const json rec = body_of(c.Get("/sessions/h1/recommendation"));
  EXPECT_EQ(rec["dose"], 2);
  const json audit = body_of(c.Get("/sessions/h1/audit"));
  EXPECT_EQ(audit["events"].size(), 2u + 2u * 16u);

  const std::string est_bytes = c.Get("/sessions/h1/estimates")->body;
  const std::string rec_bytes = c.Get("/sessions/h1/recommendation")->body;
  SessionStore reloaded(dir_.path());
  EXPECT_EQ(reloaded.read("h1", [](const Session& s) { return s.estimates_json().dump(); }), est_bytes);
  EXPECT_EQ(reloaded.read("h1", [](const Session& s) { return s.recommendation_json().dump(); }), rec_bytes);
}

TEST_F(Http, ErrorsCarryStatusAndCode) {
  auto c = client();
  json bad = two_stage_doc();
  bad["skeleton"] = json::array({0.5, 0.4});
  auto r = c.Post("/sessions", bad.dump(), "application/json");
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(body_of(r)["error"], "invalid_config");
  EXPECT_EQ(body_of(r)["message"].get<std::string>().rfind("design.skeleton", 0), 0u);

  EXPECT_EQ(c.Post("/sessions", "{not json", "application/json")->status, 400);
  EXPECT_EQ(c.Get("/sessions/nope")->status, 404);

  ASSERT_EQ(c.Post("/sessions", json{{"id", "e"}, {"design", two_stage_doc()}}.dump(), "application/json")->status, 201);
  auto off = c.Post("/sessions/e/outcomes", json{{"dose", 3}, {"toxicity", 0}}.dump(), "application/json");
  EXPECT_EQ(off->status, 409);
  EXPECT_EQ(body_of(off)["error"], "protocol_violation");
  auto ovr = c.Post("/sessions/e/outcomes", json{{"dose", 3}, {"toxicity", 0}, {"override", true}}.dump(),
                    "application/json");
  EXPECT_EQ(ovr->status, 200);
  auto malformed = c.Post("/sessions/e/outcomes", json{{"dose", 1}}.dump(), "application/json");
  EXPECT_EQ(malformed->status, 400);
  EXPECT_NE(body_of(malformed)["message"].get<std::string>().find("outcome.toxicity"), std::string::npos);
  EXPECT_EQ(c.Post("/sessions/e/close", json{{"reason", "end"}}.dump(), "application/json")->status, 200);
  EXPECT_EQ(c.Post("/sessions/e/outcomes", json{{"dose", 1}, {"toxicity", 0}}.dump(), "application/json")->status, 409);
  EXPECT_EQ(body_of(c.Get("/sessions/e"))["stage"], "closed");
}

TEST_F(Http, WhatIfDoesNotTouchTheLog) {
  auto c = client();
  ASSERT_EQ(c.Post("/sessions", json{{"id", "p"}, {"design", two_stage_doc()}}.dump(), "application/json")->status, 201);
  const std::string before = c.Get("/sessions/p/audit")->body;
  const json cohort{{"outcomes", json::array({json{{"dose", 1}, {"toxicity", 0}}, json{{"dose", 1}, {"toxicity", 0}},
                                             json{{"dose", 1}, {"toxicity", 0}}})}};
  auto a = c.Post("/sessions/p/what-if", cohort.dump(), "application/json");
  auto b = c.Post("/sessions/p/what-if", cohort.dump(), "application/json");
  ASSERT_EQ(a->status, 200) << a->body;
  EXPECT_EQ(a->body, b->body);
  EXPECT_EQ(body_of(a)["dose"], 2);
  EXPECT_EQ(c.Get("/sessions/p/audit")->body, before);
}

}  // namespace
}  // namespace crm
