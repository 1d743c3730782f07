#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "crm/http.hpp"
#include "crm/session.hpp"
#include "crm/simulator.hpp"

namespace fs = std::filesystem;
using crm::json;

namespace {

json read_json(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw crm::Error(crm::ErrorCode::Io, "cannot read " + file);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw crm::Error(crm::ErrorCode::InvalidConfig, file + ": " + e.what());
  }
}

void write_file(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::trunc | std::ios::binary);
  out << text;
  if (!out) throw crm::Error(crm::ErrorCode::Io, "cannot write " + file.string());
}

struct OutcomeArgs {
  int dose = 0;
  int toxicity = 0;
  std::optional<int> grade, group, response;
  bool override_dose = false;
  std::string note;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--dose", dose, "dose level (1-based)")->required();
    cmd->add_option("--toxicity,-y", toxicity, "1 for a dose-limiting toxicity")->required();
    cmd->add_option("--grade", grade, "toxicity grade 0..4");
    cmd->add_option("--group", group, "patient group 0 or 1");
    cmd->add_option("--response", response, "efficacy response 0 or 1");
    cmd->add_flag("--override", override_dose, "record even if the dose differs from the recommendation");
    cmd->add_option("--note", note, "free-text note for the audit log");
  }

  crm::OutcomeEntry entry(std::size_t k) const {
    json r{{"dose", dose}, {"toxicity", toxicity}};
    if (grade) r["grade"] = *grade;
    if (group) r["group"] = *group;
    if (response) r["response"] = *response;
    return {crm::parse_record(r, k, "outcome"), override_dose, note};
  }
};

int simulate(const std::string& design_file, const std::string& scenario_file, std::size_t replicates,
             std::uint64_t seed, const std::string& out_dir, std::size_t threads) {
  const crm::Design d = crm::parse_design(read_json(design_file));
  const auto scenarios = crm::parse_scenarios(read_json(scenario_file), d.model.dose_count(), d.sample_size);
  fs::create_directories(out_dir);
  crm::SimulationOptions options;
  options.threads = threads;
  json index = json::array();
  for (const auto& s : scenarios) {
    const auto oc = crm::operating_characteristics(d.policy, d.model, s, replicates, seed, options);
    json report = crm::oc_to_json(oc, s);
    report["design"] = d.name;
    report["base_seed"] = seed;
    write_file(fs::path(out_dir) / (s.name + ".json"), report.dump(2) + "\n");
    write_file(fs::path(out_dir) / (s.name + ".csv"), crm::oc_to_csv(oc, s, d.model));
    index.push_back(report);
    std::cerr << s.name << ": recommendation";
    for (double p : oc.recommendation_dist) std::cerr << ' ' << p;
    std::cerr << '\n';
  }
  write_file(fs::path(out_dir) / "summary.json", json{{"reports", index}}.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual reassessment method: trial sessions, simulation, partitions"};
  app.require_subcommand(1);

  std::string data_dir = "crm-data";
  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "run the HTTP session service");
  serve->add_option("--port", port);
  serve->add_option("--host", host);
  serve->add_option("--data", data_dir, "directory holding session event logs");

  auto* session = app.add_subcommand("session", "work with persisted sessions directly");
  session->require_subcommand(1);
  std::string design_file, session_id, reason;
  auto* s_new = session->add_subcommand("new", "create a session from a design file");
  s_new->add_option("--data", data_dir);
  s_new->add_option("--design", design_file)->required()->check(CLI::ExistingFile);
  s_new->add_option("--id", session_id);
  auto* s_show = session->add_subcommand("show", "print a session");
  s_show->add_option("--data", data_dir);
  s_show->add_option("--id", session_id)->required();
  OutcomeArgs outcome;
  auto* s_outcome = session->add_subcommand("outcome", "record a patient outcome");
  s_outcome->add_option("--data", data_dir);
  s_outcome->add_option("--id", session_id)->required();
  outcome.add_to(s_outcome);
  auto* s_what_if = session->add_subcommand("what-if", "recommendation after a hypothetical outcome");
  s_what_if->add_option("--data", data_dir);
  s_what_if->add_option("--id", session_id)->required();
  outcome.add_to(s_what_if);
  auto* s_close = session->add_subcommand("close", "close a session");
  s_close->add_option("--data", data_dir);
  s_close->add_option("--id", session_id)->required();
  s_close->add_option("--reason", reason);

  std::string scenario_file, out_dir;
  std::size_t replicates = 1000, threads = 1;
  std::uint64_t seed = 1;
  auto* sim = app.add_subcommand("simulate", "operating characteristics by simulation");
  sim->add_option("--design", design_file)->required()->check(CLI::ExistingFile);
  sim->add_option("--scenario", scenario_file)->required()->check(CLI::ExistingFile);
  sim->add_option("--replicates", replicates);
  sim->add_option("--seed", seed, "base seed; replicate r uses seed + r");
  sim->add_option("--out", out_dir)->required();
  sim->add_option("--threads", threads);

  std::string format = "json";
  auto* part = app.add_subcommand("partition", "parameter intervals in which each dose is recommended");
  part->add_option("--design", design_file)->required()->check(CLI::ExistingFile);
  part->add_option("--format", format)->check(CLI::IsMember({"json", "tsv"}));
  part->add_option("--scenario", scenario_file, "also check consistency against a true curve")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      crm::SessionStore store(data_dir);
      httplib::Server server;
      crm::mount_session_api(server, store);
      std::cerr << "listening on " << host << ':' << port << ", data in " << data_dir << '\n';
      if (!server.listen(host, port)) {
        std::cerr << "cannot listen on " << host << ':' << port << '\n';
        return 1;
      }
      return 0;
    }
    if (*session) {
      crm::SessionStore store(data_dir);
      if (*s_new) {
        std::cout << store.create(read_json(design_file), session_id).dump(2) << '\n';
      } else if (*s_show) {
        std::cout << store.read(session_id, [](const crm::Session& s) { return s.summary_json(); }).dump(2) << '\n';
      } else if (*s_outcome) {
        const auto k = store.read(session_id, [](const crm::Session& s) { return s.design().model.dose_count(); });
        std::cout << store.record_outcome(session_id, outcome.entry(k)).dump(2) << '\n';
      } else if (*s_what_if) {
        const json r = store.read(session_id, [&](const crm::Session& s) {
          const auto e = outcome.entry(s.design().model.dose_count());
          json j = crm::recommendation_to_json(s.what_if({e}, e.record.group.value_or(0)), s.design().policy);
          j["hypothetical"] = true;
          return j;
        });
        std::cout << r.dump(2) << '\n';
      } else if (*s_close) {
        std::cout << store.close(session_id, reason).dump(2) << '\n';
      }
      return 0;
    }
    if (*sim) return simulate(design_file, scenario_file, replicates, seed, out_dir, threads);
    if (*part) {
      const crm::Design d = crm::parse_design(read_json(design_file));
      const auto p = crm::compute_partition(d.model, d.policy.target);
      if (format == "tsv") {
        std::cout << crm::partition_to_tsv(p, d.model);
        return 0;
      }
      json out = crm::partition_to_json(p, d.model);
      if (!scenario_file.empty()) {
        const auto scenarios = crm::parse_scenarios(read_json(scenario_file), d.model.dose_count());
        json reports = json::array();
        for (const auto& s : scenarios) {
          json r = crm::consistency_to_json(crm::check_consistency(d.model, s.true_tox, d.policy.target));
          r["scenario"] = s.name;
          reports.push_back(r);
        }
        out["consistency"] = reports;
      }
      std::cout << out.dump(2) << '\n';
    }
    return 0;
  } catch (const crm::Error& e) {
    std::cerr << "error (" << crm::to_string(e.code()) << "): " << e.what() << '\n';
    return 2;
  }
}
