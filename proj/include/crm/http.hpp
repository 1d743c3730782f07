#pragma once

// JSON over HTTP for a SessionStore.

#include <string>

#include <httplib.h>

#include "crm/session.hpp"

namespace crm {

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::SessionClosed:
    case ErrorCode::ProtocolViolation: return 409;
    case ErrorCode::Io: return 500;
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidHistory:
    case ErrorCode::DoseOutOfRange:
    case ErrorCode::InvalidSkeleton:
    case ErrorCode::InvalidPrior:
    case ErrorCode::InvalidPolicy:
    case ErrorCode::MissingData: return 400;
    default: return 422;
  }
}

namespace http_detail {

inline void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("request body is not valid JSON: ") + e.what());
  }
}

inline int group_param(const httplib::Request& req) {
  if (!req.has_param("group")) return 0;
  const std::string g = req.get_param_value("group");
  if (g == "0") return 0;
  if (g == "1") return 1;
  throw Error(ErrorCode::InvalidHistory, "group must be 0 or 1");
}

/// An outcome body: a record plus optional "override" and "note".
inline OutcomeEntry parse_outcome(const json& body, std::size_t dose_count, const std::string& path) {
  if (!body.is_object()) throw Error(ErrorCode::InvalidConfig, path + ": expected an object");
  json record = body;
  OutcomeEntry e;
  if (record.contains("override")) {
    if (!record["override"].is_boolean()) throw Error(ErrorCode::InvalidConfig, path + ".override: expected true or false");
    e.override_dose = record["override"].get<bool>();
    record.erase("override");
  }
  if (record.contains("note")) {
    if (!record["note"].is_string()) throw Error(ErrorCode::InvalidConfig, path + ".note: expected a string");
    e.note = record["note"].get<std::string>();
    record.erase("note");
  }
  e.record = parse_record(record, dose_count, path);
  return e;
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    reply(res, http_status(e.code()), json{{"error", to_string(e.code())}, {"message", e.what()}});
  } catch (const std::exception& e) {
    reply(res, 500, json{{"error", "internal"}, {"message", e.what()}});
  }
}

}  // namespace http_detail

/// Registers the session routes on a server.
inline void mount_session_api(httplib::Server& server, SessionStore& store) {
  using namespace http_detail;
  const std::string id = R"(/sessions/([A-Za-z0-9_-]+))";

  server.Post("/sessions", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = parse_body(req);
      std::string sid;
      const json* design = &body;
      if (body.is_object() && body.contains("design")) {
        design = &body["design"];
        if (body.contains("id")) {
          if (!body["id"].is_string()) throw Error(ErrorCode::InvalidConfig, "id: expected a string");
          sid = body["id"].get<std::string>();
        }
      }
      reply(res, 201, store.create(*design, sid));
    });
  });

  server.Get("/sessions", [&store](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, json{{"sessions", store.list()}}); });
  });

  server.Get(id, [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, store.read(req.matches[1], [](const Session& s) { return s.summary_json(); })); });
  });

  server.Get(id + "/recommendation", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const int g = group_param(req);
      reply(res, 200, store.read(req.matches[1], [g](const Session& s) { return s.recommendation_json(g); }));
    });
  });

  server.Get(id + "/estimates", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const int g = group_param(req);
      reply(res, 200, store.read(req.matches[1], [g](const Session& s) { return s.estimates_json(g); }));
    });
  });

  server.Get(id + "/audit", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      reply(res, 200, store.read(req.matches[1], [](const Session& s) {
        return json{{"session", s.id()}, {"events", s.events()}};
      }));
    });
  });

  server.Post(id + "/outcomes", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string sid = req.matches[1];
      const json body = parse_body(req);
      const std::size_t k = store.read(sid, [](const Session& s) { return s.design().model.dose_count(); });
      reply(res, 200, store.record_outcome(sid, parse_outcome(body, k, "outcome")));
    });
  });

  server.Post(id + "/what-if", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = parse_body(req);
      const int g = group_param(req);
      reply(res, 200, store.read(req.matches[1], [&](const Session& s) {
        const std::size_t k = s.design().model.dose_count();
        std::vector<OutcomeEntry> outcomes;
        if (body.is_object() && body.contains("outcomes")) {
          const json& list = body["outcomes"];
          if (!list.is_array()) throw Error(ErrorCode::InvalidConfig, "outcomes: expected an array");
          for (std::size_t i = 0; i < list.size(); ++i)
            outcomes.push_back(parse_outcome(list[i], k, "outcomes[" + std::to_string(i) + "]"));
        } else {
          outcomes.push_back(parse_outcome(body, k, "outcome"));
        }
        const Recommendation r = s.what_if(outcomes, g);
        json out = recommendation_to_json(r, s.design().policy);
        out["session"] = s.id();
        out["patients"] = s.history().size() + outcomes.size();
        out["hypothetical"] = true;
        return out;
      }));
    });
  });

  server.Post(id + "/close", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = parse_body(req);
      const std::string reason = body.is_object() ? body.value("reason", std::string()) : std::string();
      reply(res, 200, store.close(req.matches[1], reason));
    });
  });
}

}  // namespace crm
