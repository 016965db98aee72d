#pragma once

// JSON-over-HTTP front of AnnotationService.
//
//   GET  /api/scheme
//   GET  /api/samples/:id/next?annotator=
//   POST /api/samples/:id/labels        {"post_id", "class_id"}
//   GET  /api/samples/:id/agreement
//   GET  /api/samples/:id/export.csv    (resolution phase only)
//   POST /api/samples/:id/phase         {"phase": "annotation" | "resolution"}
//   POST /api/samples/:id/resolutions   {"post_id", "class_id"}
//
// Every /api/samples route needs "Authorization: Bearer <token>".

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "forumstrat/annotation.hpp"
#include "forumstrat/error.hpp"

namespace forumstrat {

/// token -> annotator id, from {"annotators": {"<id>": "<token>", ...}}.
class TokenTable {
 public:
  TokenTable() = default;

  static TokenTable from_json(const nlohmann::json& j) {
    TokenTable t;
    try {
      for (auto it = j.at("annotators").begin(); it != j.at("annotators").end(); ++it) {
        const auto token = it.value().get<std::string>();
        if (token.empty()) throw ValidationError("annotator '" + it.key() + "' has an empty token");
        if (!t.by_token_.emplace(token, it.key()).second) {
          throw ValidationError("token of annotator '" + it.key() + "' is not unique");
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("annotator config: ") + e.what());
    }
    return t;
  }

  static TokenTable from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open annotator config '" + path + "'");
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("annotator config '" + path + "': " + e.what());
    }
  }

  std::optional<std::string> annotator(const std::string& token) const {
    auto it = by_token_.find(token);
    if (it == by_token_.end()) return std::nullopt;
    return it->second;
  }

  std::set<std::string> annotators() const {
    std::set<std::string> out;
    for (const auto& [t, a] : by_token_) out.insert(a);
    return out;
  }

 private:
  std::map<std::string, std::string> by_token_;
};

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

inline int status_of(const Error& e) {
  if (dynamic_cast<const PhaseError*>(&e)) return 409;
  if (dynamic_cast<const InsufficientOverlap*>(&e)) return 409;
  switch (e.kind()) {
    case ErrorKind::Validation: return 400;
    case ErrorKind::NotFound: return 404;
    case ErrorKind::Data: return 500;
    case ErrorKind::Infeasible: return 422;
  }
  return 500;
}

inline nlohmann::json scheme_json(const CodingScheme& s) {
  nlohmann::json cls = nlohmann::json::array();
  for (const auto& c : s.classes()) {
    cls.push_back({{"id", c.id}, {"name", c.name}, {"description", c.description}, {"example", c.example}});
  }
  return {{"classes", cls}, {"merge_map", s.merge_map()}};
}

}  // namespace detail

/// Registers the API on `server`. When `ui_dir` is non-empty it is served
/// at "/".
inline void mount_annotation_api(httplib::Server& server, AnnotationService& service, const TokenTable& tokens,
                                 const std::string& ui_dir = {}) {
  // Runs `body` with the caller's annotator id, mapping errors to statuses.
  auto guarded = [&service, &tokens](auto body) {
    return [&service, &tokens, body](const httplib::Request& req, httplib::Response& res) {
      const auto auth = req.get_header_value("Authorization");
      const std::string prefix = "Bearer ";
      if (auth.rfind(prefix, 0) != 0) return detail::send_error(res, 401, "missing bearer token");
      const auto who = tokens.annotator(auth.substr(prefix.size()));
      if (!who) return detail::send_error(res, 401, "unknown token");
      try {
        body(req, res, *who, service);
      } catch (const Error& e) {
        detail::send_error(res, detail::status_of(e), e.what());
      } catch (const nlohmann::json::exception& e) {
        detail::send_error(res, 400, std::string("bad request body: ") + e.what());
      }
    };
  };

  server.Get("/api/scheme", [&service](const httplib::Request&, httplib::Response& res) {
    detail::send_json(res, 200, detail::scheme_json(service.scheme()));
  });

  server.Get("/api/samples/:id/next",
             guarded([](const httplib::Request& req, httplib::Response& res, const std::string& who,
                        AnnotationService& svc) {
               const auto& sid = req.path_params.at("id");
               const auto asked = req.get_param_value("annotator");
               if (!asked.empty() && asked != who) {
                 return detail::send_error(res, 403, "token does not belong to annotator '" + asked + "'");
               }
               nlohmann::json body{{"sample_id", sid}, {"annotator", who},
                                   {"phase", to_string(svc.phase(sid))},
                                   {"scheme", detail::scheme_json(svc.scheme())}};
               const auto [labeled, total] = svc.progress(sid, who);
               body["progress"] = {{"labeled", labeled}, {"total", total}};
               if (auto next = svc.next_unlabeled(sid, who)) {
                 body["done"] = false;
                 body["post"] = {{"ordinal", next->ordinal},
                                 {"post_id", next->post.post_id},
                                 {"content", next->post.content},
                                 {"thread_title", next->post.thread_title},
                                 {"board", next->post.board}};
               } else {
                 body["done"] = true;
                 body["post"] = nullptr;
               }
               detail::send_json(res, 200, body);
             }));

  server.Post("/api/samples/:id/labels",
              guarded([](const httplib::Request& req, httplib::Response& res, const std::string& who,
                         AnnotationService& svc) {
                const auto j = nlohmann::json::parse(req.body);
                if (j.contains("annotator") && j.at("annotator").get<std::string>() != who) {
                  return detail::send_error(res, 403, "token does not belong to the named annotator");
                }
                const auto sid = req.path_params.at("id");
                const auto pid = j.at("post_id").get<std::string>();
                const auto st = svc.submit_label(sid, who, pid, j.at("class_id").get<std::string>());
                const auto [labeled, total] = svc.progress(sid, who);
                detail::send_json(res, st == SubmitStatus::Created ? 201 : 200,
                                  {{"status", to_string(st)},
                                   {"post_id", pid},
                                   {"progress", {{"labeled", labeled}, {"total", total}}}});
              }));

  server.Get("/api/samples/:id/agreement",
             guarded([](const httplib::Request& req, httplib::Response& res, const std::string&,
                        AnnotationService& svc) {
               const auto& sid = req.path_params.at("id");
               const auto a = svc.live_agreement(sid);
               detail::send_json(res, 200,
                                 {{"sample_id", sid},
                                  {"phase", to_string(svc.phase(sid))},
                                  {"kind", a.kappa.kind == KappaKind::Cohen ? "cohen" : "fleiss"},
                                  {"kappa", a.kappa.value},
                                  {"band", kappa_band(a.kappa.value)},
                                  {"n_items", a.kappa.n_items},
                                  {"n_raters", a.kappa.n_raters},
                                  {"annotators", a.annotators},
                                  {"conflicts", a.conflicts}});
             }));

  server.Get("/api/samples/:id/export.csv",
             guarded([](const httplib::Request& req, httplib::Response& res, const std::string&,
                        AnnotationService& svc) {
               const auto& sid = req.path_params.at("id");
               if (svc.phase(sid) != Phase::Resolution) {
                 return detail::send_error(res, 409, "export is available in the resolution phase only");
               }
               std::ostringstream out;
               svc.export_csv(sid, out);
               res.status = 200;
               res.set_content(out.str(), "text/csv");
             }));

  server.Post("/api/samples/:id/phase",
              guarded([](const httplib::Request& req, httplib::Response& res, const std::string&,
                         AnnotationService& svc) {
                const auto j = nlohmann::json::parse(req.body);
                const auto& sid = req.path_params.at("id");
                svc.set_phase(sid, parse_phase(j.at("phase").get<std::string>()));
                detail::send_json(res, 200, {{"sample_id", sid}, {"phase", to_string(svc.phase(sid))}});
              }));

  server.Post("/api/samples/:id/resolutions",
              guarded([](const httplib::Request& req, httplib::Response& res, const std::string&,
                         AnnotationService& svc) {
                const auto j = nlohmann::json::parse(req.body);
                const auto st = svc.resolve(req.path_params.at("id"), j.at("post_id").get<std::string>(),
                                            j.at("class_id").get<std::string>());
                detail::send_json(res, 200, {{"status", to_string(st)}});
              }));

  if (!ui_dir.empty() && !server.set_mount_point("/", ui_dir)) {
    throw DataError("UI directory '" + ui_dir + "' does not exist");
  }
}

}  // namespace forumstrat
