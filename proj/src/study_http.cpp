#include "ebim/study_http.hpp"

#include <httplib.h>

#include "ebim/error.hpp"

namespace ebim {

namespace {

using nlohmann::json;

void send_json(httplib::Response& res, const ordered_json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

int status_for(Errc code) {
  switch (code) {
    case Errc::not_found: return 404;
    case Errc::conflict: return 409;
    case Errc::invalid_argument:
    case Errc::format:
    case Errc::shape_mismatch: return 400;
    default: return 500;
  }
}

template <class Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_json(res, {{"error", e.what()}}, status_for(e.code()));
    } catch (const json::exception& e) {
      send_json(res, {{"error", std::string("malformed JSON: ") + e.what()}}, 400);
    } catch (const std::exception& e) {
      send_json(res, {{"error", e.what()}}, 500);
    }
  };
}

int parse_index(const std::string& s) {
  if (s.empty() || s.size() > 9 || s.find_first_not_of("0123456789") != std::string::npos) {
    throw Error(Errc::not_found, "trial index must be a non-negative integer");
  }
  return std::stoi(s);
}

}  // namespace

void register_routes(httplib::Server& server, StudyService& service) {
  server.Post("/api/session", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::uint64_t> seed;
    if (!req.body.empty()) {
      const json body = json::parse(req.body);
      if (body.contains("seed") && !body["seed"].is_null()) seed = body["seed"].get<std::uint64_t>();
    }
    const SessionInfo info = service.create_session(seed);
    send_json(res, {{"session_id", info.session_id}, {"trial_count", info.trial_count}, {"button_order", info.button_order}});
  }));

  server.Get("/api/trial/:sid/:index", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    const TrialPayload p = service.get_trial(req.path_params.at("sid"), parse_index(req.path_params.at("index")));
    send_json(res, {{"left_url", p.left_url}, {"right_url", p.right_url}, {"display_ms", p.display_ms}});
  }));

  server.Post("/api/response/:sid/:index", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body);
    if (!body.is_object() || !body.contains("choice") || !body["choice"].is_string()) {
      throw Error(Errc::invalid_argument, "body must contain a string field \"choice\"");
    }
    const double latency = body.value("latency_ms", 0.0);
    const ResponseAck ack = service.post_response(req.path_params.at("sid"), parse_index(req.path_params.at("index")),
                                                  body["choice"].get<std::string>(), latency);
    send_json(res, {{"trial_index", ack.trial_index}, {"responses", ack.responses}, {"trial_count", ack.trial_count}});
  }));

  server.Get("/api/results", guarded([&service](const httplib::Request&, httplib::Response& res) {
    send_json(res, service.results());
  }));

  server.Get("/img/:token", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    const bool pnm = req.has_param("format") && req.get_param_value("format") == "pnm";
    const auto blob = service.image(req.path_params.at("token"), pnm);
    if (!blob) throw Error(Errc::not_found, "unknown image token");
    res.set_header("Cache-Control", "no-store");
    res.set_content(blob->bytes, blob->content_type);
  }));
}

void serve_study(StudyService& service, const std::string& host, int port, const std::filesystem::path& static_dir) {
  httplib::Server server;
  register_routes(server, service);
  if (!static_dir.empty() && !server.set_mount_point("/", static_dir.string())) {
    throw Error(Errc::io, "static directory not found: " + static_dir.string());
  }
  if (!server.listen(host, port)) throw Error(Errc::io, "cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace ebim
