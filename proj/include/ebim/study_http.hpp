#pragma once

#include <filesystem>

#include "ebim/study.hpp"

namespace httplib {
class Server;
}

namespace ebim {

// Routes:
//   POST /api/session               -> {session_id, trial_count, button_order}
//   GET  /api/trial/{sid}/{i}       -> {left_url, right_url, display_ms}
//   POST /api/response/{sid}/{i}    body {choice, latency_ms}
//   GET  /api/results
//   GET  /img/{token}               PNG (or PNM with ?format=pnm)
// Errors are JSON {"error": message} with 400/404/409/500 status codes.
void register_routes(httplib::Server& server, StudyService& service);

// Blocking; serves static files from `static_dir` when it is non-empty.
void serve_study(StudyService& service, const std::string& host, int port, const std::filesystem::path& static_dir = {});

}  // namespace ebim
