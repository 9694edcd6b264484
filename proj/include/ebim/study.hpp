#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ebim/image.hpp"
#include "ebim/stats.hpp"

namespace ebim {

using ordered_json = nlohmann::ordered_json;

struct ImageTriple {
  std::string id;
  std::filesystem::path original;
  std::filesystem::path bim;
  std::filesystem::path ebim;
};

struct StudyConfig {
  std::vector<ImageTriple> triples;
  int display_ms = 5000;
};

// {"display_ms": 5000, "triples": [{"id", "original", "bim", "ebim"}, ...]};
// relative paths resolve against the config file's directory.
StudyConfig load_study_config(const std::filesystem::path& path);
void save_study_config(const StudyConfig& cfg, const std::filesystem::path& path);
void validate(const StudyConfig& cfg);

// URL-safe random token carrying `bits` bits of entropy (hex encoded).
std::string random_token(int bits = 128);

ordered_json to_json(const TrialRecord& r);
TrialRecord trial_record_from_json(const nlohmann::json& j);
std::vector<TrialRecord> read_responses(const std::filesystem::path& jsonl);

struct SessionInfo {
  std::string session_id;
  int trial_count = 0;
  std::string button_order;  // "identical-first" or "different-first"
};

struct TrialPayload {
  std::string left_url;
  std::string right_url;
  int display_ms = 0;
};

struct ResponseAck {
  int trial_index = 0;
  int responses = 0;  // responses recorded so far in this session
  int trial_count = 0;
};

struct ImageBlob {
  std::string content_type;
  std::string bytes;
};

// Aggregate report from a set of trial records: per-session condition means
// and, with at least two complete sessions, the hypothesis battery.
ordered_json aggregate_results(std::span<const TrialRecord> records);
ordered_json to_json(const Battery& b);

// Pair-presentation study: every session sees each (triple, condition) pair
// once, in its own random order, with random left/right placement.
class StudyService {
 public:
  // Existing records in `responses_jsonl` are loaded and count towards results.
  StudyService(StudyConfig config, std::filesystem::path responses_jsonl);

  SessionInfo create_session(std::optional<std::uint64_t> seed = std::nullopt);
  TrialPayload get_trial(const std::string& session_id, int index);
  ResponseAck post_response(const std::string& session_id, int index, const std::string& choice, double latency_ms);
  ordered_json results() const;
  std::optional<ImageBlob> image(const std::string& token, bool raw_pnm = false) const;

  int pair_count() const { return int(config_.triples.size()) * 3; }

 private:
  struct Trial {
    std::size_t triple = 0;
    Condition condition = Condition::none;
    bool original_left = true;
    std::string pair_id;
    std::string left_token;
    std::string right_token;
  };
  struct Session {
    std::string id;
    std::vector<Trial> trials;
    std::string button_order;
    int answered = 0;
    std::mutex mutex;
  };

  Session& session(const std::string& id);

  StudyConfig config_;
  std::filesystem::path responses_path_;

  mutable std::mutex registry_mutex_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
  std::map<std::string, std::filesystem::path> images_;  // token -> file

  mutable std::mutex log_mutex_;
  std::vector<TrialRecord> records_;
};

}  // namespace ebim
