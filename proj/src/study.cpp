#include "ebim/study.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "ebim/error.hpp"
#include "ebim/rng.hpp"

namespace ebim {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- config ------------------------------------------------------------------

void validate(const StudyConfig& cfg) {
  if (cfg.triples.empty()) throw Error(Errc::invalid_argument, "study has no image triples");
  if (cfg.display_ms <= 0) throw Error(Errc::invalid_argument, "display_ms must be > 0");
  std::set<std::string> ids;
  for (const ImageTriple& t : cfg.triples) {
    if (t.id.empty() || t.original.empty() || t.bim.empty() || t.ebim.empty()) {
      throw Error(Errc::invalid_argument, "incomplete image triple '" + t.id + "'");
    }
    if (!ids.insert(t.id).second) throw Error(Errc::invalid_argument, "duplicate triple id '" + t.id + "'");
  }
}

StudyConfig load_study_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(Errc::format, path.string() + ": " + e.what());
  }
  StudyConfig cfg;
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  try {
    cfg.display_ms = j.value("display_ms", 5000);
    for (const auto& t : j.at("triples")) {
      cfg.triples.push_back({t.at("id").get<std::string>(), resolve(t.at("original").get<std::string>()),
                             resolve(t.at("bim").get<std::string>()), resolve(t.at("ebim").get<std::string>())});
    }
  } catch (const json::exception& e) {
    throw Error(Errc::format, path.string() + ": " + e.what());
  }
  validate(cfg);
  return cfg;
}

void save_study_config(const StudyConfig& cfg, const fs::path& path) {
  ordered_json j;
  j["display_ms"] = cfg.display_ms;
  j["triples"] = ordered_json::array();
  const fs::path base = path.parent_path();
  auto rel = [&](const fs::path& p) { return fs::relative(p, base.empty() ? fs::current_path() : base).generic_string(); };
  for (const ImageTriple& t : cfg.triples) {
    j["triples"].push_back({{"id", t.id}, {"original", rel(t.original)}, {"bim", rel(t.bim)}, {"ebim", rel(t.ebim)}});
  }
  std::ofstream out(path);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string random_token(int bits) {
  static thread_local std::random_device device;
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  const int words = (bits + 31) / 32;
  for (int i = 0; i < words; ++i) {
    const std::uint32_t v = device();
    for (int k = 7; k >= 0; --k) out.push_back(hex[(v >> (4 * k)) & 0xf]);
  }
  return out;
}

// ---- records -----------------------------------------------------------------

ordered_json to_json(const TrialRecord& r) {
  return ordered_json{{"session_id", r.session_id},
                      {"trial_index", r.trial_index},
                      {"pair_id", r.pair_id},
                      {"condition", condition_name(r.condition)},
                      {"placement", r.original_left ? "original-left" : "original-right"},
                      {"choice", choice_name(r.choice)},
                      {"latency_ms", r.latency_ms},
                      {"timestamp", r.timestamp_ms}};
}

TrialRecord trial_record_from_json(const json& j) {
  TrialRecord r;
  try {
    r.session_id = j.at("session_id").get<std::string>();
    r.trial_index = j.at("trial_index").get<int>();
    r.pair_id = j.value("pair_id", std::string());
    const auto cond = parse_condition(j.at("condition").get<std::string>());
    if (!cond) throw Error(Errc::format, "unknown condition " + j.at("condition").dump());
    r.condition = *cond;
    r.original_left = j.value("placement", std::string("original-left")) == "original-left";
    const auto choice = parse_choice(j.at("choice").get<std::string>());
    if (!choice) throw Error(Errc::format, "unknown choice " + j.at("choice").dump());
    r.choice = *choice;
    r.latency_ms = j.value("latency_ms", 0.0);
    r.timestamp_ms = j.value("timestamp", std::int64_t{0});
  } catch (const json::exception& e) {
    throw Error(Errc::format, std::string("malformed trial record: ") + e.what());
  }
  if (r.trial_index < 0 || !(r.latency_ms >= 0.0)) throw Error(Errc::format, "malformed trial record values");
  return r;
}

std::vector<TrialRecord> read_responses(const fs::path& jsonl) {
  std::ifstream in(jsonl);
  if (!in) throw Error(Errc::io, "cannot open " + jsonl.string());
  std::vector<TrialRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(trial_record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(Errc::format, jsonl.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(Errc::format, jsonl.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---- aggregation ---------------------------------------------------------------

namespace {

ordered_json optional_number(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

ordered_json report_json(const TestReport& r) {
  ordered_json j{{"method", r.method}, {"statistic", r.statistic}, {"p", r.p_value}, {"n", r.n}};
  return j;
}

}  // namespace

ordered_json to_json(const Battery& b) {
  ordered_json table = ordered_json::array();
  for (const BatteryCell& c : b.cells) {
    ordered_json row{{"hypothesis", c.hypothesis}, {"method", c.method}, {"pairing", c.paired ? "paired" : "one-sample"}};
    if (c.report) {
      row["statistic"] = c.report->statistic;
      row["p"] = c.report->p_value;
      row["n"] = c.report->n;
      row["tail"] = tail_name(c.report->tail);
      row["test"] = c.report->method;
      row["rejected"] = c.report->p_value < b.alpha;
      if (c.report->zeros_dropped > 0) row["zeros_dropped"] = c.report->zeros_dropped;
    } else {
      row["statistic"] = nullptr;
      row["p"] = nullptr;
      row["degenerate"] = c.degenerate;
    }
    table.push_back(std::move(row));
  }
  ordered_json j{{"alpha", b.alpha}, {"participants", b.participants}, {"table", std::move(table)}};
  j["normality"] = b.normality ? report_json(*b.normality) : ordered_json(nullptr);
  j["cohens_d"] = optional_number(b.cohens_d);
  j["power"] = optional_number(b.power);
  return j;
}

ordered_json aggregate_results(std::span<const TrialRecord> records) {
  const auto summaries = summarize(records);
  ordered_json sessions = ordered_json::array();
  int complete = 0;
  for (const ParticipantSummary& s : summaries) {
    complete += s.complete();
    sessions.push_back({{"session", s.participant},
                        {"mu_none", optional_number(s.mean[0])},
                        {"mu_bim", optional_number(s.mean[1])},
                        {"mu_ebim", optional_number(s.mean[2])},
                        {"counts", {{"i", s.count[0]}, {"ii", s.count[1]}, {"iii", s.count[2]}}},
                        {"complete", s.complete()}});
  }
  ordered_json out{{"records", records.size()}, {"sessions", std::move(sessions)}, {"complete_sessions", complete}};
  if (complete >= 2) {
    out["battery"] = to_json(run_hypothesis_battery(summaries));
    out["note"] = "";
  } else {
    out["battery"] = nullptr;
    out["note"] = "hypothesis battery needs at least 2 sessions with responses in all three conditions";
  }
  return out;
}

// ---- service -------------------------------------------------------------------

StudyService::StudyService(StudyConfig config, fs::path responses_jsonl)
    : config_(std::move(config)), responses_path_(std::move(responses_jsonl)) {
  validate(config_);
  if (fs::exists(responses_path_)) records_ = read_responses(responses_path_);
  summarize(records_);  // rejects logs with duplicate records
}

SessionInfo StudyService::create_session(std::optional<std::uint64_t> seed) {
  Rng rng(seed ? *seed : (std::uint64_t(std::random_device{}()) << 32) ^ std::random_device{}());
  auto s = std::make_unique<Session>();
  s->id = random_token();
  s->button_order = rng.coin() ? "identical-first" : "different-first";
  for (std::size_t t = 0; t < config_.triples.size(); ++t) {
    for (Condition c : {Condition::none, Condition::bim, Condition::ebim}) {
      Trial trial;
      trial.triple = t;
      trial.condition = c;
      s->trials.push_back(std::move(trial));
    }
  }
  rng.shuffle(s->trials);

  std::lock_guard lock(registry_mutex_);
  for (Trial& trial : s->trials) {
    trial.original_left = rng.coin();
    trial.pair_id = random_token();
    trial.left_token = random_token();
    trial.right_token = random_token();
    const ImageTriple& triple = config_.triples[trial.triple];
    const fs::path& modified =
        trial.condition == Condition::none ? triple.original : (trial.condition == Condition::bim ? triple.bim : triple.ebim);
    images_[trial.left_token] = trial.original_left ? triple.original : modified;
    images_[trial.right_token] = trial.original_left ? modified : triple.original;
  }
  SessionInfo info{s->id, int(s->trials.size()), s->button_order};
  sessions_.emplace(s->id, std::move(s));
  return info;
}

StudyService::Session& StudyService::session(const std::string& id) {
  std::lock_guard lock(registry_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(Errc::not_found, "unknown session");
  return *it->second;
}

TrialPayload StudyService::get_trial(const std::string& session_id, int index) {
  Session& s = session(session_id);
  std::lock_guard lock(s.mutex);
  if (index < 0 || index >= int(s.trials.size())) throw Error(Errc::not_found, "trial index out of range");
  if (index < s.answered) throw Error(Errc::conflict, "trial already answered; revisiting is not allowed");
  const Trial& t = s.trials[std::size_t(index)];
  return {"/img/" + t.left_token, "/img/" + t.right_token, config_.display_ms};
}

ResponseAck StudyService::post_response(const std::string& session_id, int index, const std::string& choice,
                                        double latency_ms) {
  const auto parsed = parse_choice(choice);
  if (!parsed) throw Error(Errc::invalid_argument, "choice must be \"identical\" or \"different\"");
  if (!(latency_ms >= 0.0) || !std::isfinite(latency_ms)) throw Error(Errc::invalid_argument, "latency_ms must be >= 0");
  Session& s = session(session_id);
  std::lock_guard lock(s.mutex);
  if (index < 0 || index >= int(s.trials.size())) throw Error(Errc::not_found, "trial index out of range");
  if (index < s.answered) throw Error(Errc::conflict, "duplicate response for this trial");
  if (index > s.answered) throw Error(Errc::conflict, "trials must be answered in order");

  const Trial& t = s.trials[std::size_t(index)];
  TrialRecord r;
  r.session_id = s.id;
  r.trial_index = index;
  r.pair_id = t.pair_id;
  r.condition = t.condition;
  r.original_left = t.original_left;
  r.choice = *parsed;
  r.latency_ms = latency_ms;
  r.timestamp_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  {
    std::lock_guard log_lock(log_mutex_);
    std::ofstream out(responses_path_, std::ios::app | std::ios::binary);
    if (!out) throw Error(Errc::io, "cannot append to " + responses_path_.string());
    out << to_json(r).dump() << '\n';
    out.flush();
    if (!out) throw Error(Errc::io, "write failed for " + responses_path_.string());
    records_.push_back(r);
  }
  ++s.answered;
  return {index, s.answered, int(s.trials.size())};
}

ordered_json StudyService::results() const {
  std::lock_guard lock(log_mutex_);
  return aggregate_results(records_);
}

std::optional<ImageBlob> StudyService::image(const std::string& token, bool raw_pnm) const {
  fs::path file;
  {
    std::lock_guard lock(registry_mutex_);
    auto it = images_.find(token);
    if (it == images_.end()) return std::nullopt;
    file = it->second;
  }
  const Image img = load_image(file);
  if (raw_pnm) {
    const auto bytes = encode_pnm(img);
    return ImageBlob{"image/x-portable-anymap", std::string(bytes.begin(), bytes.end())};
  }
  const auto bytes = encode_png(img);
  return ImageBlob{"image/png", std::string(bytes.begin(), bytes.end())};
}

}  // namespace ebim
