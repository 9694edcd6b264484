#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "ebim/error.hpp"
#include "ebim/study.hpp"
#include "study_fixture.hpp"

using namespace ebim;
using namespace ebim::testing;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) { return fs::temp_directory_path() / ("ebim_study_" + name); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string token_of(const std::string& url) { return url.substr(std::string("/img/").size()); }

Errc error_code(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::invalid_argument;
}

// (triple, modified variant) per trial, read back through the served images.
std::vector<std::pair<int, int>> trial_sequence(StudyService& svc, const SessionInfo& s) {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < s.trial_count; ++i) {
    const TrialPayload p = svc.get_trial(s.session_id, i);
    const auto l = fixture_identity(svc.image(token_of(p.left_url), true)->bytes);
    const auto r = fixture_identity(svc.image(token_of(p.right_url), true)->bytes);
    out.emplace_back(l.first, std::max(l.second, r.second) + 10 * (l.second != 0));
  }
  return out;
}

}  // namespace

TEST_CASE("study config") {
  const auto dir = temp_dir("config");
  StudyConfig cfg = make_study_fixture(dir, 3);
  save_study_config(cfg, dir / "study.json");
  const StudyConfig back = load_study_config(dir / "study.json");
  REQUIRE(back.triples.size() == 3);
  CHECK(fs::equivalent(back.triples[1].bim, cfg.triples[1].bim));
  CHECK(back.display_ms == 5000);

  StudyConfig dup = cfg;
  dup.triples[1].id = dup.triples[0].id;
  CHECK_THROWS_AS(validate(dup), Error);
  StudyConfig incomplete = cfg;
  incomplete.triples[2].ebim.clear();
  CHECK_THROWS_AS(validate(incomplete), Error);
  CHECK_THROWS_AS(validate(StudyConfig{}), Error);
}

TEST_CASE("tokens") {
  std::set<std::string> seen;
  for (int i = 0; i < 1000; ++i) {
    const std::string t = random_token();
    CHECK(t.size() == 32);
    CHECK(t.find_first_not_of("0123456789abcdef") == std::string::npos);
    seen.insert(t);
  }
  CHECK(seen.size() == 1000);
}

TEST_CASE("sessions") {
  const auto dir = temp_dir("sessions");
  StudyService svc(make_study_fixture(dir, 80), dir / "responses.jsonl");
  const SessionInfo a = svc.create_session(42);
  CHECK(a.trial_count == 240);
  CHECK(a.session_id.size() == 32);
  CHECK((a.button_order == "identical-first" || a.button_order == "different-first"));

  const SessionInfo b = svc.create_session(42);
  CHECK(a.session_id != b.session_id);
  CHECK(a.button_order == b.button_order);
  const auto seq_a = trial_sequence(svc, a);
  CHECK(seq_a == trial_sequence(svc, b));

  // each (triple, condition) pair exactly once
  std::map<std::pair<int, int>, int> counts;
  for (const auto& [t, v] : seq_a) counts[{t, v % 10}]++;
  CHECK(counts.size() == 240);
  for (const auto& [k, c] : counts) CHECK(c == 1);

  // placement is randomized
  int original_left = 0;
  for (const auto& [t, v] : seq_a) original_left += v == 1 || v == 2;
  CHECK(original_left > 50);
  CHECK(original_left < 110);

  int equal = 0;
  for (int k = 0; k < 5; ++k) {
    const SessionInfo u = svc.create_session();
    const SessionInfo w = svc.create_session();
    equal += trial_sequence(svc, u) == trial_sequence(svc, w);
  }
  CHECK(equal == 0);

  std::set<int> orders;
  for (std::uint64_t seed = 0; seed < 40; ++seed) orders.insert(svc.create_session(seed).button_order == "identical-first");
  CHECK(orders.size() == 2);
}

TEST_CASE("trial payloads are blinded") {
  const auto dir = temp_dir("blind");
  StudyService svc(make_study_fixture(dir, 10), dir / "responses.jsonl");
  const SessionInfo s = svc.create_session(7);
  std::set<std::string> tokens;
  for (int i = 0; i < s.trial_count; ++i) {
    const TrialPayload p = svc.get_trial(s.session_id, i);
    CHECK(p.display_ms == 5000);
    CHECK(p.left_url.rfind("/img/", 0) == 0);
    tokens.insert(token_of(p.left_url));
    tokens.insert(token_of(p.right_url));
    const auto l = fixture_identity(svc.image(token_of(p.left_url), true)->bytes);
    const auto r = fixture_identity(svc.image(token_of(p.right_url), true)->bytes);
    CHECK(l.first == r.first);
    if (l.second == 0 && r.second == 0) {
      // condition (i): both sides serve the same original
      CHECK(svc.image(token_of(p.left_url), true)->bytes == svc.image(token_of(p.right_url), true)->bytes);
    } else {
      CHECK((l.second == 0) != (r.second == 0));
    }
  }
  CHECK(tokens.size() == std::size_t(2 * s.trial_count));
  const auto png = svc.image(*tokens.begin());
  REQUIRE(png.has_value());
  CHECK(png->content_type == "image/png");
  CHECK(png->bytes.substr(1, 3) == "PNG");
  CHECK_FALSE(svc.image("deadbeef").has_value());
}

TEST_CASE("trial and response errors") {
  const auto dir = temp_dir("errors");
  const fs::path log = dir / "responses.jsonl";
  StudyService svc(make_study_fixture(dir, 4), log);
  const SessionInfo s = svc.create_session(1);

  CHECK(error_code([&] { svc.get_trial(s.session_id, s.trial_count); }) == Errc::not_found);
  CHECK(error_code([&] { svc.get_trial(s.session_id, -1); }) == Errc::not_found);
  CHECK(error_code([&] { svc.get_trial("nope", 0); }) == Errc::not_found);

  const ResponseAck ack = svc.post_response(s.session_id, 0, "identical", 812.5);
  CHECK(ack.trial_index == 0);
  CHECK(ack.responses == 1);
  CHECK(ack.trial_count == 12);
  const std::string after_first = slurp(log);
  CHECK(std::count(after_first.begin(), after_first.end(), '\n') == 1);

  CHECK(error_code([&] { svc.post_response(s.session_id, 0, "different", 10); }) == Errc::conflict);
  CHECK(slurp(log) == after_first);
  CHECK(error_code([&] { svc.post_response(s.session_id, 1, "maybe", 10); }) == Errc::invalid_argument);
  CHECK(error_code([&] { svc.post_response(s.session_id, 1, "identical", -1); }) == Errc::invalid_argument);
  CHECK(error_code([&] { svc.post_response(s.session_id, 3, "identical", 1); }) == Errc::conflict);
  CHECK(error_code([&] { svc.post_response("nope", 1, "identical", 1); }) == Errc::not_found);
  CHECK(error_code([&] { svc.get_trial(s.session_id, 0); }) == Errc::conflict);
  CHECK(slurp(log) == after_first);
  CHECK_NOTHROW(svc.get_trial(s.session_id, 1));
  CHECK(svc.post_response(s.session_id, 1, "different", 0).responses == 2);

  const auto records = read_responses(log);
  REQUIRE(records.size() == 2);
  CHECK(records[0].latency_ms == 812.5);
  CHECK(records[1].choice == Choice::different);
  CHECK(records[1].trial_index == 1);
}

TEST_CASE("results") {
  const auto dir = temp_dir("results");
  const fs::path log = dir / "responses.jsonl";
  const StudyConfig cfg = make_study_fixture(dir, 5);
  StudyService svc(cfg, log);

  auto r = svc.results();
  CHECK(r["records"] == 0);
  CHECK(r["sessions"].empty());
  CHECK(r["battery"].is_null());

  const SessionInfo one = svc.create_session(3);
  for (int i = 0; i < one.trial_count; ++i) svc.post_response(one.session_id, i, "identical", 100);
  r = svc.results();
  REQUIRE(r["sessions"].size() == 1);
  CHECK(r["sessions"][0]["mu_none"] == 1.0);
  CHECK(r["sessions"][0]["mu_bim"] == 1.0);
  CHECK(r["sessions"][0]["mu_ebim"] == 1.0);
  CHECK(r["battery"].is_null());
  CHECK_FALSE(r["note"].get<std::string>().empty());

  // a second session that answers by looking at the images
  const SessionInfo two = svc.create_session(4);
  for (int i = 0; i < two.trial_count; ++i) {
    const TrialPayload p = svc.get_trial(two.session_id, i);
    const auto l = fixture_identity(svc.image(token_of(p.left_url), true)->bytes);
    const auto rr = fixture_identity(svc.image(token_of(p.right_url), true)->bytes);
    const int variant = std::max(l.second, rr.second);
    svc.post_response(two.session_id, i, variant == 1 ? "different" : "identical", 100);
  }
  r = svc.results();
  CHECK(r["complete_sessions"] == 2);
  REQUIRE(r["battery"].is_object());
  CHECK(r["battery"]["table"].size() == 10);

  const std::string live = r.dump();
  CHECK(aggregate_results(read_responses(log)).dump() == live);
  StudyService restarted(cfg, log);
  CHECK(restarted.results().dump() == live);
}

TEST_CASE("concurrent sessions share one log") {
  const auto dir = temp_dir("concurrent");
  const fs::path log = dir / "responses.jsonl";
  StudyService svc(make_study_fixture(dir, 6), log);
  std::vector<std::thread> workers;
  for (int w = 0; w < 4; ++w) {
    workers.emplace_back([&svc, w] {
      const SessionInfo s = svc.create_session(std::uint64_t(w));
      for (int i = 0; i < s.trial_count; ++i) {
        svc.get_trial(s.session_id, i);
        svc.post_response(s.session_id, i, (i + w) % 2 ? "identical" : "different", 5.0 * i);
      }
    });
  }
  for (auto& t : workers) t.join();
  const auto records = read_responses(log);
  CHECK(records.size() == 4 * 18);
  CHECK(aggregate_results(records).dump() == svc.results().dump());
}

TEST_CASE("response log parsing") {
  const auto dir = temp_dir("parse");
  fs::create_directories(dir);
  const fs::path log = dir / "bad.jsonl";
  std::ofstream(log) << R"({"session_id":"a","trial_index":0,"condition":"ii","choice":"identical"})" << "\n"
                     << R"({"session_id":"a","trial_index":1,"condition":"iv","choice":"identical"})" << "\n";
  CHECK_THROWS_WITH_AS(read_responses(log), doctest::Contains(":2:"), Error);
  std::ofstream(log) << "{not json\n";
  CHECK_THROWS_AS(read_responses(log), Error);
  CHECK_THROWS_AS(read_responses(dir / "missing.jsonl"), Error);

  TrialRecord r{"s", 3, "p", Condition::ebim, false, Choice::different, 12.5, 99};
  const TrialRecord back = trial_record_from_json(nlohmann::json::parse(to_json(r).dump()));
  CHECK(back.session_id == "s");
  CHECK(back.condition == Condition::ebim);
  CHECK_FALSE(back.original_left);
  CHECK(back.timestamp_ms == 99);
}
