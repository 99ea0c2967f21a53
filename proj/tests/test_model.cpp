#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "densecap/errors.hpp"
#include "densecap/model.hpp"

namespace fs = std::filesystem;
using namespace densecap;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int n = 0;
    path = fs::temp_directory_path() /
           ("densecap_model_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path file(const std::string& name) const { return path / name; }
};

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream(p) << s;
}

}  // namespace

TEST_CASE("ingest reads well-formed lines") {
  TempDir dir;
  write_text(dir.file("c.jsonl"),
             R"({"video_id":"v","model_id":"blip","timestamp_s":1,"caption":"a","confidence":0.5}
{"video_id":"v","model_id":"blip","timestamp_s":2.5,"caption":"b","confidence":1,"background_scores":[0.9,0.8,0.7]}

{"video_id":"v","model_id":"flamingo","timestamp_s":3,"caption":"c","confidence":0}
)");
  const auto cands = ingest_candidates(dir.file("c.jsonl"));
  REQUIRE(cands.size() == 3);
  CHECK(cands[1].timestamp_s == 2.5);
  CHECK(cands[1].background_scores == std::vector<double>{0.9, 0.8, 0.7});
  CHECK(cands[2].model_id == "flamingo");
}

TEST_CASE("ingest of an empty file is empty") {
  TempDir dir;
  write_text(dir.file("e.jsonl"), "");
  CHECK(ingest_candidates(dir.file("e.jsonl")).empty());
}

TEST_CASE("ingest rejects bad records naming the line") {
  TempDir dir;
  const auto check_rejects = [&](const std::string& body, ErrorKind kind, const std::string& needle) {
    write_text(dir.file("bad.jsonl"), body);
    try {
      ingest_candidates(dir.file("bad.jsonl"));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == kind);
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  const std::string ok =
      R"({"video_id":"v","model_id":"m","timestamp_s":1,"caption":"a","confidence":0.5})"
      "\n";
  check_rejects(ok + R"({"video_id":"v","model_id":"m","timestamp_s":1,"caption":"a","confidence":1.3})",
                ErrorKind::validation, ":2:");
  check_rejects(ok + "{not json", ErrorKind::validation, ":2: malformed");
  check_rejects(R"({"video_id":"v","model_id":"m","timestamp_s":-1,"caption":"a","confidence":0.5})",
                ErrorKind::validation, ":1:");
  check_rejects(R"({"video_id":"v","model_id":"m","timestamp_s":1,"caption":"   ","confidence":0.5})",
                ErrorKind::validation, "caption");
  check_rejects(
      R"({"video_id":"v","model_id":"m","timestamp_s":1,"caption":"a","confidence":0.5,"background_scores":[2]})",
      ErrorKind::validation, "background");
  check_rejects(R"({"video_id":"v","timestamp_s":1,"caption":"a","confidence":0.5})",
                ErrorKind::validation, "model_id");
}

TEST_CASE("ingest enforces the expected model set") {
  TempDir dir;
  write_text(dir.file("c.jsonl"),
             R"({"video_id":"v","model_id":"gpt","timestamp_s":1,"caption":"a","confidence":0.5})");
  CHECK_THROWS_AS(ingest_candidates(dir.file("c.jsonl"), std::set<std::string>{"blip"}),
                  ValidationError);
  CHECK(ingest_candidates(dir.file("c.jsonl"), std::set<std::string>{"gpt"}).size() == 1);
}

TEST_CASE("missing file is an I/O error") {
  CHECK_THROWS_AS(ingest_candidates("/definitely/not/here.jsonl"), IoError);
}

TEST_CASE("timeline write/read round-trips exactly") {
  TempDir dir;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    TimelinePrediction p{"video-" + std::to_string(trial), {}};
    double t = unit(rng) * 3;
    const int n = static_cast<int>(rng() % 8);
    for (int i = 0; i < n; ++i) {
      p.events.push_back({t, "caption \"" + std::to_string(i) + "\" [PLAYER] \xc3\xa9", unit(rng)});
      t += 1e-3 + unit(rng) * 100;
    }
    write_timeline(p, dir.file("p.jsonl"));
    const auto back = read_timelines(dir.file("p.jsonl"));
    REQUIRE(back.size() == 1);
    CHECK(back[0] == p);
  }
}

TEST_CASE("empty timeline writes an empty prediction array") {
  TempDir dir;
  write_timeline({"v", {}}, dir.file("p.jsonl"));
  std::ifstream in(dir.file("p.jsonl"));
  std::string line;
  std::getline(in, line);
  CHECK(line == R"({"video_id":"v","predictions":[]})");
}

TEST_CASE("unsorted timeline is a precondition error") {
  TempDir dir;
  TimelinePrediction p{"v", {{5.0, "a", 0.5}, {3.0, "b", 0.5}}};
  CHECK_THROWS_AS(write_timeline(p, dir.file("p.jsonl")), PreconditionError);
  CHECK_FALSE(fs::exists(dir.file("p.jsonl")));
}

TEST_CASE("candidate files round-trip") {
  TempDir dir;
  std::vector<CaptionCandidate> cands{
      {"v1", "blip", 0.0, "goal!", 0.25, {}},
      {"v1", "blip", 1.5, "[PLAYER] scores", 0.875, {0.1, 0.2, 0.3}},
      {"v2", "flamingo", 1e6, "corner", 1.0, {1.0}},
  };
  write_candidates(cands, dir.file("c.jsonl"));
  CHECK(ingest_candidates(dir.file("c.jsonl")) == cands);
}

TEST_CASE("ground truth accepts both array keys") {
  TempDir dir;
  write_text(dir.file("gt.jsonl"),
             R"({"video_id":"a","predictions":[{"timestamp_s":20,"reference":"y"},{"timestamp_s":10,"reference":"x"}]}
{"video_id":"b","annotations":[{"timestamp_s":1,"reference":"z"}]}
)");
  const auto gt = read_ground_truth(dir.file("gt.jsonl"));
  REQUIRE(gt.size() == 2);
  CHECK(gt[0].events[0].reference == "x");  // sorted by time
  CHECK(gt[1].events[0].video_id == "b");
  write_ground_truth(gt, dir.file("gt2.jsonl"));
  CHECK(read_ground_truth(dir.file("gt2.jsonl")) == gt);
}

TEST_CASE("split_streams groups by (video, model) in first-appearance order") {
  std::vector<CaptionCandidate> cands{
      {"v", "b", 1, "x", 0.5, {}}, {"v", "a", 1, "y", 0.5, {}},
      {"v", "b", 2, "z", 0.5, {}}, {"w", "b", 1, "q", 0.5, {}}};
  const auto streams = split_streams(cands);
  REQUIRE(streams.size() == 3);
  CHECK(streams[0].model_id == "b");
  CHECK(streams[0].candidates.size() == 2);
  CHECK(streams[1].model_id == "a");
  CHECK(streams[2].video_id == "w");
  CHECK(join_streams(streams).size() == 4);
}

TEST_CASE("pipeline config parsing and validation") {
  const auto cfg = pipeline_config_from_json(nlohmann::json::parse(
      R"({"background_threshold":0.88,"dedup_mode":"exact","ensemble_weights":{"blip":1,"flamingo":0.7}})"));
  CHECK(cfg.background_threshold == 0.88);
  CHECK(cfg.dedup_mode == DedupMode::exact);
  CHECK(cfg.ensemble_weights.at("flamingo") == 0.7);
  CHECK(cfg.window_sizes_s == std::vector<double>{32.0});
  CHECK(pipeline_config_from_json(to_json(cfg)).ensemble_weights == cfg.ensemble_weights);

  CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json::parse(R"({"confidence_threshold":1.5})")),
                  ConfigError);
  CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json::parse(R"({"ensemble_weights":{"a":0}})")),
                  ConfigError);
  CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json::parse(R"({"bogus":1})")), ConfigError);
  CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json::parse(R"({"window_stride_s":0})")),
                  ConfigError);
}

TEST_CASE("SoccerNet game time") {
  CHECK(game_time(0.0, 2700) == "1 - 00:00");
  CHECK(game_time(754.9, 2700) == "1 - 12:34");
  CHECK(game_time(2700.0, 2700) == "2 - 00:00");
  CHECK(game_time(2700.0 + 3000.0, 2700) == "2 - 50:00");
  CHECK_THROWS_AS(game_time(1.0, 0.0), ArgumentError);

  const auto j = to_soccernet_json({"v", {{61.5, "goal", 0.9}, {2761.0, "corner", 0.8}}}, 2700);
  CHECK(j["predictions"][0]["gameTime"] == "1 - 01:01");
  CHECK(j["predictions"][0]["position_ms"] == 61500);
  CHECK(j["predictions"][1]["half"] == 2);
  CHECK(j["predictions"][1]["position_ms"] == 61000);
}
