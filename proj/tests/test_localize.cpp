#include <algorithm>
#include <random>

#include "doctest.h"
#include "densecap/errors.hpp"
#include "densecap/localize.hpp"

using namespace densecap;

namespace {

CaptionCandidate cand(double t, std::string caption, double conf = 0.5,
                      std::vector<double> bg = {}) {
  return {"v", "m", t, std::move(caption), conf, std::move(bg)};
}

std::vector<double> centers(const std::vector<WindowAnchor>& anchors, double size) {
  std::vector<double> out;
  for (const auto& a : anchors) {
    if (a.size_s == size) out.push_back(a.center_s);
  }
  return out;
}

}  // namespace

TEST_CASE("anchors for a 64 s video with the default 32 s window") {
  PipelineConfig cfg;
  const auto anchors = generate_anchors("v", 64.0, cfg);
  REQUIRE(anchors.size() == 33);
  CHECK(anchors.front().center_s == 16.0);
  CHECK(anchors.back().center_s == 48.0);
  for (std::size_t i = 1; i < anchors.size(); ++i) {
    CHECK(anchors[i].center_s - anchors[i - 1].center_s == doctest::Approx(1.0));
  }
}

TEST_CASE("anchors that do not fit produce nothing") {
  CHECK(generate_anchors("v", 10.0, PipelineConfig{}).empty());
}

TEST_CASE("multi-size anchors") {
  PipelineConfig cfg;
  cfg.window_sizes_s = {32.0, 16.0};
  cfg.window_stride_s = 16.0;
  const auto anchors = generate_anchors("v", 64.0, cfg);
  CHECK(centers(anchors, 16.0) == std::vector<double>{8, 24, 40, 56});
  CHECK(centers(anchors, 32.0) == std::vector<double>{16, 32, 48});
  // Ordered by size first.
  CHECK(anchors.front().size_s == 16.0);
  CHECK(anchors.back().size_s == 32.0);
}

TEST_CASE("anchors reject a non-positive duration") {
  CHECK_THROWS_AS(generate_anchors("v", 0.0, PipelineConfig{}), ArgumentError);
  CHECK_THROWS_AS(generate_anchors("v", -3.0, PipelineConfig{}), ArgumentError);
}

TEST_CASE("anchors fit with a non-dyadic stride") {
  PipelineConfig cfg;
  cfg.window_sizes_s = {1.0};
  cfg.window_stride_s = 0.1;
  // centers 0.5, 0.6, ..., 2.5
  CHECK(generate_anchors("v", 3.0, cfg).size() == 21);
}

TEST_CASE("central dedup keeps the middle of an odd run") {
  std::vector<CaptionCandidate> s;
  for (double t : {10, 15, 20, 25, 30}) s.push_back(cand(t, "corner kick"));
  const auto out = dedupe_central(s, PipelineConfig{});
  REQUIRE(out.size() == 1);
  CHECK(out[0].timestamp_s == 20);
}

TEST_CASE("central dedup on A,A,B,A") {
  std::vector<CaptionCandidate> s{cand(1, "A"), cand(2, "A"), cand(3, "B"), cand(4, "A")};
  const auto out = dedupe_central(s, PipelineConfig{});
  REQUIRE(out.size() == 3);
  CHECK(out[0].timestamp_s == 1);
  CHECK(out[1].caption == "B");
  CHECK(out[2].timestamp_s == 4);

  PipelineConfig later;
  later.even_run_tiebreak = RunTiebreak::later;
  CHECK(dedupe_central(s, later)[0].timestamp_s == 2);
}

TEST_CASE("central dedup keeps the representative's own fields") {
  std::vector<CaptionCandidate> s{cand(1, "goal", 0.2), cand(2, "goal", 0.9), cand(3, "goal", 0.4)};
  const auto out = dedupe_central(s, PipelineConfig{});
  REQUIRE(out.size() == 1);
  CHECK(out[0] == s[1]);
}

TEST_CASE("dedup mode decides caption equivalence") {
  std::vector<CaptionCandidate> s{cand(1, "Goal by [PLAYER]!"), cand(2, "goal by [player]"),
                                  cand(3, "GOAL BY [PLAYER].")};
  CHECK(dedupe_central(s, PipelineConfig{}).size() == 1);
  PipelineConfig exact;
  exact.dedup_mode = DedupMode::exact;
  CHECK(dedupe_central(s, exact).size() == 3);
}

TEST_CASE("dedup preconditions") {
  CHECK(dedupe_central({}, PipelineConfig{}).empty());
  std::vector<CaptionCandidate> unsorted{cand(5, "a"), cand(3, "b")};
  CHECK_THROWS_AS(dedupe_central(unsorted, PipelineConfig{}), PreconditionError);
  std::vector<CaptionCandidate> mixed{cand(1, "a"), cand(2, "b")};
  mixed[1].model_id = "other";
  CHECK_THROWS_AS(dedupe_central(mixed, PipelineConfig{}), PreconditionError);
}

TEST_CASE("dedup properties over random streams") {
  std::mt19937 rng(1234);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<CaptionCandidate> s;
    const int n = static_cast<int>(rng() % 30);
    for (int i = 0; i < n; ++i) {
      s.push_back(cand(i, std::string(1, static_cast<char>('a' + rng() % 3))));
    }
    for (auto tb : {RunTiebreak::earlier, RunTiebreak::later}) {
      PipelineConfig cfg;
      cfg.even_run_tiebreak = tb;
      const auto once = dedupe_central(s, cfg);
      CHECK(dedupe_central(once, cfg) == once);
      for (std::size_t i = 1; i < once.size(); ++i) CHECK(once[i].caption != once[i - 1].caption);
      // Output is a subsequence of the input.
      auto it = s.begin();
      for (const auto& c : once) {
        it = std::find(it, s.end(), c);
        REQUIRE(it != s.end());
        ++it;
      }
    }
  }
}

TEST_CASE("middle index rule") {
  CHECK(middle_index(1, RunTiebreak::earlier) == 0);
  CHECK(middle_index(2, RunTiebreak::earlier) == 0);
  CHECK(middle_index(2, RunTiebreak::later) == 1);
  CHECK(middle_index(5, RunTiebreak::earlier) == 2);
  CHECK(middle_index(5, RunTiebreak::later) == 2);
  CHECK(middle_index(6, RunTiebreak::earlier) == 2);
  CHECK(middle_index(6, RunTiebreak::later) == 3);
  CHECK_THROWS_AS(middle_index(0, RunTiebreak::earlier), ArgumentError);
}

TEST_CASE("confidence filter") {
  std::vector<CaptionCandidate> s{cand(1, "a", 0.86), cand(2, "b", 0.875), cand(3, "c", 0.88)};
  const auto kept = filter_confidence(s, 0.875);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].confidence == 0.875);
  CHECK(kept[1].confidence == 0.88);
  CHECK(filter_confidence(s, 0.0) == s);

  std::vector<CaptionCandidate> edge{cand(1, "a", 1.0), cand(2, "b", 0.999)};
  CHECK(filter_confidence(edge, 1.0).size() == 1);
  CHECK_THROWS_AS(filter_confidence(s, 1.01), ArgumentError);
  CHECK_THROWS_AS(filter_confidence(s, -0.1), ArgumentError);
}

TEST_CASE("background fusion") {
  const std::vector<double> three{0.9, 0.85, 0.95};
  const std::vector<double> ones{1, 1, 1};
  CHECK(fuse_background(three, ones) == doctest::Approx(0.9).epsilon(1e-15));
  const std::vector<double> single{0.42};
  const std::vector<double> w{7.5};
  CHECK(fuse_background(single, w) == 0.42);
  const std::vector<double> two{0.8, 0.9};
  const std::vector<double> w31{3, 1};
  CHECK(fuse_background(two, w31) == doctest::Approx(0.825).epsilon(1e-15));

  const std::vector<double> none;
  CHECK_THROWS_AS(fuse_background(none, none), ArgumentError);
  CHECK_THROWS_AS(fuse_background(three, w31), ArgumentError);
}

TEST_CASE("background fusion is invariant to weight rescaling") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 5;
    std::vector<double> s(n), w(n), scaled(n);
    const double k = 0.01 + unit(rng) * 100;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = unit(rng);
      w[i] = 0.01 + unit(rng) * 10;
      scaled[i] = w[i] * k;
    }
    const double f = fuse_background(s, w);
    CHECK(f == doctest::Approx(fuse_background(s, scaled)).epsilon(1e-12));
    CHECK(f >= *std::min_element(s.begin(), s.end()));
    CHECK(f <= *std::max_element(s.begin(), s.end()));
  }
}

TEST_CASE("background filter threshold boundary") {
  PipelineConfig cfg;
  cfg.background_weights = {1.0};
  cfg.background_threshold = 0.875;
  std::vector<CaptionCandidate> s{cand(1, "a", 0.5, {0.874}), cand(2, "b", 0.5, {0.875})};
  const auto kept = filter_background(s, cfg);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].caption == "b");

  cfg.background_threshold = 0.0;
  CHECK(filter_background(s, cfg) == s);
}

TEST_CASE("background filter names the candidate missing scores") {
  PipelineConfig cfg;
  std::vector<CaptionCandidate> s{cand(12.5, "a", 0.5, {})};
  try {
    filter_background(s, cfg);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("timestamp_s=12.5") != std::string::npos);
  }
}
