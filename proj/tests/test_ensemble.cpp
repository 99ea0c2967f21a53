#include <algorithm>
#include <random>

#include "doctest.h"
#include "densecap/ensemble.hpp"
#include "densecap/errors.hpp"
#include "densecap/metrics.hpp"

using namespace densecap;

namespace {

CaptionCandidate cand(const std::string& model, double t, const std::string& caption, double conf) {
  return {"v", model, t, caption, conf, {}};
}

EnsembleWeights weights(std::map<std::string, double> w) { return EnsembleWeights{std::move(w)}; }

TimestampGroup group_of(std::vector<GroupEntry> entries) {
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.model_id < b.model_id; });
  return {"v", 0.0, std::move(entries)};
}

}  // namespace

TEST_CASE("grouping with a tolerance") {
  const std::vector<std::vector<CaptionCandidate>> streams{
      {cand("a", 100.0, "x", 0.5), cand("a", 103.0, "z", 0.5)}, {cand("b", 100.4, "y", 0.5)}};
  const auto g = group_by_timestamp(streams, 0.5);
  REQUIRE(g.groups.size() == 2);
  CHECK(g.groups[0].timestamp_s == 100.0);
  CHECK(g.groups[0].entries.size() == 2);
  CHECK(g.groups[1].timestamp_s == 103.0);
  CHECK(g.warnings.empty());

  const auto exact = group_by_timestamp(streams, 0.0);
  CHECK(exact.groups.size() == 3);
}

TEST_CASE("grouping anchors at the earliest member") {
  // 0.0, 0.4, 0.8 with tolerance 0.5: 0.8 is too far from the anchor.
  const std::vector<std::vector<CaptionCandidate>> streams{
      {cand("a", 0.0, "x", 0.5)}, {cand("b", 0.4, "y", 0.5)}, {cand("c", 0.8, "z", 0.5)}};
  const auto g = group_by_timestamp(streams, 0.5);
  REQUIRE(g.groups.size() == 2);
  CHECK(g.groups[1].timestamp_s == 0.8);
}

TEST_CASE("grouping a single stream keeps every candidate") {
  const std::vector<std::vector<CaptionCandidate>> streams{
      {cand("a", 1, "x", 0.5), cand("a", 2, "y", 0.5), cand("a", 3, "z", 0.5)}};
  CHECK(group_by_timestamp(streams, 0.0).groups.size() == 3);
}

TEST_CASE("a model landing twice in a group keeps its best candidate and warns") {
  const std::vector<std::vector<CaptionCandidate>> streams{
      {cand("a", 10.0, "low", 0.3), cand("a", 10.2, "high", 0.8)}, {cand("b", 10.1, "b", 0.5)}};
  const auto g = group_by_timestamp(streams, 0.5);
  REQUIRE(g.groups.size() == 1);
  REQUIRE(g.groups[0].entries.size() == 2);
  CHECK(g.groups[0].entries[0] == GroupEntry{"a", "high", 0.8});
  REQUIRE(g.warnings.size() == 1);
  CHECK(g.warnings[0].find("model a") != std::string::npos);
}

TEST_CASE("grouping rejects unsorted streams and negative tolerance") {
  const std::vector<std::vector<CaptionCandidate>> unsorted{{cand("a", 5, "x", 0.5), cand("a", 1, "y", 0.5)}};
  CHECK_THROWS_AS(group_by_timestamp(unsorted, 0.0), PreconditionError);
  CHECK_THROWS_AS(group_by_timestamp({}, -1.0), ArgumentError);
}

TEST_CASE("top-1 selection with confidence weights") {
  // 0.90 * 1.0 = 0.90, 0.95 * 0.85 = 0.8075, 0.92 * 0.95 = 0.874.
  const auto g = group_of({{"blip-base", "goal", 0.90},
                           {"blip-large", "shot", 0.95},
                           {"git-large", "header", 0.92}});
  const auto w = weights({{"blip-base", 1.0}, {"blip-large", 0.85}, {"git-large", 0.95}});
  const auto s = select_top1(g, w);
  CHECK(s.model_id == "blip-base");
  CHECK(s.caption == "goal");
  CHECK(s.weighted_score == doctest::Approx(0.90));

  // Without weights the most confident model wins.
  const auto u = weights({{"blip-base", 1.0}, {"blip-large", 1.0}, {"git-large", 1.0}});
  CHECK(select_top1(g, u).model_id == "blip-large");
}

TEST_CASE("top-1 ties go to the smallest model id") {
  const auto g = group_of({{"zeta", "z", 0.5}, {"alpha", "a", 0.5}, {"mid", "m", 0.25}});
  const auto w = weights({{"zeta", 1.0}, {"alpha", 1.0}, {"mid", 2.0}});
  CHECK(select_top1(g, w).model_id == "alpha");
}

TEST_CASE("top-1 selection errors") {
  const auto g = group_of({{"a", "x", 0.5}});
  CHECK_THROWS_AS(select_top1(g, weights({{"b", 1.0}})), ConfigError);
  CHECK_THROWS_AS(select_top1(TimestampGroup{}, weights({{"a", 1.0}})), ArgumentError);
}

TEST_CASE("selection is invariant to a common weight scale") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<GroupEntry> entries;
    std::map<std::string, double> w, scaled;
    const double k = 0.05 + unit(rng) * 20;
    for (int m = 0, n = 1 + static_cast<int>(rng() % 5); m < n; ++m) {
      const std::string id = "m" + std::to_string(m);
      entries.push_back({id, "c" + std::to_string(m), unit(rng)});
      w[id] = 0.1 + unit(rng);
      scaled[id] = w[id] * k;
    }
    const auto g = group_of(entries);
    CHECK(select_top1(g, weights(w)).model_id == select_top1(g, weights(scaled)).model_id);

    std::map<std::string, double> equal;
    for (const auto& e : entries) equal[e.model_id] = 0.7;
    const auto best = std::max_element(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      return a.confidence < b.confidence || (a.confidence == b.confidence && a.model_id > b.model_id);
    });
    CHECK(select_top1(g, weights(equal)).model_id == best->model_id);
  }
}

TEST_CASE("ensemble of one stream is that stream") {
  const std::vector<std::vector<CaptionCandidate>> streams{
      {cand("a", 1, "x", 0.4), cand("a", 2, "y", 0.6)}};
  const auto t = ensemble_timelines("v", streams, weights({{"a", 1.0}}), PipelineConfig{});
  CHECK(t == TimelinePrediction{"v", {{1, "x", 0.4}, {2, "y", 0.6}}});
}

TEST_CASE("ensemble of disjoint streams is their time-ordered union") {
  const std::vector<std::vector<CaptionCandidate>> streams{
      {cand("a", 1, "x", 0.4), cand("a", 5, "z", 0.6)}, {cand("b", 3, "y", 0.9)}};
  const auto t = ensemble_timelines("v", streams, weights({{"a", 1.0}, {"b", 0.5}}), PipelineConfig{});
  REQUIRE(t.events.size() == 3);
  CHECK(t.events[1] == TimelineEvent{3, "y", 0.45});
}

TEST_CASE("event confidence is clamped to the unit interval") {
  const std::vector<std::vector<CaptionCandidate>> streams{{cand("a", 1, "x", 0.8)}};
  const auto t = ensemble_timelines("v", streams, weights({{"a", 2.0}}), PipelineConfig{});
  CHECK(t.events[0].confidence == 1.0);
}

// --- grid search ------------------------------------------------------------

namespace {

struct DevSet {
  std::vector<VideoStreams> dev;
  std::vector<GroundTruth> truth;
};

// m1 is right at t=10, m2 is right at t=50; each is confidently wrong at the other.
DevSet small_dev() {
  DevSet d;
  d.dev.push_back({"v",
                   {{cand("m1", 10, "goal for [TEAM]", 0.9), cand("m1", 50, "yellow card", 0.9)},
                    {cand("m2", 10, "corner kick", 0.8), cand("m2", 50, "a substitution is made", 0.8)}}});
  d.truth.push_back({"v", {{"v", 10, "goal for [TEAM]"}, {"v", 50, "a substitution is made"}}});
  return d;
}

}  // namespace

TEST_CASE("grid point enumeration order") {
  const WeightGrid grid{{"a", {1, 2}}, {"b", {3, 4, 5}}};
  CHECK(grid_cardinality(grid) == 6);
  CHECK(grid_point(grid, 0).weights == std::map<std::string, double>{{"a", 1}, {"b", 3}});
  CHECK(grid_point(grid, 1).weights == std::map<std::string, double>{{"a", 1}, {"b", 4}});
  CHECK(grid_point(grid, 3).weights == std::map<std::string, double>{{"a", 2}, {"b", 3}});
  CHECK(grid_cardinality({}) == 0);
}

TEST_CASE("grid search evaluates every point") {
  const auto d = small_dev();
  const WeightGrid grid{{"m1", {1.0}}, {"m2", {0.7, 0.82}}};
  const auto r = grid_search_weights(d.dev, d.truth, grid, Objective::meteor, PipelineConfig{});
  CHECK(r.trace.size() == 2);
  CHECK(r.objective == Objective::meteor);
  // Both points pick m1 everywhere, so they tie and the first wins.
  CHECK(r.trace[0].score == r.trace[1].score);
  CHECK(r.best_weights.weights.at("m2") == 0.7);
}

TEST_CASE("grid search best score dominates the trace and matches a direct evaluation") {
  const auto d = small_dev();
  const WeightGrid grid{{"m1", {0.5, 1.0}}, {"m2", {0.5, 1.0, 2.0}}};
  for (auto objective : {Objective::meteor, Objective::cider}) {
    const auto r = grid_search_weights(d.dev, d.truth, grid, objective, PipelineConfig{});
    REQUIRE(r.trace.size() == 6);
    for (const auto& p : r.trace) {
      CHECK(p.score <= r.best_score);
      CHECK(p.score == score_weights(d.dev, d.truth, p.weights, objective, PipelineConfig{}));
    }
  }
}

TEST_CASE("threaded grid search equals the sequential one") {
  const auto d = small_dev();
  const WeightGrid grid{{"m1", {0.3, 0.6, 0.9}}, {"m2", {0.2, 0.5, 0.8}}};
  const auto seq = grid_search_weights(d.dev, d.truth, grid, Objective::cider, PipelineConfig{}, 1);
  const auto par = grid_search_weights(d.dev, d.truth, grid, Objective::cider, PipelineConfig{}, 4);
  CHECK(seq.best_weights == par.best_weights);
  CHECK(seq.best_score == par.best_score);
  REQUIRE(seq.trace.size() == par.trace.size());
  for (std::size_t i = 0; i < seq.trace.size(); ++i) {
    CHECK(seq.trace[i].weights == par.trace[i].weights);
    CHECK(seq.trace[i].score == par.trace[i].score);
  }
}

TEST_CASE("grid search argument errors") {
  const auto d = small_dev();
  CHECK_THROWS_AS(grid_search_weights(d.dev, d.truth, {}, Objective::meteor, PipelineConfig{}),
                  ArgumentError);
  CHECK_THROWS_AS(grid_search_weights(d.dev, d.truth, {{"m1", {}}, {"m2", {1.0}}},
                                      Objective::meteor, PipelineConfig{}),
                  ArgumentError);
  CHECK_THROWS_AS(grid_search_weights(d.dev, d.truth, {{"m1", {0.0}}, {"m2", {1.0}}},
                                      Objective::meteor, PipelineConfig{}),
                  ArgumentError);
  CHECK_THROWS_AS(grid_search_weights(d.dev, d.truth, {{"m1", {1.0}}}, Objective::meteor,
                                      PipelineConfig{}),
                  ConfigError);
  CHECK_THROWS_AS(parse_objective("bleu"), ConfigError);
}

TEST_CASE("group_streams_by_video sorts videos and models") {
  const std::vector<CaptionCandidate> all{{"w", "b", 1, "x", 0.5, {}},
                                          {"v", "b", 1, "x", 0.5, {}},
                                          {"v", "a", 1, "x", 0.5, {}}};
  const auto g = group_streams_by_video(all);
  REQUIRE(g.size() == 2);
  CHECK(g[0].video_id == "v");
  CHECK(g[0].streams[0][0].model_id == "a");
}
