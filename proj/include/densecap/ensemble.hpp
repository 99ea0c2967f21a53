#pragma once

// Multi-model fusion: per-model confidence weights with top-1 selection per
// timestamp group, exhaustive grid search over those weights, and optional
// caption merging through an external text-generation service.

#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "densecap/model.hpp"

namespace densecap {

class TextGenerationClient;

/// Positive multipliers applied to each model's confidences.
struct EnsembleWeights {
  std::map<std::string, double> weights;

  /// Throws ConfigError if the model has no weight.
  double at(const std::string& model_id) const;
  void validate() const;

  /// Every model weighted 1.0.
  static EnsembleWeights uniform(std::span<const std::string> model_ids);

  bool operator==(const EnsembleWeights&) const = default;
};

struct GroupEntry {
  std::string model_id;
  std::string caption;
  double confidence = 0.0;

  bool operator==(const GroupEntry&) const = default;
};

/// Candidates of several models that describe the same moment. Entries are
/// sorted by model_id with at most one entry per model.
struct TimestampGroup {
  std::string video_id;
  double timestamp_s = 0.0;
  std::vector<GroupEntry> entries;
};

struct Grouping {
  std::vector<TimestampGroup> groups;
  std::vector<std::string> warnings;
};

/// Greedy left-to-right clustering over the merged streams: a group is
/// anchored at its earliest member and absorbs every later candidate within
/// `tolerance_s` of that anchor. When a model lands in a group twice, the
/// higher-confidence candidate stays and a warning is recorded.
Grouping group_by_timestamp(std::span<const std::vector<CaptionCandidate>> streams,
                            double tolerance_s);

struct Selection {
  std::string model_id;
  std::string caption;
  double weighted_score = 0.0;

  bool operator==(const Selection&) const = default;
};

/// Entry maximizing confidence * weight; ties go to the smallest model_id.
Selection select_top1(const TimestampGroup& group, const EnsembleWeights& w);

TimelinePrediction timeline_from_selections(const std::string& video_id,
                                            std::span<const TimestampGroup> groups,
                                            std::span<const Selection> selections);

/// Groups one video's cleaned per-model streams and keeps the top-1 caption
/// of each group. Event confidence is the weighted score clamped to [0,1].
TimelinePrediction ensemble_timelines(const std::string& video_id,
                                      std::span<const std::vector<CaptionCandidate>> streams,
                                      const EnsembleWeights& w, const PipelineConfig& cfg);

// --- grid search ----------------------------------------------------------

enum class Objective { meteor, cider };

Objective parse_objective(std::string_view s);
const char* to_string(Objective o) noexcept;

/// One video's per-model streams, as fed to the ensemble.
struct VideoStreams {
  std::string video_id;
  std::vector<std::vector<CaptionCandidate>> streams;
};

std::vector<VideoStreams> group_streams_by_video(std::span<const CaptionCandidate> candidates);

/// Candidate weights per model.
using WeightGrid = std::map<std::string, std::vector<double>>;

struct GridPoint {
  EnsembleWeights weights;
  double score = 0.0;
};

struct GridSearchResult {
  EnsembleWeights best_weights;
  double best_score = 0.0;
  Objective objective = Objective::meteor;
  std::vector<GridPoint> trace;
};

std::size_t grid_cardinality(const WeightGrid& grid);

/// Weights of the grid point with the given row-major index; the model with
/// the smallest id varies slowest.
EnsembleWeights grid_point(const WeightGrid& grid, std::size_t index);

/// Ensembles every dev video with `w` and evaluates against `truth`.
double score_weights(std::span<const VideoStreams> dev, std::span<const GroundTruth> truth,
                     const EnsembleWeights& w, Objective objective, const PipelineConfig& cfg);

/// Evaluates every point of the Cartesian product. The trace is in grid
/// order whatever the thread count; ties keep the earliest point.
GridSearchResult grid_search_weights(std::span<const VideoStreams> dev,
                                     std::span<const GroundTruth> truth, const WeightGrid& grid,
                                     Objective objective, const PipelineConfig& cfg,
                                     unsigned threads = 1);

// --- LLM caption merging --------------------------------------------------

/// Thread-safe append-only log of notable pipeline events.
class RunLog {
 public:
  void add(std::string entry);
  std::vector<std::string> entries() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::string> entries_;
};

/// Substitutes the newline-joined group captions for every "{captions}".
std::string render_prompt(std::string_view prompt_template, const TimestampGroup& group);

struct MergeResult {
  std::string caption;
  bool merged = false;  // false when the top-1 fallback was used
};

/// Asks `client` to fuse the group's captions. With no client, or on any
/// transport failure, falls back to the top-1 caption and logs why.
MergeResult merge_with_llm(const TimestampGroup& group, TextGenerationClient* client,
                           std::string_view prompt_template, const EnsembleWeights& w,
                           RunLog& log);

struct MergedTimeline {
  TimelinePrediction timeline;
  std::size_t merged = 0;
};

/// Top-1 ensemble whose captions are then merged group by group, with at
/// most `max_in_flight` concurrent requests. Merged events keep the top-1
/// weighted score as confidence.
MergedTimeline merge_timeline(const std::string& video_id, std::span<const TimestampGroup> groups,
                              const EnsembleWeights& w, TextGenerationClient* client,
                              std::string_view prompt_template, std::size_t max_in_flight,
                              RunLog& log);

}  // namespace densecap
