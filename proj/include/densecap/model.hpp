#pragma once

// Domain types shared by every pipeline stage, plus the line-delimited file
// formats they are read from and written to.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace densecap {

/// One model's caption at one timestamp of one video.
struct CaptionCandidate {
  std::string video_id;
  std::string model_id;
  double timestamp_s = 0.0;
  std::string caption;
  double confidence = 0.0;
  // Empty, or one score per background-filter model.
  std::vector<double> background_scores;

  bool operator==(const CaptionCandidate&) const = default;
};

struct TimelineEvent {
  double timestamp_s = 0.0;
  std::string caption;
  double confidence = 0.0;

  bool operator==(const TimelineEvent&) const = default;
};

/// Final per-video output. Timestamps are strictly increasing.
struct TimelinePrediction {
  std::string video_id;
  std::vector<TimelineEvent> events;

  bool operator==(const TimelinePrediction&) const = default;
};

struct GroundTruthEvent {
  std::string video_id;
  double timestamp_s = 0.0;
  std::string reference;

  bool operator==(const GroundTruthEvent&) const = default;
};

/// All annotated events of one video, sorted by timestamp.
struct GroundTruth {
  std::string video_id;
  std::vector<GroundTruthEvent> events;

  bool operator==(const GroundTruth&) const = default;
};

enum class DedupMode { exact, normalized };
enum class RunTiebreak { earlier, later };

struct PipelineConfig {
  std::vector<double> window_sizes_s{32.0};
  double window_stride_s = 1.0;
  DedupMode dedup_mode = DedupMode::normalized;
  double confidence_threshold = 0.0;
  double background_threshold = 0.875;
  std::vector<double> background_weights{1.0, 1.0, 1.0};
  // Empty means every model is weighted 1.0.
  std::map<std::string, double> ensemble_weights;
  RunTiebreak even_run_tiebreak = RunTiebreak::earlier;
  double matching_tolerance_s = 30.0;
  double grouping_tolerance_s = 0.0;

  /// Throws ConfigError when a threshold leaves [0,1] or a weight/size is not positive.
  void validate() const;
};

nlohmann::ordered_json to_json(const PipelineConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

DedupMode parse_dedup_mode(std::string_view s);
RunTiebreak parse_tiebreak(std::string_view s);
const char* to_string(DedupMode m) noexcept;
const char* to_string(RunTiebreak t) noexcept;

// --- validation -----------------------------------------------------------

/// Throws ValidationError describing the first violated invariant.
void validate(const CaptionCandidate& c);
void validate(const TimelinePrediction& p);
void validate(const GroundTruthEvent& e);

// --- candidate streams ----------------------------------------------------

/// Candidates of one (video_id, model_id) pair, in input order.
struct CandidateStream {
  std::string video_id;
  std::string model_id;
  std::vector<CaptionCandidate> candidates;
};

/// Splits candidates into per-(video, model) streams ordered by first appearance.
std::vector<CandidateStream> split_streams(std::span<const CaptionCandidate> candidates);
std::vector<CaptionCandidate> join_streams(std::span<const CandidateStream> streams);

// --- file formats ---------------------------------------------------------

CaptionCandidate candidate_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const CaptionCandidate& c);
nlohmann::ordered_json to_json(const TimelinePrediction& p);
TimelinePrediction timeline_from_json(const nlohmann::json& j);

/// Reads a candidate file (one JSON object per line). Blank lines are skipped.
/// When `expected_models` is given, any other model_id is a validation error.
std::vector<CaptionCandidate> ingest_candidates(
    const std::filesystem::path& path,
    const std::optional<std::set<std::string>>& expected_models = std::nullopt);

void write_candidates(std::span<const CaptionCandidate> candidates,
                      const std::filesystem::path& path);

/// Writes one prediction line. Events must be strictly increasing in time.
void write_timeline(const TimelinePrediction& pred, const std::filesystem::path& path);
void write_timelines(std::span<const TimelinePrediction> preds,
                     const std::filesystem::path& path);
std::vector<TimelinePrediction> read_timelines(const std::filesystem::path& path);

/// Ground truth lines: {"video_id", "predictions": [{"timestamp_s", "reference"}]}.
/// "annotations" is accepted as an alias of "predictions" on input.
std::vector<GroundTruth> read_ground_truth(const std::filesystem::path& path);
void write_ground_truth(std::span<const GroundTruth> truth, const std::filesystem::path& path);

/// SoccerNet-style export: timestamps become "half - mm:ss" game times, the
/// second half starting at `half_boundary_s`.
std::string game_time(double timestamp_s, double half_boundary_s);
nlohmann::ordered_json to_soccernet_json(const TimelinePrediction& p, double half_boundary_s);

// --- file helpers ---------------------------------------------------------

std::string read_file(const std::filesystem::path& path);
/// Writes via a sibling temp file and rename, so readers never see partial output.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace densecap
