#pragma once

// Single-model timeline cleanup: sliding-window anchors, central
// de-duplication of repeated captions, and the two threshold filters.

#include <span>
#include <string>
#include <vector>

#include "densecap/model.hpp"

namespace densecap {

struct WindowAnchor {
  std::string video_id;
  double center_s = 0.0;
  double size_s = 0.0;

  bool operator==(const WindowAnchor&) const = default;
};

/// For each window size w (ascending, duplicates dropped) emits centers
/// w/2, w/2 + stride, ... while center + w/2 <= duration.
std::vector<WindowAnchor> generate_anchors(const std::string& video_id,
                                           double video_duration_s,
                                           const PipelineConfig& cfg);

/// A maximal contiguous run of caption-equivalent candidates.
struct DuplicateRun {
  std::span<const CaptionCandidate> candidates;
  std::size_t representative_index = 0;

  const CaptionCandidate& representative() const { return candidates[representative_index]; }
};

bool captions_equivalent(const CaptionCandidate& a, const CaptionCandidate& b, DedupMode mode);

/// Middle index of a run of `length`; for even lengths `tiebreak` picks the
/// earlier or later of the two middles.
std::size_t middle_index(std::size_t length, RunTiebreak tiebreak);

/// Runs refer into `stream`, which must outlive them.
std::vector<DuplicateRun> find_duplicate_runs(std::span<const CaptionCandidate> stream,
                                              DedupMode mode, RunTiebreak tiebreak);

/// Keeps the middle candidate of every duplicate run. The stream must belong
/// to a single (video, model) pair and be sorted by timestamp.
std::vector<CaptionCandidate> dedupe_central(std::span<const CaptionCandidate> stream,
                                             const PipelineConfig& cfg);

/// Keeps candidates with confidence >= threshold.
std::vector<CaptionCandidate> filter_confidence(std::span<const CaptionCandidate> stream,
                                                double threshold);

/// Weighted arithmetic mean of the background-filter scores.
double fuse_background(std::span<const double> scores, std::span<const double> weights);

/// Keeps candidates whose fused background score is >= cfg.background_threshold.
std::vector<CaptionCandidate> filter_background(std::span<const CaptionCandidate> stream,
                                                const PipelineConfig& cfg);

}  // namespace densecap
