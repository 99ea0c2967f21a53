#include "densecap/localize.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "densecap/errors.hpp"
#include "densecap/text.hpp"

namespace densecap {

namespace {

// Absorbs rounding in center + w/2 <= duration for non-dyadic strides.
constexpr double kFitSlack = 1e-9;

}  // namespace

std::vector<WindowAnchor> generate_anchors(const std::string& video_id, double video_duration_s,
                                           const PipelineConfig& cfg) {
  if (!(std::isfinite(video_duration_s) && video_duration_s > 0)) {
    throw ArgumentError("video duration must be positive");
  }
  cfg.validate();

  std::vector<double> sizes = cfg.window_sizes_s;
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());

  std::vector<WindowAnchor> anchors;
  for (double w : sizes) {
    const double half = w / 2.0;
    for (std::size_t k = 0;; ++k) {
      const double center = half + static_cast<double>(k) * cfg.window_stride_s;
      if (center + half > video_duration_s + kFitSlack) break;
      anchors.push_back({video_id, center, w});
    }
  }
  return anchors;
}

bool captions_equivalent(const CaptionCandidate& a, const CaptionCandidate& b, DedupMode mode) {
  if (mode == DedupMode::exact) return a.caption == b.caption;
  return normalize_caption(a.caption) == normalize_caption(b.caption);
}

std::size_t middle_index(std::size_t length, RunTiebreak tiebreak) {
  if (length == 0) throw ArgumentError("empty duplicate run");
  return tiebreak == RunTiebreak::earlier ? (length - 1) / 2 : length / 2;
}

std::vector<DuplicateRun> find_duplicate_runs(std::span<const CaptionCandidate> stream,
                                              DedupMode mode, RunTiebreak tiebreak) {
  std::vector<DuplicateRun> runs;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= stream.size(); ++i) {
    if (i == stream.size() || !captions_equivalent(stream[start], stream[i], mode)) {
      if (i > start) {
        const std::size_t len = i - start;
        runs.push_back({stream.subspan(start, len), middle_index(len, tiebreak)});
      }
      start = i;
    }
  }
  return runs;
}

std::vector<CaptionCandidate> dedupe_central(std::span<const CaptionCandidate> stream,
                                             const PipelineConfig& cfg) {
  for (std::size_t i = 1; i < stream.size(); ++i) {
    if (stream[i].video_id != stream[0].video_id || stream[i].model_id != stream[0].model_id) {
      throw PreconditionError("dedupe expects a single (video_id, model_id) stream");
    }
    if (stream[i].timestamp_s < stream[i - 1].timestamp_s) {
      std::ostringstream os;
      os << "stream " << stream[0].video_id << "/" << stream[0].model_id
         << " is not sorted by timestamp (" << stream[i - 1].timestamp_s << " before "
         << stream[i].timestamp_s << ")";
      throw PreconditionError(os.str());
    }
  }

  std::vector<CaptionCandidate> out;
  for (const auto& run : find_duplicate_runs(stream, cfg.dedup_mode, cfg.even_run_tiebreak)) {
    out.push_back(run.representative());
  }
  return out;
}

std::vector<CaptionCandidate> filter_confidence(std::span<const CaptionCandidate> stream,
                                                double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ArgumentError("confidence threshold must lie in [0,1]");
  }
  std::vector<CaptionCandidate> out;
  std::copy_if(stream.begin(), stream.end(), std::back_inserter(out),
               [&](const CaptionCandidate& c) { return c.confidence >= threshold; });
  return out;
}

double fuse_background(std::span<const double> scores, std::span<const double> weights) {
  if (scores.empty()) throw ArgumentError("no background scores to fuse");
  if (scores.size() != weights.size()) {
    throw ArgumentError("background scores and weights differ in length (" +
                        std::to_string(scores.size()) + " vs " +
                        std::to_string(weights.size()) + ")");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!(weights[i] > 0)) throw ArgumentError("background weights must be positive");
    num += weights[i] * scores[i];
    den += weights[i];
  }
  const double mean = num / den;
  // Rounding can push the mean a hair outside the score range.
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  return std::clamp(mean, *lo, *hi);
}

std::vector<CaptionCandidate> filter_background(std::span<const CaptionCandidate> stream,
                                                const PipelineConfig& cfg) {
  if (!(cfg.background_threshold >= 0.0 && cfg.background_threshold <= 1.0)) {
    throw ArgumentError("background threshold must lie in [0,1]");
  }
  std::vector<CaptionCandidate> out;
  for (const auto& c : stream) {
    if (c.background_scores.size() != cfg.background_weights.size()) {
      std::ostringstream os;
      os << "candidate (video_id=" << c.video_id << ", model_id=" << c.model_id
         << ", timestamp_s=" << c.timestamp_s << ") has " << c.background_scores.size()
         << " background scores, expected " << cfg.background_weights.size();
      throw ValidationError(os.str());
    }
    if (fuse_background(c.background_scores, cfg.background_weights) >= cfg.background_threshold) {
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace densecap
