#pragma once

// Dense-captioning evaluation: tolerance matching of predicted to annotated
// events, CIDEr-D and a METEOR variant over the matched captions, and corpus
// aggregation in which every unmatched event is a zero-score instance.

#include <array>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "densecap/model.hpp"
#include "densecap/text.hpp"

namespace densecap {

struct MatchSet {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (prediction, reference)
  std::vector<std::size_t> unmatched_predictions;
  std::vector<std::size_t> unmatched_references;
};

/// One-to-one matching of sorted predictions to sorted references with
/// |t_p - t_g| <= tolerance_s. Each prediction in turn takes the earliest
/// unmatched reference inside its window. On a line with one shared
/// tolerance that greedy choice yields a maximum-cardinality matching in
/// linear time.
MatchSet align(std::span<const TimelineEvent> pred, std::span<const GroundTruthEvent> truth,
               double tolerance_s);

// --- CIDEr-D --------------------------------------------------------------

inline constexpr int kCiderMaxN = 4;
inline constexpr double kCiderSigma = 6.0;

/// n-gram counts of one sentence, one map per order. Keys join tokens with \x1f.
using NGramCounts = std::array<std::map<std::string, int>, kCiderMaxN>;

NGramCounts count_ngrams(const Tokens& tokens);

/// Document frequencies over a reference corpus. Each document is the set of
/// n-grams across one instance's references.
struct NGramStats {
  NGramCounts document_frequency;
  std::size_t corpus_size = 0;
};

NGramStats build_ngram_stats(std::span<const std::vector<Tokens>> references);

class CiderScorer {
 public:
  explicit CiderScorer(std::span<const std::vector<Tokens>> references);
  explicit CiderScorer(NGramStats stats);

  /// CIDEr-D of one candidate against its references, in [0, 10].
  double score(const Tokens& candidate, std::span<const Tokens> references) const;

  const NGramStats& stats() const { return stats_; }

 private:
  struct Vector {
    std::array<std::map<std::string, double>, kCiderMaxN> weights;
    std::array<double, kCiderMaxN> norms{};
    std::size_t length = 0;
  };

  Vector tfidf(const Tokens& tokens) const;

  NGramStats stats_;
  double log_corpus_size_ = 0.0;
};

/// Mean CIDEr-D over instances, document frequencies taken from `references`.
double cider_score(std::span<const Tokens> candidates,
                   std::span<const std::vector<Tokens>> references);

// --- METEOR ---------------------------------------------------------------

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t exact_matches = 0;
  std::size_t chunks = 0;
  // ref_index[i] is the reference position aligned to candidate token i, or -1.
  std::vector<int> ref_index;
};

/// Unigram alignment through exact and Porter-stem equality. Preference
/// order: most matches, most exact matches, fewest chunks, smallest total
/// position displacement.
MeteorAlignment meteor_align(const Tokens& candidate, const Tokens& reference);

/// F_mean * (1 - 0.5 (chunks/matches)^3) with F_mean = 10PR / (R + 9P).
double meteor_from_alignment(const MeteorAlignment& a, std::size_t candidate_len,
                             std::size_t reference_len);

/// Best score over the references; 0 for an empty candidate or no match.
double meteor_score(const Tokens& candidate, std::span<const Tokens> references);

// --- corpus evaluation ----------------------------------------------------

inline constexpr const char* kMeteorVariant = "METEOR-s (exact + porter-stem stages, no synonyms)";

struct VideoScores {
  double cider = 0.0;   // mean over this video's instances
  double meteor = 0.0;
  std::size_t matched = 0;
  std::size_t predictions = 0;
  std::size_t references = 0;
  std::size_t instances = 0;  // matched + unmatched predictions + unmatched references
  double prediction_coverage = 0.0;  // matched / predictions
  double reference_coverage = 0.0;   // matched / references
};

struct EvalReport {
  double cider = 0.0;
  double meteor = 0.0;
  std::size_t instances = 0;
  std::map<std::string, VideoScores> per_video;
  PipelineConfig config_echo;
};

/// Evaluates every ground-truth video; a video without predictions counts
/// all its references as unmatched. Predictions for videos absent from the
/// ground truth are ignored. Corpus values are instance-weighted means of
/// the per-video values.
EvalReport evaluate(std::span<const TimelinePrediction> predictions,
                    std::span<const GroundTruth> truth, const PipelineConfig& cfg);

nlohmann::ordered_json to_json(const EvalReport& report);
/// Columns: video_id,cider,meteor,matched,total.
std::string to_csv(const EvalReport& report);

}  // namespace densecap
