#include "densecap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <tuple>

#include "densecap/errors.hpp"

namespace densecap {

// --- alignment ------------------------------------------------------------

MatchSet align(std::span<const TimelineEvent> pred, std::span<const GroundTruthEvent> truth,
               double tolerance_s) {
  MatchSet m;
  std::size_t g = 0;
  for (std::size_t p = 0; p < pred.size(); ++p) {
    const double t = pred[p].timestamp_s;
    // References too early for this prediction are too early for every later one.
    while (g < truth.size() && t - truth[g].timestamp_s > tolerance_s) {
      m.unmatched_references.push_back(g++);
    }
    if (g < truth.size() && truth[g].timestamp_s - t <= tolerance_s) {
      m.pairs.emplace_back(p, g++);
    } else {
      m.unmatched_predictions.push_back(p);
    }
  }
  for (; g < truth.size(); ++g) m.unmatched_references.push_back(g);
  return m;
}

// --- CIDEr-D --------------------------------------------------------------

NGramCounts count_ngrams(const Tokens& tokens) {
  NGramCounts counts;
  for (int n = 1; n <= kCiderMaxN; ++n) {
    if (tokens.size() < static_cast<std::size_t>(n)) break;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      std::string key = tokens[i];
      for (int k = 1; k < n; ++k) {
        key.push_back('\x1f');
        key += tokens[i + k];
      }
      ++counts[n - 1][key];
    }
  }
  return counts;
}

NGramStats build_ngram_stats(std::span<const std::vector<Tokens>> references) {
  NGramStats stats;
  stats.corpus_size = references.size();
  for (const auto& refs : references) {
    std::array<std::set<std::string>, kCiderMaxN> seen;
    for (const auto& r : refs) {
      const auto counts = count_ngrams(r);
      for (int n = 0; n < kCiderMaxN; ++n) {
        for (const auto& [gram, c] : counts[n]) seen[n].insert(gram);
      }
    }
    for (int n = 0; n < kCiderMaxN; ++n) {
      for (const auto& gram : seen[n]) ++stats.document_frequency[n][gram];
    }
  }
  return stats;
}

CiderScorer::CiderScorer(std::span<const std::vector<Tokens>> references)
    : CiderScorer(build_ngram_stats(references)) {}

CiderScorer::CiderScorer(NGramStats stats) : stats_(std::move(stats)) {
  if (stats_.corpus_size > 0) log_corpus_size_ = std::log(static_cast<double>(stats_.corpus_size));
}

CiderScorer::Vector CiderScorer::tfidf(const Tokens& tokens) const {
  Vector v;
  const auto counts = count_ngrams(tokens);
  for (int n = 0; n < kCiderMaxN; ++n) {
    double sq = 0.0;
    for (const auto& [gram, tf] : counts[n]) {
      const auto it = stats_.document_frequency[n].find(gram);
      const double df = it == stats_.document_frequency[n].end() ? 0.0 : it->second;
      const double w = tf * (log_corpus_size_ - std::log(std::max(1.0, df)));
      v.weights[n].emplace(gram, w);
      sq += w * w;
    }
    v.norms[n] = std::sqrt(sq);
  }
  v.length = tokens.size();
  return v;
}

double CiderScorer::score(const Tokens& candidate, std::span<const Tokens> references) const {
  if (stats_.corpus_size == 0) throw ArgumentError("CIDEr needs a non-empty reference corpus");
  if (references.empty()) throw ArgumentError("CIDEr needs at least one reference per instance");

  const Vector cand = tfidf(candidate);
  double total = 0.0;
  for (const auto& ref_tokens : references) {
    const Vector ref = tfidf(ref_tokens);
    const double delta = static_cast<double>(cand.length) - static_cast<double>(ref.length);
    const double penalty = std::exp(-(delta * delta) / (2.0 * kCiderSigma * kCiderSigma));
    double sum = 0.0;
    for (int n = 0; n < kCiderMaxN; ++n) {
      double dot = 0.0;
      for (const auto& [gram, wc] : cand.weights[n]) {
        const auto it = ref.weights[n].find(gram);
        if (it == ref.weights[n].end()) continue;
        // CIDEr-D clips candidate weights at the reference weight.
        dot += std::min(wc, it->second) * it->second;
      }
      if (cand.norms[n] != 0.0 && ref.norms[n] != 0.0) dot /= cand.norms[n] * ref.norms[n];
      sum += dot * penalty;
    }
    total += sum / kCiderMaxN;
  }
  return 10.0 * total / static_cast<double>(references.size());
}

double cider_score(std::span<const Tokens> candidates,
                   std::span<const std::vector<Tokens>> references) {
  if (candidates.empty()) throw ArgumentError("CIDEr of an empty corpus");
  if (candidates.size() != references.size()) {
    throw ArgumentError("CIDEr candidates and references differ in count");
  }
  const CiderScorer scorer(references);
  double sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    sum += scorer.score(candidates[i], references[i]);
  }
  return sum / static_cast<double>(candidates.size());
}

// --- METEOR ---------------------------------------------------------------

namespace {

// Branch-and-bound over one-to-one unigram alignments. The search is exact
// unless it exhausts its node budget, after which the best alignment found
// so far is kept.
class MeteorAligner {
 public:
  MeteorAligner(const Tokens& candidate, const Tokens& reference)
      : used_(reference.size(), 0), current_(candidate.size(), -1), edges_(candidate.size()) {
    std::vector<std::string> cand_stems, ref_stems;
    for (const auto& t : candidate) cand_stems.push_back(porter_stem(t));
    for (const auto& t : reference) ref_stems.push_back(porter_stem(t));
    for (std::size_t i = 0; i < candidate.size(); ++i) {
      for (std::size_t j = 0; j < reference.size(); ++j) {
        if (candidate[i] == reference[j]) edges_[i].push_back({static_cast<int>(j), true});
      }
      for (std::size_t j = 0; j < reference.size(); ++j) {
        if (candidate[i] != reference[j] && cand_stems[i] == ref_stems[j]) {
          edges_[i].push_back({static_cast<int>(j), false});
        }
      }
    }
  }

  MeteorAlignment run() {
    best_.ref_index.assign(current_.size(), -1);
    search(0, {0, 0, 0, 0});
    return best_;
  }

 private:
  struct Edge {
    int ref;
    bool exact;
  };

  // matches, exact matches, chunks, displacement
  struct Tally {
    std::size_t matches, exact, chunks, displacement;
  };

  static bool better(const Tally& a, const Tally& b) {
    return std::make_tuple(a.matches, a.exact, b.chunks, b.displacement) >
           std::make_tuple(b.matches, b.exact, a.chunks, a.displacement);
  }

  void search(std::size_t i, Tally t) {
    if (++nodes_ > kNodeBudget) return;
    if (i == current_.size()) {
      if (!have_best_ || better(t, best_tally_)) {
        have_best_ = true;
        best_tally_ = t;
        best_.matches = t.matches;
        best_.exact_matches = t.exact;
        best_.chunks = t.chunks;
        best_.ref_index = current_;
      }
      return;
    }
    if (have_best_) {
      Tally bound = t;
      for (std::size_t k = i; k < current_.size(); ++k) {
        bool any = false, exact = false;
        for (const auto& e : edges_[k]) {
          if (used_[e.ref]) continue;
          any = true;
          exact = exact || e.exact;
        }
        bound.matches += any;
        bound.exact += exact;
      }
      if (!better(bound, best_tally_)) return;
    }

    const int prev = i > 0 ? current_[i - 1] : -1;
    auto try_edge = [&](const Edge& e) {
      const bool continues = prev >= 0 && e.ref == prev + 1;
      used_[e.ref] = 1;
      current_[i] = e.ref;
      const auto shift = static_cast<std::size_t>(std::abs(static_cast<long>(i) - e.ref));
      search(i + 1, {t.matches + 1, t.exact + (e.exact ? 1 : 0), t.chunks + (continues ? 0 : 1),
                     t.displacement + shift});
      current_[i] = -1;
      used_[e.ref] = 0;
    };

    // Extending the current chunk first tends to reach the optimum early.
    const Edge* extension = nullptr;
    for (const auto& e : edges_[i]) {
      if (!used_[e.ref] && prev >= 0 && e.ref == prev + 1) {
        extension = &e;
        break;
      }
    }
    if (extension) try_edge(*extension);
    for (const auto& e : edges_[i]) {
      if (used_[e.ref] || &e == extension) continue;
      try_edge(e);
    }
    search(i + 1, t);
  }

  static constexpr std::size_t kNodeBudget = 2'000'000;

  std::vector<char> used_;
  std::vector<int> current_;
  std::vector<std::vector<Edge>> edges_;
  MeteorAlignment best_;
  Tally best_tally_{};
  bool have_best_ = false;
  std::size_t nodes_ = 0;
};

}  // namespace

MeteorAlignment meteor_align(const Tokens& candidate, const Tokens& reference) {
  return MeteorAligner(candidate, reference).run();
}

double meteor_from_alignment(const MeteorAlignment& a, std::size_t candidate_len,
                             std::size_t reference_len) {
  if (a.matches == 0 || candidate_len == 0 || reference_len == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double precision = m / static_cast<double>(candidate_len);
  const double recall = m / static_cast<double>(reference_len);
  const double f_mean = 10.0 * precision * recall / (recall + 9.0 * precision);
  const double frag = static_cast<double>(a.chunks) / m;
  const double penalty = 0.5 * frag * frag * frag;
  return f_mean * (1.0 - penalty);
}

double meteor_score(const Tokens& candidate, std::span<const Tokens> references) {
  if (references.empty()) throw ArgumentError("METEOR needs at least one reference");
  double best = 0.0;
  if (candidate.empty()) return best;
  for (const auto& ref : references) {
    best = std::max(best, meteor_from_alignment(meteor_align(candidate, ref), candidate.size(),
                                                ref.size()));
  }
  return best;
}

// --- corpus evaluation ----------------------------------------------------

EvalReport evaluate(std::span<const TimelinePrediction> predictions,
                    std::span<const GroundTruth> truth, const PipelineConfig& cfg) {
  cfg.validate();

  std::map<std::string, const TimelinePrediction*> pred_by_video;
  for (const auto& p : predictions) {
    if (!pred_by_video.emplace(p.video_id, &p).second) {
      throw ValidationError("duplicate prediction entry for video " + p.video_id);
    }
  }
  std::map<std::string, const GroundTruth*> truth_by_video;
  for (const auto& g : truth) {
    if (!truth_by_video.emplace(g.video_id, &g).second) {
      throw ValidationError("duplicate ground-truth entry for video " + g.video_id);
    }
  }
  const bool overlap = std::any_of(truth_by_video.begin(), truth_by_video.end(),
                                   [&](const auto& kv) { return pred_by_video.contains(kv.first); });
  if (!overlap) throw ArgumentError("predictions and ground truth share no video");

  // IDF table over every annotated event, built once before scoring.
  std::vector<std::vector<Tokens>> reference_corpus;
  for (const auto& [vid, g] : truth_by_video) {
    for (const auto& e : g->events) reference_corpus.push_back({normalize_caption(e.reference)});
  }
  const CiderScorer cider(reference_corpus);

  EvalReport report;
  report.config_echo = cfg;
  double cider_sum = 0.0;
  double meteor_sum = 0.0;

  static const TimelinePrediction kEmpty{};
  for (const auto& [vid, g] : truth_by_video) {
    const auto it = pred_by_video.find(vid);
    const TimelinePrediction& pred = it == pred_by_video.end() ? kEmpty : *it->second;
    const MatchSet m = align(pred.events, g->events, cfg.matching_tolerance_s);

    VideoScores vs;
    vs.predictions = pred.events.size();
    vs.references = g->events.size();
    vs.matched = m.pairs.size();
    vs.instances = m.pairs.size() + m.unmatched_predictions.size() + m.unmatched_references.size();

    double video_cider = 0.0;
    double video_meteor = 0.0;
    for (const auto& [p, r] : m.pairs) {
      const Tokens cand = normalize_caption(pred.events[p].caption);
      const std::vector<Tokens> refs{normalize_caption(g->events[r].reference)};
      video_cider += cider.score(cand, refs);
      video_meteor += meteor_score(cand, refs);
    }
    if (vs.instances > 0) {
      vs.cider = video_cider / static_cast<double>(vs.instances);
      vs.meteor = video_meteor / static_cast<double>(vs.instances);
    }
    if (vs.predictions > 0) {
      vs.prediction_coverage = static_cast<double>(vs.matched) / static_cast<double>(vs.predictions);
    }
    if (vs.references > 0) {
      vs.reference_coverage = static_cast<double>(vs.matched) / static_cast<double>(vs.references);
    }

    cider_sum += video_cider;
    meteor_sum += video_meteor;
    report.instances += vs.instances;
    report.per_video.emplace(vid, vs);
  }
  if (report.instances > 0) {
    report.cider = cider_sum / static_cast<double>(report.instances);
    report.meteor = meteor_sum / static_cast<double>(report.instances);
  }
  return report;
}

nlohmann::ordered_json to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["cider"] = report.cider;
  j["meteor"] = report.meteor;
  j["instances"] = report.instances;
  j["metric_variants"] = {{"cider", "CIDEr-D (n=1..4, sigma=6, x10)"}, {"meteor", kMeteorVariant}};
  j["per_video"] = nlohmann::ordered_json::object();
  for (const auto& [vid, vs] : report.per_video) {
    nlohmann::ordered_json v;
    v["cider"] = vs.cider;
    v["meteor"] = vs.meteor;
    v["matched"] = vs.matched;
    v["predictions"] = vs.predictions;
    v["references"] = vs.references;
    v["instances"] = vs.instances;
    v["prediction_coverage"] = vs.prediction_coverage;
    v["reference_coverage"] = vs.reference_coverage;
    j["per_video"][vid] = std::move(v);
  }
  j["config"] = to_json(report.config_echo);
  return j;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

std::string fmt_number(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

}  // namespace

std::string to_csv(const EvalReport& report) {
  std::string out = "video_id,cider,meteor,matched,total\n";
  for (const auto& [vid, vs] : report.per_video) {
    out += csv_field(vid) + "," + fmt_number(vs.cider) + "," + fmt_number(vs.meteor) + "," +
           std::to_string(vs.matched) + "," + std::to_string(vs.instances) + "\n";
  }
  return out;
}

}  // namespace densecap
