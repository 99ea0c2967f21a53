#include "densecap/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <sstream>
#include <thread>

#include "densecap/errors.hpp"
#include "densecap/llm.hpp"
#include "densecap/metrics.hpp"

namespace densecap {

// --- weights --------------------------------------------------------------

double EnsembleWeights::at(const std::string& model_id) const {
  const auto it = weights.find(model_id);
  if (it == weights.end()) throw ConfigError("no ensemble weight for model '" + model_id + "'");
  return it->second;
}

void EnsembleWeights::validate() const {
  if (weights.empty()) throw ConfigError("ensemble weights name no model");
  for (const auto& [model, w] : weights) {
    if (!(std::isfinite(w) && w > 0)) {
      throw ConfigError("ensemble weight for '" + model + "' must be positive");
    }
  }
}

EnsembleWeights EnsembleWeights::uniform(std::span<const std::string> model_ids) {
  EnsembleWeights w;
  for (const auto& m : model_ids) w.weights[m] = 1.0;
  return w;
}

// --- grouping -------------------------------------------------------------

Grouping group_by_timestamp(std::span<const std::vector<CaptionCandidate>> streams,
                            double tolerance_s) {
  if (!(tolerance_s >= 0.0)) throw ArgumentError("grouping tolerance must be non-negative");

  std::vector<const CaptionCandidate*> all;
  for (const auto& s : streams) {
    for (std::size_t i = 1; i < s.size(); ++i) {
      if (s[i].timestamp_s < s[i - 1].timestamp_s) {
        throw PreconditionError("stream " + s[i].video_id + "/" + s[i].model_id +
                                " is not sorted by timestamp");
      }
    }
    for (const auto& c : s) all.push_back(&c);
  }
  std::stable_sort(all.begin(), all.end(), [](const auto* a, const auto* b) {
    if (a->timestamp_s != b->timestamp_s) return a->timestamp_s < b->timestamp_s;
    return a->model_id < b->model_id;
  });

  Grouping out;
  std::size_t i = 0;
  while (i < all.size()) {
    TimestampGroup g;
    g.video_id = all[i]->video_id;
    g.timestamp_s = all[i]->timestamp_s;
    for (; i < all.size() && all[i]->timestamp_s - g.timestamp_s <= tolerance_s; ++i) {
      const CaptionCandidate& c = *all[i];
      auto same = std::find_if(g.entries.begin(), g.entries.end(),
                               [&](const GroupEntry& e) { return e.model_id == c.model_id; });
      if (same == g.entries.end()) {
        g.entries.push_back({c.model_id, c.caption, c.confidence});
        continue;
      }
      std::ostringstream os;
      os << "video " << g.video_id << ", group at " << g.timestamp_s << "s: model " << c.model_id
         << " appears twice; kept the higher-confidence caption";
      out.warnings.push_back(os.str());
      if (c.confidence > same->confidence) *same = {c.model_id, c.caption, c.confidence};
    }
    std::sort(g.entries.begin(), g.entries.end(),
              [](const GroupEntry& a, const GroupEntry& b) { return a.model_id < b.model_id; });
    out.groups.push_back(std::move(g));
  }
  return out;
}

// --- selection ------------------------------------------------------------

Selection select_top1(const TimestampGroup& group, const EnsembleWeights& w) {
  if (group.entries.empty()) throw ArgumentError("cannot select from an empty group");
  const GroupEntry* best = nullptr;
  double best_score = 0.0;
  for (const auto& e : group.entries) {
    const double s = e.confidence * w.at(e.model_id);
    if (!best || s > best_score || (s == best_score && e.model_id < best->model_id)) {
      best = &e;
      best_score = s;
    }
  }
  return {best->model_id, best->caption, best_score};
}

TimelinePrediction timeline_from_selections(const std::string& video_id,
                                            std::span<const TimestampGroup> groups,
                                            std::span<const Selection> selections) {
  TimelinePrediction out{video_id, {}};
  out.events.reserve(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    out.events.push_back({groups[i].timestamp_s, selections[i].caption,
                          std::clamp(selections[i].weighted_score, 0.0, 1.0)});
  }
  return out;
}

TimelinePrediction ensemble_timelines(const std::string& video_id,
                                      std::span<const std::vector<CaptionCandidate>> streams,
                                      const EnsembleWeights& w, const PipelineConfig& cfg) {
  const Grouping grouping = group_by_timestamp(streams, cfg.grouping_tolerance_s);
  std::vector<Selection> picks;
  picks.reserve(grouping.groups.size());
  for (const auto& g : grouping.groups) picks.push_back(select_top1(g, w));
  return timeline_from_selections(video_id, grouping.groups, picks);
}

// --- grid search ----------------------------------------------------------

Objective parse_objective(std::string_view s) {
  if (s == "meteor") return Objective::meteor;
  if (s == "cider") return Objective::cider;
  throw ConfigError("unknown objective '" + std::string(s) + "'");
}

const char* to_string(Objective o) noexcept { return o == Objective::meteor ? "meteor" : "cider"; }

std::vector<VideoStreams> group_streams_by_video(std::span<const CaptionCandidate> candidates) {
  std::map<std::string, std::map<std::string, std::vector<CaptionCandidate>>> by_video;
  for (const auto& c : candidates) by_video[c.video_id][c.model_id].push_back(c);
  std::vector<VideoStreams> out;
  for (auto& [vid, models] : by_video) {
    VideoStreams v{vid, {}};
    for (auto& [model, stream] : models) v.streams.push_back(std::move(stream));
    out.push_back(std::move(v));
  }
  return out;
}

std::size_t grid_cardinality(const WeightGrid& grid) {
  if (grid.empty()) return 0;
  std::size_t n = 1;
  for (const auto& [model, values] : grid) n *= values.size();
  return n;
}

EnsembleWeights grid_point(const WeightGrid& grid, std::size_t index) {
  EnsembleWeights w;
  // Last model varies fastest.
  for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
    const auto& values = it->second;
    w.weights[it->first] = values[index % values.size()];
    index /= values.size();
  }
  return w;
}

double score_weights(std::span<const VideoStreams> dev, std::span<const GroundTruth> truth,
                     const EnsembleWeights& w, Objective objective, const PipelineConfig& cfg) {
  std::vector<TimelinePrediction> preds;
  preds.reserve(dev.size());
  for (const auto& v : dev) preds.push_back(ensemble_timelines(v.video_id, v.streams, w, cfg));
  const EvalReport r = evaluate(preds, truth, cfg);
  return objective == Objective::meteor ? r.meteor : r.cider;
}

GridSearchResult grid_search_weights(std::span<const VideoStreams> dev,
                                     std::span<const GroundTruth> truth, const WeightGrid& grid,
                                     Objective objective, const PipelineConfig& cfg,
                                     unsigned threads) {
  if (grid.empty()) throw ArgumentError("weight grid is empty");
  for (const auto& [model, values] : grid) {
    if (values.empty()) throw ArgumentError("weight grid for '" + model + "' is empty");
    for (double v : values) {
      if (!(std::isfinite(v) && v > 0)) {
        throw ArgumentError("weight grid for '" + model + "' holds a non-positive value");
      }
    }
  }
  for (const auto& v : dev) {
    for (const auto& s : v.streams) {
      if (!s.empty() && !grid.contains(s.front().model_id)) {
        throw ConfigError("weight grid has no entry for model '" + s.front().model_id + "'");
      }
    }
  }

  const std::size_t n = grid_cardinality(grid);
  GridSearchResult result;
  result.objective = objective;
  result.trace.resize(n);

  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < n; i += step) {
      result.trace[i].weights = grid_point(grid, i);
      result.trace[i].score = score_weights(dev, truth, result.trace[i].weights, objective, cfg);
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::future<void>> futures;
    for (unsigned t = 0; t < workers; ++t) {
      futures.push_back(std::async(std::launch::async, work, t, workers));
    }
    for (auto& f : futures) f.get();
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (result.trace[i].score > result.trace[best].score) best = i;
  }
  result.best_weights = result.trace[best].weights;
  result.best_score = result.trace[best].score;
  return result;
}

// --- LLM merging ----------------------------------------------------------

void RunLog::add(std::string entry) {
  std::lock_guard lock(mu_);
  entries_.push_back(std::move(entry));
}

std::vector<std::string> RunLog::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::string render_prompt(std::string_view prompt_template, const TimestampGroup& group) {
  std::string captions;
  for (std::size_t i = 0; i < group.entries.size(); ++i) {
    if (i) captions.push_back('\n');
    captions += group.entries[i].caption;
  }
  static constexpr std::string_view kPlaceholder = "{captions}";
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t hit = prompt_template.find(kPlaceholder, pos);
    if (hit == std::string_view::npos) break;
    out.append(prompt_template.substr(pos, hit - pos));
    out += captions;
    pos = hit + kPlaceholder.size();
  }
  out.append(prompt_template.substr(pos));
  return out;
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string group_label(const TimestampGroup& g) {
  std::ostringstream os;
  os << "video " << g.video_id << " @ " << g.timestamp_s << "s";
  return os.str();
}

// Fallback decisions are returned rather than logged so callers can log in group order.
struct MergeOutcome {
  MergeResult result;
  std::string log_entry;
};

MergeOutcome merge_one(const TimestampGroup& group, TextGenerationClient* client,
                       std::string_view prompt_template, const EnsembleWeights& w) {
  const Selection top = select_top1(group, w);
  if (!client) return {{top.caption, false}, {}};
  try {
    std::string text = trim(client->generate(render_prompt(prompt_template, group)));
    if (text.empty()) {
      return {{top.caption, false}, "llm merge fallback (" + group_label(group) + "): empty completion"};
    }
    return {{std::move(text), true}, {}};
  } catch (const std::exception& e) {
    return {{top.caption, false}, "llm merge fallback (" + group_label(group) + "): " + e.what()};
  }
}

}  // namespace

MergeResult merge_with_llm(const TimestampGroup& group, TextGenerationClient* client,
                           std::string_view prompt_template, const EnsembleWeights& w,
                           RunLog& log) {
  MergeOutcome o = merge_one(group, client, prompt_template, w);
  if (!o.log_entry.empty()) log.add(std::move(o.log_entry));
  return o.result;
}

MergedTimeline merge_timeline(const std::string& video_id, std::span<const TimestampGroup> groups,
                              const EnsembleWeights& w, TextGenerationClient* client,
                              std::string_view prompt_template, std::size_t max_in_flight,
                              RunLog& log) {
  std::vector<MergeOutcome> outcomes(groups.size());
  const std::size_t batch = std::max<std::size_t>(1, max_in_flight);
  for (std::size_t start = 0; start < groups.size(); start += batch) {
    const std::size_t end = std::min(groups.size(), start + batch);
    if (end - start == 1 || !client) {
      for (std::size_t i = start; i < end; ++i) {
        outcomes[i] = merge_one(groups[i], client, prompt_template, w);
      }
      continue;
    }
    std::vector<std::future<MergeOutcome>> inflight;
    for (std::size_t i = start; i < end; ++i) {
      inflight.push_back(std::async(std::launch::async, merge_one, std::cref(groups[i]), client,
                                    prompt_template, std::cref(w)));
    }
    for (std::size_t i = start; i < end; ++i) outcomes[i] = inflight[i - start].get();
  }

  MergedTimeline out;
  std::vector<Selection> picks;
  picks.reserve(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    Selection s = select_top1(groups[i], w);
    s.caption = outcomes[i].result.caption;
    if (outcomes[i].result.merged) ++out.merged;
    if (!outcomes[i].log_entry.empty()) log.add(std::move(outcomes[i].log_entry));
    picks.push_back(std::move(s));
  }
  out.timeline = timeline_from_selections(video_id, groups, picks);
  return out;
}

}  // namespace densecap
