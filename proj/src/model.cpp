#include "densecap/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "densecap/errors.hpp"

namespace densecap {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

bool in_unit(double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; }

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char ch) { return std::isspace(ch) != 0; });
}

std::string describe(const CaptionCandidate& c) {
  std::ostringstream os;
  os << "candidate (video_id=" << c.video_id << ", model_id=" << c.model_id
     << ", timestamp_s=" << c.timestamp_s << ")";
  return os.str();
}

const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

double require_number(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_number()) throw ValidationError(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

// Runs `fn` on every non-blank line; errors are re-raised with the line number.
template <typename Fn>
void for_each_line(const fs::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": malformed line: " + e.what());
    }
    if (!j.is_object()) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": expected a JSON object");
    }
    try {
      fn(j);
    } catch (const Error& e) {
      throw_error(e.kind(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (in.bad()) throw IoError("read failure on " + path.string());
}

std::string dump_line(const ordered_json& j) {
  try {
    return j.dump() + "\n";
  } catch (const json::type_error& e) {
    throw ValidationError(std::string("cannot serialize record: ") + e.what());
  }
}

}  // namespace

// --- config ---------------------------------------------------------------

void PipelineConfig::validate() const {
  if (window_sizes_s.empty()) throw ConfigError("window_sizes_s must not be empty");
  for (double w : window_sizes_s) {
    if (!(std::isfinite(w) && w > 0)) throw ConfigError("window sizes must be positive");
  }
  if (!(std::isfinite(window_stride_s) && window_stride_s > 0)) {
    throw ConfigError("window_stride_s must be positive");
  }
  if (!in_unit(confidence_threshold)) throw ConfigError("confidence_threshold must lie in [0,1]");
  if (!in_unit(background_threshold)) throw ConfigError("background_threshold must lie in [0,1]");
  if (background_weights.empty()) throw ConfigError("background_weights must not be empty");
  for (double w : background_weights) {
    if (!(std::isfinite(w) && w > 0)) throw ConfigError("background weights must be positive");
  }
  for (const auto& [model, w] : ensemble_weights) {
    if (!(std::isfinite(w) && w > 0)) {
      throw ConfigError("ensemble weight for '" + model + "' must be positive");
    }
  }
  if (!(std::isfinite(matching_tolerance_s) && matching_tolerance_s > 0)) {
    throw ConfigError("matching_tolerance_s must be positive");
  }
  if (!(std::isfinite(grouping_tolerance_s) && grouping_tolerance_s >= 0)) {
    throw ConfigError("grouping_tolerance_s must be non-negative");
  }
}

DedupMode parse_dedup_mode(std::string_view s) {
  if (s == "exact") return DedupMode::exact;
  if (s == "normalized") return DedupMode::normalized;
  throw ConfigError("unknown dedup_mode '" + std::string(s) + "'");
}

RunTiebreak parse_tiebreak(std::string_view s) {
  if (s == "earlier") return RunTiebreak::earlier;
  if (s == "later") return RunTiebreak::later;
  throw ConfigError("unknown even_run_tiebreak '" + std::string(s) + "'");
}

const char* to_string(DedupMode m) noexcept {
  return m == DedupMode::exact ? "exact" : "normalized";
}

const char* to_string(RunTiebreak t) noexcept {
  return t == RunTiebreak::earlier ? "earlier" : "later";
}

ordered_json to_json(const PipelineConfig& cfg) {
  ordered_json j;
  j["window_sizes_s"] = cfg.window_sizes_s;
  j["window_stride_s"] = cfg.window_stride_s;
  j["dedup_mode"] = to_string(cfg.dedup_mode);
  j["confidence_threshold"] = cfg.confidence_threshold;
  j["background_threshold"] = cfg.background_threshold;
  j["background_weights"] = cfg.background_weights;
  j["ensemble_weights"] = ordered_json::object();
  for (const auto& [model, w] : cfg.ensemble_weights) j["ensemble_weights"][model] = w;
  j["even_run_tiebreak"] = to_string(cfg.even_run_tiebreak);
  j["matching_tolerance_s"] = cfg.matching_tolerance_s;
  j["grouping_tolerance_s"] = cfg.grouping_tolerance_s;
  return j;
}

PipelineConfig pipeline_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("pipeline config must be an object");
  PipelineConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "window_sizes_s") {
        cfg.window_sizes_s = value.get<std::vector<double>>();
      } else if (key == "window_stride_s") {
        cfg.window_stride_s = value.get<double>();
      } else if (key == "dedup_mode") {
        cfg.dedup_mode = parse_dedup_mode(value.get<std::string>());
      } else if (key == "confidence_threshold") {
        cfg.confidence_threshold = value.get<double>();
      } else if (key == "background_threshold") {
        cfg.background_threshold = value.get<double>();
      } else if (key == "background_weights") {
        cfg.background_weights = value.get<std::vector<double>>();
      } else if (key == "ensemble_weights") {
        cfg.ensemble_weights = value.get<std::map<std::string, double>>();
      } else if (key == "even_run_tiebreak") {
        cfg.even_run_tiebreak = parse_tiebreak(value.get<std::string>());
      } else if (key == "matching_tolerance_s") {
        cfg.matching_tolerance_s = value.get<double>();
      } else if (key == "grouping_tolerance_s") {
        cfg.grouping_tolerance_s = value.get<double>();
      } else {
        throw ConfigError("unknown pipeline config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad pipeline config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// --- validation -----------------------------------------------------------

void validate(const CaptionCandidate& c) {
  if (!(std::isfinite(c.timestamp_s) && c.timestamp_s >= 0)) {
    throw ValidationError(describe(c) + ": timestamp_s must be non-negative");
  }
  if (blank(c.caption)) throw ValidationError(describe(c) + ": caption is empty");
  if (!in_unit(c.confidence)) {
    throw ValidationError(describe(c) + ": confidence " + std::to_string(c.confidence) +
                          " outside [0,1]");
  }
  for (double s : c.background_scores) {
    if (!in_unit(s)) throw ValidationError(describe(c) + ": background score outside [0,1]");
  }
}

void validate(const TimelinePrediction& p) {
  for (std::size_t i = 0; i < p.events.size(); ++i) {
    const auto& e = p.events[i];
    if (!(std::isfinite(e.timestamp_s) && e.timestamp_s >= 0)) {
      throw ValidationError("video " + p.video_id + ": negative timestamp");
    }
    if (!in_unit(e.confidence)) {
      throw ValidationError("video " + p.video_id + ": confidence outside [0,1]");
    }
    if (i > 0 && !(p.events[i - 1].timestamp_s < e.timestamp_s)) {
      throw PreconditionError("video " + p.video_id +
                              ": event timestamps must be strictly increasing");
    }
  }
}

void validate(const GroundTruthEvent& e) {
  if (!(std::isfinite(e.timestamp_s) && e.timestamp_s >= 0)) {
    throw ValidationError("video " + e.video_id + ": negative ground-truth timestamp");
  }
  if (blank(e.reference)) throw ValidationError("video " + e.video_id + ": empty reference");
}

// --- streams --------------------------------------------------------------

std::vector<CandidateStream> split_streams(std::span<const CaptionCandidate> candidates) {
  std::vector<CandidateStream> streams;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& c : candidates) {
    auto key = std::make_pair(c.video_id, c.model_id);
    auto [it, inserted] = index.try_emplace(key, streams.size());
    if (inserted) streams.push_back({c.video_id, c.model_id, {}});
    streams[it->second].candidates.push_back(c);
  }
  return streams;
}

std::vector<CaptionCandidate> join_streams(std::span<const CandidateStream> streams) {
  std::vector<CaptionCandidate> out;
  for (const auto& s : streams) out.insert(out.end(), s.candidates.begin(), s.candidates.end());
  return out;
}

// --- candidate format -----------------------------------------------------

CaptionCandidate candidate_from_json(const json& j) {
  CaptionCandidate c;
  c.video_id = require_string(j, "video_id");
  c.model_id = require_string(j, "model_id");
  c.timestamp_s = require_number(j, "timestamp_s");
  c.caption = require_string(j, "caption");
  c.confidence = require_number(j, "confidence");
  if (auto it = j.find("background_scores"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ValidationError("background_scores must be an array");
    for (const auto& s : *it) {
      if (!s.is_number()) throw ValidationError("background_scores must hold numbers");
      c.background_scores.push_back(s.get<double>());
    }
  }
  validate(c);
  return c;
}

ordered_json to_json(const CaptionCandidate& c) {
  ordered_json j;
  j["video_id"] = c.video_id;
  j["model_id"] = c.model_id;
  j["timestamp_s"] = c.timestamp_s;
  j["caption"] = c.caption;
  j["confidence"] = c.confidence;
  if (!c.background_scores.empty()) j["background_scores"] = c.background_scores;
  return j;
}

std::vector<CaptionCandidate> ingest_candidates(
    const fs::path& path, const std::optional<std::set<std::string>>& expected_models) {
  std::vector<CaptionCandidate> out;
  for_each_line(path, [&](const json& j) {
    CaptionCandidate c = candidate_from_json(j);
    if (expected_models && !expected_models->contains(c.model_id)) {
      throw ValidationError("unknown model_id '" + c.model_id + "'");
    }
    out.push_back(std::move(c));
  });
  return out;
}

void write_candidates(std::span<const CaptionCandidate> candidates, const fs::path& path) {
  std::string body;
  for (const auto& c : candidates) {
    validate(c);
    body += dump_line(to_json(c));
  }
  write_file_atomic(path, body);
}

// --- prediction format ----------------------------------------------------

ordered_json to_json(const TimelinePrediction& p) {
  ordered_json j;
  j["video_id"] = p.video_id;
  j["predictions"] = ordered_json::array();
  for (const auto& e : p.events) {
    ordered_json ev;
    ev["timestamp_s"] = e.timestamp_s;
    ev["caption"] = e.caption;
    ev["confidence"] = e.confidence;
    j["predictions"].push_back(std::move(ev));
  }
  return j;
}

TimelinePrediction timeline_from_json(const json& j) {
  TimelinePrediction p;
  p.video_id = require_string(j, "video_id");
  const json& preds = require(j, "predictions");
  if (!preds.is_array()) throw ValidationError("'predictions' must be an array");
  for (const auto& ev : preds) {
    if (!ev.is_object()) throw ValidationError("prediction entries must be objects");
    p.events.push_back({require_number(ev, "timestamp_s"), require_string(ev, "caption"),
                        require_number(ev, "confidence")});
  }
  validate(p);
  return p;
}

void write_timeline(const TimelinePrediction& pred, const fs::path& path) {
  write_timelines(std::span(&pred, 1), path);
}

void write_timelines(std::span<const TimelinePrediction> preds, const fs::path& path) {
  std::string body;
  for (const auto& p : preds) {
    validate(p);
    body += dump_line(to_json(p));
  }
  write_file_atomic(path, body);
}

std::vector<TimelinePrediction> read_timelines(const fs::path& path) {
  std::vector<TimelinePrediction> out;
  for_each_line(path, [&](const json& j) { out.push_back(timeline_from_json(j)); });
  return out;
}

// --- ground truth format --------------------------------------------------

std::vector<GroundTruth> read_ground_truth(const fs::path& path) {
  std::vector<GroundTruth> out;
  for_each_line(path, [&](const json& j) {
    GroundTruth g;
    g.video_id = require_string(j, "video_id");
    const json* events = nullptr;
    if (auto it = j.find("predictions"); it != j.end()) {
      events = &*it;
    } else if (auto alt = j.find("annotations"); alt != j.end()) {
      events = &*alt;
    } else {
      throw ValidationError("missing field 'predictions'");
    }
    if (!events->is_array()) throw ValidationError("'predictions' must be an array");
    for (const auto& ev : *events) {
      GroundTruthEvent e{g.video_id, require_number(ev, "timestamp_s"),
                         require_string(ev, "reference")};
      validate(e);
      g.events.push_back(std::move(e));
    }
    std::stable_sort(g.events.begin(), g.events.end(),
                     [](const auto& a, const auto& b) { return a.timestamp_s < b.timestamp_s; });
    out.push_back(std::move(g));
  });
  return out;
}

void write_ground_truth(std::span<const GroundTruth> truth, const fs::path& path) {
  std::string body;
  for (const auto& g : truth) {
    ordered_json j;
    j["video_id"] = g.video_id;
    j["predictions"] = ordered_json::array();
    for (const auto& e : g.events) {
      validate(e);
      ordered_json ev;
      ev["timestamp_s"] = e.timestamp_s;
      ev["reference"] = e.reference;
      j["predictions"].push_back(std::move(ev));
    }
    body += dump_line(j);
  }
  write_file_atomic(path, body);
}

// --- SoccerNet export -----------------------------------------------------

std::string game_time(double timestamp_s, double half_boundary_s) {
  if (!(std::isfinite(half_boundary_s) && half_boundary_s > 0)) {
    throw ArgumentError("half boundary must be positive");
  }
  const int half = timestamp_s < half_boundary_s ? 1 : 2;
  const double in_half = half == 1 ? timestamp_s : timestamp_s - half_boundary_s;
  const auto total = static_cast<long long>(std::floor(in_half));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%d - %02lld:%02lld", half, total / 60, total % 60);
  return buf;
}

ordered_json to_soccernet_json(const TimelinePrediction& p, double half_boundary_s) {
  ordered_json j;
  j["video_id"] = p.video_id;
  j["predictions"] = ordered_json::array();
  for (const auto& e : p.events) {
    const bool first = e.timestamp_s < half_boundary_s;
    const double in_half = first ? e.timestamp_s : e.timestamp_s - half_boundary_s;
    ordered_json ev;
    ev["gameTime"] = game_time(e.timestamp_s, half_boundary_s);
    ev["half"] = first ? 1 : 2;
    ev["position_ms"] = static_cast<long long>(std::llround(in_half * 1000.0));
    ev["caption"] = e.caption;
    ev["confidence"] = e.confidence;
    j["predictions"].push_back(std::move(ev));
  }
  return j;
}

// --- files ----------------------------------------------------------------

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw IoError("read failure on " + path.string());
  return os.str();
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  static std::atomic<unsigned> counter{0};
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory for " + path.string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("write failure on " + path.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into place at " + path.string());
  }
}

}  // namespace densecap
