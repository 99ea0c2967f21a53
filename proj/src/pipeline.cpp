#include "densecap/pipeline.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <map>

#include "densecap/errors.hpp"
#include "densecap/localize.hpp"
#include "densecap/metrics.hpp"

namespace densecap {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// --- config ---------------------------------------------------------------

fs::path RunConfig::resolve(const std::string& p) const {
  fs::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

namespace {

LlmSettings llm_settings_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("'llm' must be an object");
  LlmSettings s;
  for (const auto& [key, value] : j.items()) {
    if (key == "endpoint") {
      s.client.endpoint = value.get<std::string>();
    } else if (key == "timeout_s") {
      s.client.timeout_s = value.get<double>();
    } else if (key == "retries") {
      s.client.retries = value.get<int>();
    } else if (key == "max_tokens") {
      s.client.max_tokens = value.get<int>();
    } else if (key == "temperature") {
      s.client.temperature = value.get<double>();
    } else if (key == "max_in_flight") {
      s.client.max_in_flight = value.get<std::size_t>();
    } else if (key == "prompt_template") {
      s.prompt_template_path = value.get<std::string>();
    } else {
      throw ConfigError("unknown llm config key '" + key + "'");
    }
  }
  if (s.prompt_template_path.empty()) throw ConfigError("llm.prompt_template is required");
  if (s.client.max_in_flight == 0) throw ConfigError("llm.max_in_flight must be at least 1");
  return s;
}

}  // namespace

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig cfg;
  cfg.base_dir = base_dir;
  bool have_version = false;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "schema_version") {
        if (value.get<int>() != kSchemaVersion) {
          throw ConfigError("unsupported schema_version " + value.dump());
        }
        have_version = true;
      } else if (key == "candidates") {
        cfg.candidates = value.get<std::vector<std::string>>();
      } else if (key == "output") {
        cfg.output = value.get<std::string>();
      } else if (key == "manifest") {
        cfg.manifest = value.get<std::string>();
      } else if (key == "ground_truth") {
        cfg.ground_truth = value.get<std::string>();
      } else if (key == "report") {
        cfg.report = value.get<std::string>();
      } else if (key == "report_csv") {
        cfg.report_csv = value.get<std::string>();
      } else if (key == "expected_models") {
        cfg.expected_models = value.get<std::set<std::string>>();
      } else if (key == "pipeline") {
        cfg.pipeline = pipeline_config_from_json(value);
      } else if (key == "llm") {
        cfg.llm = llm_settings_from_json(value);
      } else {
        throw ConfigError("unknown run config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad run config value: ") + e.what());
  }
  if (!have_version) throw ConfigError("run config lacks schema_version");
  if (cfg.candidates.empty()) throw ConfigError("run config names no candidate files");
  if (cfg.output.empty()) throw ConfigError("run config lacks 'output'");
  if (cfg.manifest.empty()) throw ConfigError("run config lacks 'manifest'");
  if ((cfg.report || cfg.report_csv) && !cfg.ground_truth) {
    throw ConfigError("evaluation reports need 'ground_truth'");
  }
  cfg.pipeline.validate();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

ordered_json to_json(const RunConfig& cfg) {
  ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["candidates"] = cfg.candidates;
  j["output"] = cfg.output;
  j["manifest"] = cfg.manifest;
  if (cfg.ground_truth) j["ground_truth"] = *cfg.ground_truth;
  if (cfg.report) j["report"] = *cfg.report;
  if (cfg.report_csv) j["report_csv"] = *cfg.report_csv;
  if (cfg.expected_models) j["expected_models"] = *cfg.expected_models;
  j["pipeline"] = to_json(cfg.pipeline);
  if (cfg.llm) {
    ordered_json l;
    l["endpoint"] = cfg.llm->client.endpoint;
    l["timeout_s"] = cfg.llm->client.timeout_s;
    l["retries"] = cfg.llm->client.retries;
    l["max_tokens"] = cfg.llm->client.max_tokens;
    l["temperature"] = cfg.llm->client.temperature;
    l["max_in_flight"] = cfg.llm->client.max_in_flight;
    l["prompt_template"] = cfg.llm->prompt_template_path;
    j["llm"] = std::move(l);
  }
  return j;
}

// --- stages ---------------------------------------------------------------

namespace {

template <typename Fn>
std::vector<CandidateStream> map_streams(std::span<const CandidateStream> streams, Fn&& fn) {
  std::vector<CandidateStream> out;
  out.reserve(streams.size());
  for (const auto& s : streams) out.push_back({s.video_id, s.model_id, fn(s.candidates)});
  return out;
}

}  // namespace

std::vector<CandidateStream> dedupe_stage(std::span<const CandidateStream> streams,
                                          const PipelineConfig& cfg) {
  return map_streams(streams, [&](const auto& c) { return dedupe_central(c, cfg); });
}

std::vector<CandidateStream> confidence_stage(std::span<const CandidateStream> streams,
                                              double threshold) {
  return map_streams(streams, [&](const auto& c) { return filter_confidence(c, threshold); });
}

std::vector<CandidateStream> background_stage(std::span<const CandidateStream> streams,
                                              const PipelineConfig& cfg) {
  if (cfg.background_threshold == 0.0) return {streams.begin(), streams.end()};
  return map_streams(streams, [&](const auto& c) { return filter_background(c, cfg); });
}

EnsembleWeights resolve_weights(const PipelineConfig& cfg,
                                std::span<const CaptionCandidate> candidates) {
  EnsembleWeights w;
  if (!cfg.ensemble_weights.empty()) {
    w.weights = cfg.ensemble_weights;
  } else {
    for (const auto& c : candidates) w.weights.emplace(c.model_id, 1.0);
  }
  return w;
}

EnsembleOutput ensemble_stage(std::span<const CaptionCandidate> candidates,
                              const PipelineConfig& cfg, const std::optional<MergeOptions>& merge,
                              RunLog& log) {
  const EnsembleWeights w = resolve_weights(cfg, candidates);
  EnsembleOutput out;
  for (const auto& video : group_streams_by_video(candidates)) {
    const Grouping grouping = group_by_timestamp(video.streams, cfg.grouping_tolerance_s);
    for (const auto& warning : grouping.warnings) log.add(warning);
    out.groups += grouping.groups.size();
    if (merge) {
      MergedTimeline m = merge_timeline(video.video_id, grouping.groups, w, merge->client,
                                        merge->prompt_template, merge->max_in_flight, log);
      out.merged += m.merged;
      out.predictions.push_back(std::move(m.timeline));
    } else {
      std::vector<Selection> picks;
      for (const auto& g : grouping.groups) picks.push_back(select_top1(g, w));
      out.predictions.push_back(timeline_from_selections(video.video_id, grouping.groups, picks));
    }
  }
  return out;
}

// --- manifest -------------------------------------------------------------

ordered_json to_json(const RunManifest& m) {
  ordered_json j;
  j["tool_version"] = m.tool_version;
  j["config"] = m.config_echo;
  j["inputs"] = ordered_json::array();
  for (const auto& in : m.inputs) j["inputs"].push_back({{"path", in.path}, {"sha256", in.sha256}});
  ordered_json counts;
  counts["streams"] = ordered_json::array();
  for (const auto& s : m.streams) {
    ordered_json row;
    row["video_id"] = s.video_id;
    row["model_id"] = s.model_id;
    row["ingested"] = s.ingested;
    row["after_dedup"] = s.after_dedup;
    row["after_confidence_filter"] = s.after_confidence;
    row["after_background_filter"] = s.after_background;
    counts["streams"].push_back(std::move(row));
  }
  counts["groups"] = m.groups;
  counts["merged"] = m.merged;
  j["counts"] = std::move(counts);
  j["log"] = m.log;
  return j;
}

ordered_json timing_to_json(const RunManifest& m) {
  ordered_json j;
  j["tool_version"] = m.tool_version;
  j["stages"] = ordered_json::array();
  for (const auto& t : m.timing) j["stages"].push_back({{"stage", t.stage}, {"seconds", t.seconds}});
  return j;
}

fs::path timing_path_for(const fs::path& manifest_path) {
  fs::path p = manifest_path;
  const std::string ext = p.extension().string();
  p.replace_extension();
  p += ".timing" + (ext.empty() ? std::string(".json") : ext);
  return p;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("sha256 digest failed");
  }
  std::string hex;
  hex.reserve(len * 2);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

// --- run ------------------------------------------------------------------

namespace {

class StageClock {
 public:
  explicit StageClock(RunManifest& m) : manifest_(m) {}

  template <typename Fn>
  auto run(const std::string& stage, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    auto record = [&] {
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
      manifest_.timing.push_back({stage, dt.count()});
    };
    try {
      if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        record();
      } else {
        auto result = fn();
        record();
        return result;
      }
    } catch (const Error& e) {
      throw_error(e.kind(), "stage '" + stage + "': " + e.what());
    } catch (const std::exception& e) {
      throw IoError("stage '" + stage + "': " + e.what());
    }
  }

 private:
  RunManifest& manifest_;
};

// Removes every file it tracks unless released.
class OutputGuard {
 public:
  void track(fs::path p) { paths_.push_back(std::move(p)); }
  void release() { paths_.clear(); }
  ~OutputGuard() {
    for (const auto& p : paths_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }

 private:
  std::vector<fs::path> paths_;
};

}  // namespace

RunManifest run_pipeline(const RunConfig& cfg, TextGenerationClient* client_override) {
  RunManifest manifest;
  manifest.config_echo = to_json(cfg);
  StageClock clock(manifest);
  RunLog log;

  std::vector<CaptionCandidate> ingested = clock.run("ingest", [&] {
    std::vector<CaptionCandidate> all;
    for (const auto& name : cfg.candidates) {
      const fs::path p = cfg.resolve(name);
      manifest.inputs.push_back({name, sha256_hex(read_file(p))});
      auto part = ingest_candidates(p, cfg.expected_models);
      all.insert(all.end(), std::make_move_iterator(part.begin()),
                 std::make_move_iterator(part.end()));
    }
    return all;
  });

  const auto streams = split_streams(ingested);
  const auto deduped = clock.run("dedupe", [&] { return dedupe_stage(streams, cfg.pipeline); });
  const auto confident = clock.run("confidence_filter", [&] {
    return confidence_stage(deduped, cfg.pipeline.confidence_threshold);
  });
  const auto foreground = clock.run("background_filter", [&] {
    return background_stage(confident, cfg.pipeline);
  });
  for (std::size_t i = 0; i < streams.size(); ++i) {
    manifest.streams.push_back({streams[i].video_id, streams[i].model_id,
                                streams[i].candidates.size(), deduped[i].candidates.size(),
                                confident[i].candidates.size(), foreground[i].candidates.size()});
  }

  std::unique_ptr<TextGenerationClient> owned_client;
  std::optional<MergeOptions> merge;
  if (cfg.llm) {
    merge = clock.run("merge_setup", [&] {
      MergeOptions opts;
      opts.prompt_template = read_file(cfg.resolve(cfg.llm->prompt_template_path));
      opts.max_in_flight = cfg.llm->client.max_in_flight;
      if (client_override) {
        opts.client = client_override;
      } else if (!cfg.llm->client.endpoint.empty()) {
        owned_client = std::make_unique<HttpTextGenerationClient>(cfg.llm->client);
        opts.client = owned_client.get();
      }
      return opts;
    });
  }

  const EnsembleOutput ensembled = clock.run("ensemble", [&] {
    return ensemble_stage(join_streams(foreground), cfg.pipeline, merge, log);
  });
  manifest.groups = ensembled.groups;
  manifest.merged = ensembled.merged;

  std::optional<EvalReport> report;
  if (cfg.ground_truth) {
    report = clock.run("evaluate", [&] {
      const fs::path gt = cfg.resolve(*cfg.ground_truth);
      manifest.inputs.push_back({*cfg.ground_truth, sha256_hex(read_file(gt))});
      return evaluate(ensembled.predictions, read_ground_truth(gt), cfg.pipeline);
    });
  }
  manifest.log = log.entries();

  OutputGuard guard;
  clock.run("write", [&] {
    const fs::path out = cfg.resolve(cfg.output);
    guard.track(out);
    write_timelines(ensembled.predictions, out);
    if (report && cfg.report) {
      const fs::path p = cfg.resolve(*cfg.report);
      guard.track(p);
      write_file_atomic(p, to_json(*report).dump(2) + "\n");
    }
    if (report && cfg.report_csv) {
      const fs::path p = cfg.resolve(*cfg.report_csv);
      guard.track(p);
      write_file_atomic(p, to_csv(*report));
    }
    const fs::path mp = cfg.resolve(cfg.manifest);
    guard.track(mp);
    write_file_atomic(mp, to_json(manifest).dump(2) + "\n");
  });
  const fs::path tp = timing_path_for(cfg.resolve(cfg.manifest));
  guard.track(tp);
  write_file_atomic(tp, timing_to_json(manifest).dump(2) + "\n");
  guard.release();
  return manifest;
}

RunManifest run_pipeline(const fs::path& config_path) {
  return run_pipeline(load_run_config(config_path));
}

}  // namespace densecap
