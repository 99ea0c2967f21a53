#pragma once

// End-to-end orchestration from a run config file:
// ingest -> dedupe -> confidence filter -> background filter -> ensemble
// -> (optional LLM merge) -> write -> (optional) evaluate.
// The stage functions are shared with the single-stage CLI subcommands so a
// chain of subcommands reproduces a full run.

#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "densecap/ensemble.hpp"
#include "densecap/llm.hpp"
#include "densecap/model.hpp"

namespace densecap {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

struct LlmSettings {
  LlmClientConfig client;
  std::string prompt_template_path;  // as written in the config
};

/// Parsed run config. Relative paths resolve against `base_dir`, the
/// directory holding the config file.
struct RunConfig {
  std::filesystem::path base_dir;
  std::vector<std::string> candidates;
  std::string output;
  std::string manifest;
  std::optional<std::string> ground_truth;
  std::optional<std::string> report;
  std::optional<std::string> report_csv;
  std::optional<std::set<std::string>> expected_models;
  PipelineConfig pipeline;
  std::optional<LlmSettings> llm;

  std::filesystem::path resolve(const std::string& p) const;
};

RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const RunConfig& cfg);

// --- stages ---------------------------------------------------------------

std::vector<CandidateStream> dedupe_stage(std::span<const CandidateStream> streams,
                                          const PipelineConfig& cfg);
std::vector<CandidateStream> confidence_stage(std::span<const CandidateStream> streams,
                                              double threshold);
/// Identity when the threshold is 0, so score-less inputs pass through.
std::vector<CandidateStream> background_stage(std::span<const CandidateStream> streams,
                                              const PipelineConfig& cfg);

/// cfg.ensemble_weights, or weight 1.0 for every present model when none are configured.
EnsembleWeights resolve_weights(const PipelineConfig& cfg,
                                std::span<const CaptionCandidate> candidates);

struct EnsembleOutput {
  std::vector<TimelinePrediction> predictions;  // sorted by video_id
  std::size_t groups = 0;
  std::size_t merged = 0;
};

struct MergeOptions {
  TextGenerationClient* client = nullptr;
  std::string prompt_template;
  std::size_t max_in_flight = 1;
};

/// Ensembles every video present in `candidates`. With `merge` set, each
/// group's caption goes through merge_timeline (a null client falls back to top-1).
EnsembleOutput ensemble_stage(std::span<const CaptionCandidate> candidates,
                              const PipelineConfig& cfg, const std::optional<MergeOptions>& merge,
                              RunLog& log);

// --- manifest -------------------------------------------------------------

struct StreamCounts {
  std::string video_id;
  std::string model_id;
  std::size_t ingested = 0;
  std::size_t after_dedup = 0;
  std::size_t after_confidence = 0;
  std::size_t after_background = 0;
};

struct InputDigest {
  std::string path;
  std::string sha256;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunManifest {
  std::string tool_version = kToolVersion;
  nlohmann::ordered_json config_echo;
  std::vector<InputDigest> inputs;
  std::vector<StreamCounts> streams;
  std::size_t groups = 0;
  std::size_t merged = 0;
  std::vector<std::string> log;
  std::vector<StageTiming> timing;
};

/// Everything except timing, which goes to a separate file so the manifest
/// itself is byte-identical across runs.
nlohmann::ordered_json to_json(const RunManifest& m);
nlohmann::ordered_json timing_to_json(const RunManifest& m);

/// "manifest.json" -> "manifest.timing.json".
std::filesystem::path timing_path_for(const std::filesystem::path& manifest_path);

std::string sha256_hex(std::string_view data);

/// Runs every stage and writes predictions, manifest, timing and, when
/// ground truth is configured, the evaluation report. A failing stage throws
/// an Error whose message names the stage; outputs of the run are removed.
/// `client_override` replaces the client built from the config's llm section.
RunManifest run_pipeline(const RunConfig& cfg, TextGenerationClient* client_override = nullptr);
RunManifest run_pipeline(const std::filesystem::path& config_path);

}  // namespace densecap
