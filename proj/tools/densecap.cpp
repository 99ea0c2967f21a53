// densecap: dense video captioning post-processing toolkit.
//
// Exit codes: 0 success, 1 validation, 2 I/O, 3 config.

#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "densecap/ensemble.hpp"
#include "densecap/errors.hpp"
#include "densecap/llm.hpp"
#include "densecap/localize.hpp"
#include "densecap/metrics.hpp"
#include "densecap/model.hpp"
#include "densecap/pipeline.hpp"

namespace fs = std::filesystem;
using namespace densecap;

namespace {

// "a=1,b=0.85" -> {a: 1, b: 0.85}
std::map<std::string, double> parse_weight_map(const std::string& spec) {
  std::map<std::string, double> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("bad weight '" + item + "', want model=w");
    try {
      out[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad weight value in '" + item + "'");
    }
  }
  return out;
}

// "blip=1,0.9" -> ("blip", {1, 0.9})
std::pair<std::string, std::vector<double>> parse_grid_entry(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("bad grid entry '" + spec + "'");
  std::vector<double> values;
  std::stringstream ss(spec.substr(eq + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      values.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("bad grid value '" + item + "'");
    }
  }
  return {spec.substr(0, eq), values};
}

// Shared "--config" handling: a run config supplies the pipeline section and
// llm settings, then explicit flags override single fields.
struct ConfigSource {
  std::string path;

  std::optional<RunConfig> load() const {
    if (path.empty()) return std::nullopt;
    return load_run_config(path);
  }

  PipelineConfig pipeline() const {
    auto rc = load();
    return rc ? rc->pipeline : PipelineConfig{};
  }
};

std::vector<CaptionCandidate> ingest_all(const std::vector<std::string>& inputs,
                                         const std::optional<std::set<std::string>>& models = {}) {
  std::vector<CaptionCandidate> all;
  for (const auto& p : inputs) {
    auto part = ingest_candidates(p, models);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"densecap - dense video captioning post-processing toolkit"};
  app.require_subcommand(1);
  ConfigSource source;

  // run
  auto* run = app.add_subcommand("run", "Run the whole pipeline from a config file");
  std::string run_config;
  run->add_option("config", run_config, "Run config (JSON)")->required();

  // ingest-check
  auto* check = app.add_subcommand("ingest-check", "Validate candidate files");
  std::vector<std::string> check_in;
  std::vector<std::string> check_models;
  check->add_option("--in", check_in, "Candidate files")->required();
  check->add_option("--models", check_models, "Allowed model ids")->delimiter(',');

  // dedupe
  auto* dedupe = app.add_subcommand("dedupe", "Central de-duplication of each stream");
  std::vector<std::string> dedupe_in;
  std::string dedupe_out, dedupe_mode, dedupe_tiebreak;
  dedupe->add_option("--in", dedupe_in, "Candidate files")->required();
  dedupe->add_option("--out", dedupe_out, "Output candidate file")->required();
  dedupe->add_option("--mode", dedupe_mode, "exact|normalized");
  dedupe->add_option("--tiebreak", dedupe_tiebreak, "earlier|later");
  dedupe->add_option("--config", source.path, "Run config supplying defaults");

  // filter
  auto* filter = app.add_subcommand("filter", "Confidence or background-score filtering");
  std::vector<std::string> filter_in;
  std::string filter_out;
  std::optional<double> filter_threshold;
  bool filter_background_flag = false;
  std::vector<double> filter_weights;
  filter->add_option("--in", filter_in, "Candidate files")->required();
  filter->add_option("--out", filter_out, "Output candidate file")->required();
  filter->add_option("--threshold", filter_threshold, "Threshold in [0,1]");
  filter->add_flag("--background", filter_background_flag, "Filter on fused background scores");
  filter->add_option("--weights", filter_weights, "Background weights")->delimiter(',');
  filter->add_option("--config", source.path, "Run config supplying defaults");

  // ensemble
  auto* ensemble = app.add_subcommand("ensemble", "Weighted top-1 ensemble into predictions");
  std::vector<std::string> ens_in;
  std::string ens_out, ens_weights, ens_endpoint, ens_template;
  std::optional<double> ens_tolerance;
  ensemble->add_option("--in", ens_in, "Candidate files")->required();
  ensemble->add_option("--out", ens_out, "Prediction file")->required();
  ensemble->add_option("--weights", ens_weights, "model=w,...");
  ensemble->add_option("--tolerance", ens_tolerance, "Grouping tolerance (s)");
  ensemble->add_option("--llm-endpoint", ens_endpoint, "Text-generation endpoint for merging");
  ensemble->add_option("--prompt-template", ens_template, "Prompt template file ({captions})");
  ensemble->add_option("--config", source.path, "Run config supplying defaults");

  // grid-search
  auto* grid = app.add_subcommand("grid-search", "Exhaustive search over ensemble weights");
  std::vector<std::string> grid_in, grid_specs;
  std::string grid_truth, grid_out, grid_objective = "meteor";
  std::optional<double> grid_tolerance;
  unsigned grid_threads = 1;
  grid->add_option("--in", grid_in, "Cleaned candidate files")->required();
  grid->add_option("--truth", grid_truth, "Ground truth file")->required();
  grid->add_option("--grid", grid_specs, "model=w1,w2,... (repeat per model)")->required();
  grid->add_option("--objective", grid_objective, "meteor|cider");
  grid->add_option("--tolerance", grid_tolerance, "Matching tolerance (s)");
  grid->add_option("--threads", grid_threads, "Parallel evaluations");
  grid->add_option("--out", grid_out, "Result JSON (best weights + trace)")->required();
  grid->add_option("--config", source.path, "Run config supplying defaults");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Score predictions against ground truth");
  std::string eval_pred, eval_truth, eval_out, eval_csv;
  std::optional<double> eval_tolerance;
  eval->add_option("--pred", eval_pred, "Prediction file")->required();
  eval->add_option("--truth", eval_truth, "Ground truth file")->required();
  eval->add_option("--tolerance", eval_tolerance, "Matching tolerance (s)");
  eval->add_option("--out", eval_out, "Report JSON (stdout when omitted)");
  eval->add_option("--csv", eval_csv, "Per-video CSV");
  eval->add_option("--config", source.path, "Run config supplying defaults");

  // export-soccernet
  auto* exporter = app.add_subcommand("export-soccernet", "Write half/game-time predictions");
  std::string exp_in, exp_out;
  double half_boundary = 0.0;
  exporter->add_option("--in", exp_in, "Prediction file")->required();
  exporter->add_option("--out", exp_out, "Output file")->required();
  exporter->add_option("--half-boundary", half_boundary, "Second-half start (s)")->required();

  // anchors
  auto* anchors = app.add_subcommand("anchors", "List sliding-window anchors for a video");
  std::string anchor_video = "video";
  double anchor_duration = 0.0;
  std::vector<double> anchor_sizes;
  std::optional<double> anchor_stride;
  anchors->add_option("--video-id", anchor_video, "Video id");
  anchors->add_option("--duration", anchor_duration, "Video duration (s)")->required();
  anchors->add_option("--sizes", anchor_sizes, "Window sizes (s)")->delimiter(',');
  anchors->add_option("--stride", anchor_stride, "Stride (s)");

  // serve-stub
  auto* stub = app.add_subcommand("serve-stub", "Serve the text-generation stub for tests");
  std::string stub_host = "127.0.0.1", stub_mode = "first-line", stub_text;
  int stub_port = 8089;
  stub->add_option("--host", stub_host, "Bind address");
  stub->add_option("--port", stub_port, "Port");
  stub->add_option("--mode", stub_mode, "echo|first-line|fail|fixed");
  stub->add_option("--text", stub_text, "Reply text for --mode fixed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorKind::config);
  }

  try {
    if (*run) {
      const RunManifest m = run_pipeline(fs::path(run_config));
      std::size_t events = 0;
      std::cout << "groups=" << m.groups << " merged=" << m.merged << "\n";
      for (const auto& s : m.streams) events += s.after_background;
      std::cout << "candidates after filtering=" << events << "\n";
    } else if (*check) {
      std::optional<std::set<std::string>> models;
      if (!check_models.empty()) models.emplace(check_models.begin(), check_models.end());
      const auto all = ingest_all(check_in, models);
      for (const auto& s : split_streams(all)) {
        std::cout << s.video_id << "\t" << s.model_id << "\t" << s.candidates.size() << "\n";
      }
      std::cout << "ok: " << all.size() << " candidates\n";
    } else if (*dedupe) {
      PipelineConfig cfg = source.pipeline();
      if (!dedupe_mode.empty()) cfg.dedup_mode = parse_dedup_mode(dedupe_mode);
      if (!dedupe_tiebreak.empty()) cfg.even_run_tiebreak = parse_tiebreak(dedupe_tiebreak);
      const auto streams = split_streams(ingest_all(dedupe_in));
      write_candidates(join_streams(dedupe_stage(streams, cfg)), dedupe_out);
    } else if (*filter) {
      PipelineConfig cfg = source.pipeline();
      if (!filter_weights.empty()) cfg.background_weights = filter_weights;
      const auto streams = split_streams(ingest_all(filter_in));
      std::vector<CandidateStream> kept;
      if (filter_background_flag) {
        if (filter_threshold) cfg.background_threshold = *filter_threshold;
        cfg.validate();
        kept = background_stage(streams, cfg);
      } else {
        if (filter_threshold) cfg.confidence_threshold = *filter_threshold;
        cfg.validate();
        kept = confidence_stage(streams, cfg.confidence_threshold);
      }
      write_candidates(join_streams(kept), filter_out);
    } else if (*ensemble) {
      const auto rc = source.load();
      PipelineConfig cfg = rc ? rc->pipeline : PipelineConfig{};
      if (!ens_weights.empty()) cfg.ensemble_weights = parse_weight_map(ens_weights);
      if (ens_tolerance) cfg.grouping_tolerance_s = *ens_tolerance;
      cfg.validate();

      std::optional<MergeOptions> merge;
      std::unique_ptr<TextGenerationClient> client;
      LlmClientConfig llm_cfg;
      std::string template_path;
      if (rc && rc->llm) {
        llm_cfg = rc->llm->client;
        template_path = rc->resolve(rc->llm->prompt_template_path).string();
      }
      if (!ens_endpoint.empty()) llm_cfg.endpoint = ens_endpoint;
      if (!ens_template.empty()) template_path = ens_template;
      if (!template_path.empty()) {
        merge.emplace();
        merge->prompt_template = read_file(template_path);
        merge->max_in_flight = llm_cfg.max_in_flight;
        if (!llm_cfg.endpoint.empty()) {
          client = std::make_unique<HttpTextGenerationClient>(llm_cfg);
          merge->client = client.get();
        }
      }
      RunLog log;
      const auto out = ensemble_stage(ingest_all(ens_in), cfg, merge, log);
      write_timelines(out.predictions, ens_out);
      for (const auto& entry : log.entries()) std::cerr << entry << "\n";
    } else if (*grid) {
      PipelineConfig cfg = source.pipeline();
      if (grid_tolerance) cfg.matching_tolerance_s = *grid_tolerance;
      cfg.validate();
      WeightGrid weight_grid;
      for (const auto& spec : grid_specs) {
        auto [model, values] = parse_grid_entry(spec);
        weight_grid[model] = values;
      }
      const auto dev = group_streams_by_video(ingest_all(grid_in));
      const auto truth = read_ground_truth(grid_truth);
      const auto result = grid_search_weights(dev, truth, weight_grid,
                                              parse_objective(grid_objective), cfg, grid_threads);
      nlohmann::ordered_json j;
      j["objective"] = to_string(result.objective);
      j["best_weights"] = result.best_weights.weights;
      j["best_score"] = result.best_score;
      j["trace"] = nlohmann::ordered_json::array();
      for (const auto& p : result.trace) {
        j["trace"].push_back({{"weights", p.weights.weights}, {"score", p.score}});
      }
      write_file_atomic(grid_out, j.dump(2) + "\n");
      std::cout << "best " << to_string(result.objective) << "=" << result.best_score << "\n";
    } else if (*eval) {
      PipelineConfig cfg = source.pipeline();
      if (eval_tolerance) cfg.matching_tolerance_s = *eval_tolerance;
      cfg.validate();
      const auto report = evaluate(read_timelines(eval_pred), read_ground_truth(eval_truth), cfg);
      const std::string body = to_json(report).dump(2) + "\n";
      if (eval_out.empty()) {
        std::cout << body;
      } else {
        write_file_atomic(eval_out, body);
      }
      if (!eval_csv.empty()) write_file_atomic(eval_csv, to_csv(report));
    } else if (*exporter) {
      std::string body;
      for (const auto& p : read_timelines(exp_in)) {
        body += to_soccernet_json(p, half_boundary).dump() + "\n";
      }
      write_file_atomic(exp_out, body);
    } else if (*anchors) {
      PipelineConfig cfg;
      if (!anchor_sizes.empty()) cfg.window_sizes_s = anchor_sizes;
      if (anchor_stride) cfg.window_stride_s = *anchor_stride;
      for (const auto& a : generate_anchors(anchor_video, anchor_duration, cfg)) {
        std::cout << a.video_id << "\t" << a.size_s << "\t" << a.center_s << "\n";
      }
    } else if (*stub) {
      StubServer server(parse_stub_mode(stub_mode), stub_text);
      std::cerr << "stub listening on http://" << stub_host << ":" << stub_port << "/generate\n";
      server.listen_blocking(stub_host, stub_port);
    }
  } catch (const Error& e) {
    std::cerr << "densecap: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "densecap: " << e.what() << "\n";
    return exit_code(ErrorKind::io);
  }
  return 0;
}
