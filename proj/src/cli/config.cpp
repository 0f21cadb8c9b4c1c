#include "iflatcam/cli.hpp"
#include "iflatcam/error.hpp"
#include "iflatcam/json_util.hpp"

namespace iflatcam::cli {

using json_util::optional;
using json_util::reject_unknown;
using json_util::required;
using nlohmann::json;

namespace {

fs::path existing(const fs::path& base, const std::string& rel, const char* what) {
  if (rel.empty()) throw validation_error(std::string(what) + ": empty path");
  const fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : base / rel;
  if (!fs::exists(p)) throw io_error(std::string(what) + " not found: " + p.string());
  return p;
}

std::vector<fs::path> path_list(const json& doc, const char* key, const fs::path& base) {
  std::vector<fs::path> out;
  if (!doc.contains(key)) return out;
  if (!doc.at(key).is_array()) throw validation_error(std::string("config: '") + key + "' must be an array of paths");
  for (const auto& item : doc.at(key)) {
    if (!item.is_string()) throw validation_error(std::string("config: '") + key + "' entries must be strings");
    out.push_back(existing(base, item.get<std::string>(), key));
  }
  return out;
}

compress::RankPolicy parse_rank(const json& doc) {
  reject_unknown(doc, {"mode", "value", "overrides"}, "compression.rank");
  compress::RankPolicy rank;
  const auto mode = optional<std::string>(doc, "mode", "half", "compression.rank");
  if (mode == "half") {
    rank.mode = compress::RankPolicy::Mode::Half;
  } else if (mode == "fraction") {
    rank.mode = compress::RankPolicy::Mode::Fraction;
    rank.value = required<double>(doc, "value", "compression.rank");
    if (!(rank.value > 0.0 && rank.value <= 1.0)) throw validation_error("compression.rank: fraction must lie in (0, 1]");
  } else if (mode == "fixed") {
    rank.mode = compress::RankPolicy::Mode::Fixed;
    rank.value = required<int>(doc, "value", "compression.rank");
    if (rank.value < 1) throw validation_error("compression.rank: fixed rank must be >= 1");
  } else {
    throw validation_error("compression.rank: mode must be half, fraction or fixed");
  }
  if (doc.contains("overrides")) {
    if (!doc.at("overrides").is_array()) throw validation_error("compression.rank.overrides must be an array");
    for (const auto& o : doc.at("overrides")) {
      reject_unknown(o, {"layer", "rank"}, "compression.rank.overrides[]");
      const auto layer = required<std::int64_t>(o, "layer", "rank override");
      const auto r = required<int>(o, "rank", "rank override");
      if (layer < 0 || r < 1) throw validation_error("rank override: layer >= 0 and rank >= 1 required");
      rank.overrides.emplace_back(static_cast<std::size_t>(layer), r);
    }
  }
  return rank;
}

void parse_compression(const json& doc, ExperimentConfig& cfg) {
  reject_unknown(doc, {"enabled", "rank", "sparsity_target", "exponent_bits", "bm_fraction_bits", "iters", "include_dw",
                       "baseline_weight_bits", "dense_weight_bits"},
                 "compression");
  auto& c = cfg.compression;
  cfg.compression_enabled = optional(doc, "enabled", cfg.compression_enabled, "compression");
  if (doc.contains("rank")) c.rank = parse_rank(doc.at("rank"));
  c.sparsity_target = optional(doc, "sparsity_target", c.sparsity_target, "compression");
  c.exponent_bits = optional(doc, "exponent_bits", c.exponent_bits, "compression");
  c.bm_fraction_bits = optional(doc, "bm_fraction_bits", c.bm_fraction_bits, "compression");
  c.iters = optional(doc, "iters", c.iters, "compression");
  c.include_dw = optional(doc, "include_dw", c.include_dw, "compression");
  c.dense_weight_bits = optional(doc, "dense_weight_bits", c.dense_weight_bits, "compression");
  cfg.baseline_weight_bits = optional(doc, "baseline_weight_bits", cfg.baseline_weight_bits, "compression");
  compress::pruned_row_count(c.sparsity_target, 1);
  if (c.exponent_bits < 1 || c.exponent_bits > 8) throw validation_error("compression.exponent_bits must be in [1, 8]");
  if (c.bm_fraction_bits < 0 || c.bm_fraction_bits > 15) throw validation_error("compression.bm_fraction_bits must be in [0, 15]");
  if (c.iters < 1) throw validation_error("compression.iters must be >= 1");
  if (cfg.baseline_weight_bits < 1 || c.dense_weight_bits < 1) throw validation_error("compression: weight bits must be >= 1");
}

void parse_simulate(const json& doc, SimulateSettings& s) {
  reject_unknown(doc, {"swpr_sweep", "event_log_layer", "event_log_cap"}, "simulate");
  s.swpr_sweep = optional(doc, "swpr_sweep", s.swpr_sweep, "simulate");
  s.event_log_layer = optional(doc, "event_log_layer", s.event_log_layer, "simulate");
  s.event_log_cap = optional(doc, "event_log_cap", s.event_log_cap, "simulate");
  if (s.event_log_cap < 1 || s.event_log_cap > 1'000'000) throw validation_error("simulate.event_log_cap must be in [1, 1e6]");
}

void parse_pipeline(const json& doc, PipelineSettings& p) {
  reject_unknown(doc, {"mode", "repredict_period", "trigger_threshold", "trigger_margin", "roi_target_fraction",
                       "prediction_downsample", "n_frames", "frame_height", "frame_width", "input",
                       "capture_noise_sigma", "lambda", "static_scene", "max_step", "saccade_probability"},
                 "pipeline");
  auto& pol = p.policy;
  const auto mode = optional<std::string>(doc, "mode", "periodic", "pipeline");
  if (mode == "periodic") {
    pol.mode = pipeline::PolicyMode::Periodic;
    if (doc.contains("trigger_threshold")) throw validation_error("pipeline: trigger_threshold given in periodic mode");
  } else if (mode == "trigger") {
    pol.mode = pipeline::PolicyMode::Trigger;
    if (doc.contains("repredict_period")) throw validation_error("pipeline: repredict_period given in trigger mode");
  } else {
    throw validation_error("pipeline.mode must be periodic or trigger");
  }
  pol.repredict_period = optional(doc, "repredict_period", pol.repredict_period, "pipeline");
  pol.trigger_threshold = optional(doc, "trigger_threshold", pol.trigger_threshold, "pipeline");
  pol.trigger_margin = optional(doc, "trigger_margin", pol.trigger_margin, "pipeline");
  pol.roi_target_fraction = optional(doc, "roi_target_fraction", pol.roi_target_fraction, "pipeline");
  pol.prediction_downsample = optional(doc, "prediction_downsample", pol.prediction_downsample, "pipeline");
  pipeline::validate(pol);

  p.n_frames = optional(doc, "n_frames", p.n_frames, "pipeline");
  p.frame_height = optional(doc, "frame_height", p.frame_height, "pipeline");
  p.frame_width = optional(doc, "frame_width", p.frame_width, "pipeline");
  if (p.n_frames < 1 || p.frame_height < 1 || p.frame_width < 1) throw validation_error("pipeline: stream sizes must be >= 1");

  const auto input = optional<std::string>(doc, "input", "reconstructed", "pipeline");
  if (input == "reconstructed") {
    p.run.input = pipeline::InputPath::Reconstructed;
  } else if (input == "raw") {
    p.run.input = pipeline::InputPath::RawMeasurement;
  } else if (input == "scene") {
    p.run.input = pipeline::InputPath::Scene;
  } else {
    throw validation_error("pipeline.input must be reconstructed, raw or scene");
  }
  p.run.capture_noise_sigma = optional(doc, "capture_noise_sigma", p.run.capture_noise_sigma, "pipeline");
  p.run.lambda = optional(doc, "lambda", p.run.lambda, "pipeline");
  if (!(p.run.capture_noise_sigma >= 0.0) || !(p.run.lambda > 0.0)) {
    throw validation_error("pipeline: capture_noise_sigma >= 0 and lambda > 0 required");
  }
  p.stream.static_scene = optional(doc, "static_scene", p.stream.static_scene, "pipeline");
  p.stream.max_step = optional(doc, "max_step", p.stream.max_step, "pipeline");
  p.stream.saccade_probability = optional(doc, "saccade_probability", p.stream.saccade_probability, "pipeline");
}

void parse_lensless(const json& doc, const fs::path& base, LenslessSettings& l) {
  reject_unknown(doc, {"scene_rows", "scene_cols", "measurement_rows", "measurement_cols", "n_scenes", "noise_sigma",
                       "lambdas", "scenes", "mask", "write_images"},
                 "lensless");
  l.scene_rows = optional(doc, "scene_rows", l.scene_rows, "lensless");
  l.scene_cols = optional(doc, "scene_cols", l.scene_cols, "lensless");
  l.measurement_rows = optional(doc, "measurement_rows", l.measurement_rows, "lensless");
  l.measurement_cols = optional(doc, "measurement_cols", l.measurement_cols, "lensless");
  l.n_scenes = optional(doc, "n_scenes", l.n_scenes, "lensless");
  l.noise_sigma = optional(doc, "noise_sigma", l.noise_sigma, "lensless");
  l.lambdas = optional(doc, "lambdas", l.lambdas, "lensless");
  l.write_images = optional(doc, "write_images", l.write_images, "lensless");
  if (l.scene_rows < 1 || l.scene_cols < 1 || l.measurement_rows < 1 || l.measurement_cols < 1 || l.n_scenes < 1) {
    throw validation_error("lensless: sizes and n_scenes must be >= 1");
  }
  if (!(l.noise_sigma >= 0.0)) throw validation_error("lensless.noise_sigma must be >= 0");
  if (l.lambdas.empty()) throw validation_error("lensless.lambdas must not be empty");
  for (double v : l.lambdas) {
    if (!(v > 0.0)) throw validation_error("lensless.lambdas must be positive");
  }
  const auto scenes = optional<std::string>(doc, "scenes", "random", "lensless");
  if (scenes == "random") {
    l.scenes = SceneSource::Random;
  } else if (scenes == "zero") {
    l.scenes = SceneSource::Zero;
  } else if (scenes == "stream") {
    l.scenes = SceneSource::Stream;
  } else {
    throw validation_error("lensless.scenes must be random, zero or stream");
  }
  if (doc.contains("mask")) l.mask_path = existing(base, required<std::string>(doc, "mask", "lensless"), "lensless.mask");
}

}  // namespace

ExperimentConfig parse_config(const json& doc, const fs::path& base_dir) {
  reject_unknown(doc, {"network", "prediction_network", "weights", "prediction_weights", "output_dir", "seed",
                       "compression", "accel", "simulate", "pipeline", "lensless"},
                 "config");
  ExperimentConfig cfg;
  cfg.seed = required<std::uint64_t>(doc, "seed", "config");
  if (doc.contains("network")) cfg.network_path = existing(base_dir, required<std::string>(doc, "network", "config"), "network");
  if (doc.contains("prediction_network")) {
    cfg.prediction_network_path =
        existing(base_dir, required<std::string>(doc, "prediction_network", "config"), "prediction_network");
  }
  cfg.weight_paths = path_list(doc, "weights", base_dir);
  cfg.prediction_weight_paths = path_list(doc, "prediction_weights", base_dir);
  cfg.output_dir = base_dir / optional<std::string>(doc, "output_dir", "out", "config");
  if (doc.contains("compression")) parse_compression(doc.at("compression"), cfg);
  if (doc.contains("accel")) cfg.accel = accelsim::config_from_json(doc.at("accel"));
  if (doc.contains("simulate")) parse_simulate(doc.at("simulate"), cfg.simulate);
  if (doc.contains("pipeline")) parse_pipeline(doc.at("pipeline"), cfg.pipeline);
  if (doc.contains("lensless")) parse_lensless(doc.at("lensless"), base_dir, cfg.lensless);
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  const json doc = json_util::read_file(path);
  return parse_config(doc, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

}  // namespace iflatcam::cli
