#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "iflatcam/accelsim.hpp"
#include "iflatcam/compress.hpp"
#include "iflatcam/pipeline.hpp"

namespace iflatcam::cli {

namespace fs = std::filesystem;

struct SimulateSettings {
  bool swpr_sweep = true;
  std::int64_t event_log_layer = -1;  // >= 0: dump the per-cycle log of that layer
  std::size_t event_log_cap = 1'000'000;
};

struct PipelineSettings {
  pipeline::PipelinePolicy policy;
  pipeline::StreamOptions stream;
  pipeline::RunOptions run;
  std::size_t n_frames = 1000;
  std::int64_t frame_height = 128;
  std::int64_t frame_width = 128;
};

enum class SceneSource { Random, Zero, Stream };

struct LenslessSettings {
  std::int64_t scene_rows = 32;
  std::int64_t scene_cols = 32;
  std::int64_t measurement_rows = 32;
  std::int64_t measurement_cols = 32;
  std::size_t n_scenes = 4;
  double noise_sigma = 0.0;
  std::vector<double> lambdas{1e-4};
  SceneSource scenes = SceneSource::Random;
  std::optional<fs::path> mask_path;
  bool write_images = true;
};

struct ExperimentConfig {
  fs::path network_path;
  std::optional<fs::path> prediction_network_path;
  std::vector<fs::path> weight_paths;             // empty: seeded random weights
  std::vector<fs::path> prediction_weight_paths;  // empty: seeded random weights
  fs::path output_dir = "out";
  std::uint64_t seed = 0;

  bool compression_enabled = true;
  compress::CompressionOptions compression;
  std::uint32_t baseline_weight_bits = 8;

  accelsim::AccelConfig accel;
  SimulateSettings simulate;
  PipelineSettings pipeline;
  LenslessSettings lensless;
};

/// Strict JSON config. Relative paths resolve against the config file's
/// directory; referenced network, weight and mask files must exist.
ExperimentConfig parse_config(const nlohmann::json& doc, const fs::path& base_dir);
ExperimentConfig load_config(const fs::path& path);

enum class Format { Json, Csv };

struct CommandResult {
  nlohmann::json summary;
  std::string table;  // the command's primary CSV table
};

CommandResult cmd_compress(const ExperimentConfig& cfg);
CommandResult cmd_simulate(const ExperimentConfig& cfg);
CommandResult cmd_pipeline(const ExperimentConfig& cfg);
CommandResult cmd_reconstruct(const ExperimentConfig& cfg);
/// Runs compress, simulate and (when a prediction network is configured)
/// pipeline into sub-directories and collects the headline numbers.
CommandResult cmd_report(const ExperimentConfig& cfg);

/// Entry point shared by the binary and the tests. Returns the exit code;
/// errors are written to `err` as {"code", "message"} JSON.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace iflatcam::cli
