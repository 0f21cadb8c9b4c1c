#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "iflatcam/compress.hpp"
#include "iflatcam/lensless.hpp"
#include "iflatcam/netspec.hpp"

namespace iflatcam::pipeline {

using netspec::NetworkSpec;
using netspec::TensorShape;

struct GazeVector {
  double yaw = 0.0;    // degrees, positive to the right
  double pitch = 0.0;  // degrees, positive upwards
};

/// Angle between the two gaze directions, from the unit vectors
/// (cos p sin y, sin p, cos p cos y). Result in [0, 180] degrees.
double angular_error(const GazeVector& a, const GazeVector& b);

struct GroundTruth {
  double pupil_row = 0.0;
  double pupil_col = 0.0;
  GazeVector gaze;
  bool saccade = false;
};

struct FrameStream {
  std::vector<lensless::SceneImage> frames;
  double fps_nominal = 30.0;
  std::vector<GroundTruth> ground_truth;

  TensorShape shape() const;
};

struct StreamOptions {
  double fps = 30.0;
  double max_step = 2.0;        // smooth-walk displacement cap per frame (pixels)
  double saccade_probability = 0.03;
  double saccade_min = 8.0;     // saccade jump length lower bound (pixels)
  double saccade_max = 16.0;
  bool static_scene = false;    // pupil never moves
};

/// Synthetic eye video: dark elliptical pupil inside a mid-grey iris disk on a
/// bright sclera. The pupil follows a seeded smooth random walk with rare
/// saccades. Gaze truth is the affine map
///   yaw = 60 * (col - W/2) / W,  pitch = -60 * (row - H/2) / H  (degrees).
FrameStream generate_synthetic_stream(std::size_t n_frames, const TensorShape& shape, std::uint64_t motion_seed,
                                      const StreamOptions& options = {});
GazeVector gaze_from_pupil(double row, double col, const TensorShape& shape);

/// Activation tensor, channel-major: index (c * H + y) * W + x.
struct Tensor {
  TensorShape shape;
  Eigen::VectorXd data;

  static Tensor from_image(const Eigen::MatrixXd& image);
  double at(std::int64_t c, std::int64_t y, std::int64_t x) const {
    return data((c * shape.height + y) * shape.width + x);
  }
};

/// Weights ready for execution. Compressed layers are restored through the
/// shift-and-add path; `live_rows[i]` is false for stacked rows whose CM row is
/// ZERO, and the executor skips them.
struct PreparedLayer {
  Eigen::MatrixXd weights;  // dense layout of compress::DenseWeights
  std::vector<bool> live_rows;
};

struct PreparedNetwork {
  NetworkSpec spec;
  std::vector<PreparedLayer> layers;

  /// Same weights, different input size (spatial dims only).
  PreparedNetwork retarget(const TensorShape& input) const;
};

PreparedNetwork prepare_network(const NetworkSpec& net, std::span<const compress::LayerStorage> weights);
PreparedNetwork prepare_network(const NetworkSpec& net, std::span<const compress::DenseWeights> weights);

struct ExecOptions {
  bool quantize_activations = true;
};

/// Per-tensor 8-bit affine quantizer over [min(0, lo), max(0, hi)]:
/// q = clamp(round_half_away(x / scale) + zero_point, 0, 255).
struct AffineQuant {
  double scale = 1.0;
  std::int32_t zero_point = 0;

  static AffineQuant fit(const Eigen::VectorXd& x);
  double apply(double x) const;
};

struct ExecResult {
  Eigen::VectorXd output;
  std::vector<double> activation_scales;  // network input, then each layer output
};

/// Reference fixed-point inference. The network input and every layer output
/// pass through an AffineQuant fitted to that tensor; the returned output is
/// de-quantized. FC layers average-pool any spatial extent first.
ExecResult execute_network(const PreparedNetwork& net, const Tensor& input, const ExecOptions& options = {});

/// Nearest-neighbour resize of a single-channel image.
Eigen::MatrixXd resize_nearest(const Eigen::MatrixXd& image, Eigen::Index rows, Eigen::Index cols);
/// Box-filter downsample by an integer factor (partial edge blocks averaged over their pixels).
Eigen::MatrixXd downsample_box(const Eigen::MatrixXd& image, int factor);

struct RoiBox {
  std::int64_t top = 0;
  std::int64_t left = 0;
  std::int64_t height = 1;
  std::int64_t width = 1;
  double area_fraction = 1.0;

  bool operator==(const RoiBox&) const = default;
};

/// Aspect-preserving box of round(H*sqrt(f)) x round(W*sqrt(f)) centred on
/// (row, col) and shifted inside the frame.
RoiBox centered_roi(double row, double col, std::int64_t frame_h, std::int64_t frame_w, double fraction);
Eigen::MatrixXd crop(const Eigen::MatrixXd& frame, const RoiBox& roi);

enum class PolicyMode { Periodic, Trigger };
enum class InputPath { Scene, Reconstructed, RawMeasurement };

struct PipelinePolicy {
  PolicyMode mode = PolicyMode::Periodic;
  std::int64_t repredict_period = 20;
  double trigger_threshold = 0.02;  // mean absolute pixel difference
  std::int64_t trigger_margin = 8;  // pixels added around the prior ROI
  double roi_target_fraction = 0.24;
  int prediction_downsample = 4;
};

void validate(const PipelinePolicy& policy);

struct PipelineNets {
  PreparedNetwork prediction;  // input: frame downsampled by prediction_downsample
  PreparedNetwork gaze;        // input: full frame; retargeted to the ROI crop
};

struct FrameResult {
  std::size_t frame = 0;
  RoiBox roi;
  GazeVector gaze;
  bool repredicted = false;
  std::uint64_t flops = 0;
  std::vector<std::string> events;
};

/// Predict-then-focus state machine. The first call must be frame 0, which
/// always runs the prediction network.
class Controller {
 public:
  Controller(PipelineNets nets, PipelinePolicy policy, const TensorShape& frame_shape);

  FrameResult step(std::size_t frame_index, const Eigen::MatrixXd& frame);

  std::uint64_t prediction_flops() const { return prediction_flops_; }
  std::uint64_t gaze_flops_roi() const { return gaze_flops_roi_; }
  std::uint64_t gaze_flops_full() const { return gaze_flops_full_; }
  std::size_t predictions() const { return predictions_; }

 private:
  bool should_predict(std::size_t frame_index, const Eigen::MatrixXd& frame) const;
  RoiBox predict_roi(const Eigen::MatrixXd& frame) const;
  RoiBox dilated(const RoiBox& roi) const;

  PipelineNets nets_;
  PipelinePolicy policy_;
  TensorShape frame_shape_;
  PreparedNetwork gaze_roi_;
  bool roi_fallback_ = false;
  std::uint64_t prediction_flops_ = 0;
  std::uint64_t gaze_flops_roi_ = 0;
  std::uint64_t gaze_flops_full_ = 0;
  std::size_t predictions_ = 0;
  std::optional<std::size_t> last_frame_;
  Eigen::MatrixXd previous_;
  RoiBox roi_;
};

struct FlopsReport {
  std::uint64_t prediction_flops = 0;
  std::uint64_t gaze_flops_roi = 0;
  std::uint64_t gaze_flops_full = 0;
  std::size_t n_frames = 0;
  std::size_t predictions = 0;
  std::uint64_t total_flops = 0;     // predictions * prediction + n_frames * gaze on ROI
  std::uint64_t baseline_total = 0;  // n_frames * gaze on the full frame
  double avg_flops_per_frame = 0.0;
  double baseline_flops_per_frame = 0.0;
  double reduction_fraction = 0.0;
};

/// Analytic roll-up. `predictions` defaults to ceil(n/p) in periodic mode and
/// must be supplied for trigger mode.
FlopsReport pipeline_flops_report(const NetworkSpec& prediction, const NetworkSpec& gaze, const PipelinePolicy& policy,
                                  const TensorShape& frame_shape, std::size_t n_frames,
                                  std::optional<std::size_t> predictions = std::nullopt);

struct RunOptions {
  InputPath input = InputPath::Reconstructed;
  double capture_noise_sigma = 0.0;
  double lambda = 1e-4;
  std::uint64_t mask_seed = 0;
  std::uint64_t noise_seed = 0;
};

struct PipelineRun {
  std::vector<FrameResult> frames;
  FlopsReport report;
  std::uint64_t empirical_total_flops = 0;
  std::uint64_t reconstruction_macs_per_frame = 0;  // itemized, not part of the network FLOPs
  double mean_angular_error = 0.0;
};

/// Runs the controller over a stream and checks the analytic FLOPs total
/// against the per-frame sum (Error(Internal) on mismatch).
PipelineRun run_pipeline(const FrameStream& stream, const PipelineNets& nets, const PipelinePolicy& policy,
                         const RunOptions& options = {});

std::string frames_csv(const PipelineRun& run, const FrameStream& stream);

}  // namespace iflatcam::pipeline
