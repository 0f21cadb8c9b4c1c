#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "iflatcam/error.hpp"
#include "iflatcam/pipeline.hpp"
#include "iflatcam/seed.hpp"

namespace iflatcam::pipeline {

namespace {

std::uint64_t net_flops(const NetworkSpec& net) { return netspec::macs_to_flops(netspec::network_macs(net)); }

TensorShape downsampled(const TensorShape& frame, int factor) {
  return {1, (frame.height + factor - 1) / factor, (frame.width + factor - 1) / factor};
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Gaze network on the ROI shape, or std::nullopt when the crop is too small for it.
std::optional<NetworkSpec> gaze_on(const NetworkSpec& gaze, const RoiBox& roi) {
  try {
    auto net = netspec::with_input_shape(gaze, {gaze.input_shape.channels, roi.height, roi.width});
    netspec::infer_shapes(net);
    return net;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Validation) throw;
    return std::nullopt;
  }
}

RoiBox full_frame(const TensorShape& frame) { return {0, 0, frame.height, frame.width, 1.0}; }

}  // namespace

void validate(const PipelinePolicy& policy) {
  if (policy.mode == PolicyMode::Periodic && policy.repredict_period < 1) {
    throw validation_error("repredict_period must be >= 1");
  }
  if (policy.mode == PolicyMode::Trigger && !(policy.trigger_threshold >= 0.0)) {
    throw validation_error("trigger_threshold must be >= 0");
  }
  if (policy.trigger_margin < 0) throw validation_error("trigger_margin must be >= 0");
  if (!(policy.roi_target_fraction > 0.0 && policy.roi_target_fraction <= 1.0)) {
    throw validation_error("roi_target_fraction must lie in (0, 1]");
  }
  if (policy.prediction_downsample < 1) throw validation_error("prediction_downsample must be >= 1");
}

RoiBox centered_roi(double row, double col, std::int64_t frame_h, std::int64_t frame_w, double fraction) {
  if (frame_h < 1 || frame_w < 1) throw validation_error("centered_roi: empty frame");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw validation_error("centered_roi: fraction must lie in (0, 1]");
  if (!std::isfinite(row) || !std::isfinite(col)) throw validation_error("centered_roi: non-finite centre");
  const double side = std::sqrt(fraction);
  RoiBox roi;
  roi.height = std::clamp<std::int64_t>(std::llround(static_cast<double>(frame_h) * side), 1, frame_h);
  roi.width = std::clamp<std::int64_t>(std::llround(static_cast<double>(frame_w) * side), 1, frame_w);
  const double top = std::clamp(row - static_cast<double>(roi.height) / 2, 0.0, static_cast<double>(frame_h - roi.height));
  const double left = std::clamp(col - static_cast<double>(roi.width) / 2, 0.0, static_cast<double>(frame_w - roi.width));
  roi.top = std::llround(top);
  roi.left = std::llround(left);
  roi.area_fraction = static_cast<double>(roi.height * roi.width) / static_cast<double>(frame_h * frame_w);
  return roi;
}

Eigen::MatrixXd crop(const Eigen::MatrixXd& frame, const RoiBox& roi) {
  if (roi.top < 0 || roi.left < 0 || roi.height < 1 || roi.width < 1 || roi.top + roi.height > frame.rows() ||
      roi.left + roi.width > frame.cols()) {
    throw validation_error("ROI outside the frame");
  }
  return frame.block(roi.top, roi.left, roi.height, roi.width);
}

Controller::Controller(PipelineNets nets, PipelinePolicy policy, const TensorShape& frame_shape)
    : nets_(std::move(nets)), policy_(policy), frame_shape_(frame_shape) {
  validate(policy_);
  netspec::validate(frame_shape_);
  if (frame_shape_.channels != 1) throw validation_error("pipeline frames are single-channel");
  nets_.prediction = nets_.prediction.retarget(downsampled(frame_shape_, policy_.prediction_downsample));
  nets_.gaze = nets_.gaze.retarget(frame_shape_);
  if (nets_.prediction.spec.layers.empty() || nets_.gaze.spec.layers.empty()) throw validation_error("empty network");
  if (netspec::infer_shapes(nets_.prediction.spec).back().output.channels < 2 ||
      netspec::infer_shapes(nets_.gaze.spec).back().output.channels < 2) {
    throw validation_error("prediction and gaze networks need at least two outputs");
  }

  const RoiBox shape_probe = centered_roi(0, 0, frame_shape_.height, frame_shape_.width, policy_.roi_target_fraction);
  if (const auto net = gaze_on(nets_.gaze.spec, shape_probe)) {
    gaze_roi_ = nets_.gaze.retarget(net->input_shape);
  } else {
    roi_fallback_ = true;
    gaze_roi_ = nets_.gaze;
  }
  prediction_flops_ = net_flops(nets_.prediction.spec);
  gaze_flops_roi_ = net_flops(gaze_roi_.spec);
  gaze_flops_full_ = net_flops(nets_.gaze.spec);
}

RoiBox Controller::predict_roi(const Eigen::MatrixXd& frame) const {
  if (roi_fallback_) return full_frame(frame_shape_);
  const auto small = downsample_box(frame, policy_.prediction_downsample);
  const auto out = execute_network(nets_.prediction, Tensor::from_image(small)).output;
  const double row = static_cast<double>(frame_shape_.height) * sigmoid(out(0));
  const double col = static_cast<double>(frame_shape_.width) * sigmoid(out(1));
  return centered_roi(row, col, frame_shape_.height, frame_shape_.width, policy_.roi_target_fraction);
}

RoiBox Controller::dilated(const RoiBox& roi) const {
  RoiBox d;
  d.top = std::max<std::int64_t>(0, roi.top - policy_.trigger_margin);
  d.left = std::max<std::int64_t>(0, roi.left - policy_.trigger_margin);
  d.height = std::min(frame_shape_.height, roi.top + roi.height + policy_.trigger_margin) - d.top;
  d.width = std::min(frame_shape_.width, roi.left + roi.width + policy_.trigger_margin) - d.left;
  d.area_fraction = static_cast<double>(d.height * d.width) /
                    static_cast<double>(frame_shape_.height * frame_shape_.width);
  return d;
}

bool Controller::should_predict(std::size_t frame_index, const Eigen::MatrixXd& frame) const {
  if (frame_index == 0) return true;
  if (policy_.mode == PolicyMode::Periodic) {
    return frame_index % static_cast<std::size_t>(policy_.repredict_period) == 0;
  }
  const RoiBox d = dilated(roi_);
  const double mad = (crop(frame, d) - crop(previous_, d)).cwiseAbs().mean();
  return mad > policy_.trigger_threshold;
}

FrameResult Controller::step(std::size_t frame_index, const Eigen::MatrixXd& frame) {
  if (!last_frame_ && frame_index != 0) throw validation_error("controller not initialised: the first frame must be frame 0");
  if (last_frame_ && frame_index != *last_frame_ + 1) throw validation_error("frames must be stepped in order");
  if (frame.rows() != frame_shape_.height || frame.cols() != frame_shape_.width) {
    throw validation_error("frame shape does not match the controller");
  }

  FrameResult r;
  r.frame = frame_index;
  r.repredicted = should_predict(frame_index, frame);
  if (r.repredicted) {
    roi_ = predict_roi(frame);
    ++predictions_;
    r.events.emplace_back("predict");
    if (roi_fallback_) r.events.emplace_back("roi_fallback_full_frame");
  }
  r.roi = roi_;

  const auto out = execute_network(gaze_roi_, Tensor::from_image(crop(frame, roi_))).output;
  r.gaze = {45.0 * std::tanh(out(0)), 45.0 * std::tanh(out(1))};
  r.flops = (r.repredicted ? prediction_flops_ : 0) + gaze_flops_roi_;

  previous_ = frame;
  last_frame_ = frame_index;
  return r;
}

FlopsReport pipeline_flops_report(const NetworkSpec& prediction, const NetworkSpec& gaze, const PipelinePolicy& policy,
                                  const TensorShape& frame_shape, std::size_t n_frames,
                                  std::optional<std::size_t> predictions) {
  validate(policy);
  if (n_frames < 1) throw validation_error("pipeline_flops_report: stream must have frames");
  FlopsReport rep;
  rep.n_frames = n_frames;
  rep.prediction_flops =
      net_flops(netspec::with_input_shape(prediction, downsampled(frame_shape, policy.prediction_downsample)));
  const auto full = netspec::with_input_shape(gaze, {gaze.input_shape.channels, frame_shape.height, frame_shape.width});
  rep.gaze_flops_full = net_flops(full);
  const RoiBox roi = centered_roi(0, 0, frame_shape.height, frame_shape.width, policy.roi_target_fraction);
  const auto on_roi = gaze_on(gaze, roi);
  rep.gaze_flops_roi = on_roi ? net_flops(*on_roi) : rep.gaze_flops_full;

  if (predictions) {
    rep.predictions = *predictions;
  } else if (policy.mode == PolicyMode::Periodic) {
    const auto p = static_cast<std::size_t>(policy.repredict_period);
    rep.predictions = (n_frames + p - 1) / p;
  } else {
    throw validation_error("trigger mode needs the measured prediction count");
  }
  rep.total_flops = rep.predictions * rep.prediction_flops + n_frames * rep.gaze_flops_roi;
  rep.baseline_total = n_frames * rep.gaze_flops_full;
  rep.avg_flops_per_frame = static_cast<double>(rep.total_flops) / static_cast<double>(n_frames);
  rep.baseline_flops_per_frame = static_cast<double>(rep.gaze_flops_full);
  rep.reduction_fraction = 1.0 - static_cast<double>(rep.total_flops) / static_cast<double>(rep.baseline_total);
  return rep;
}

PipelineRun run_pipeline(const FrameStream& stream, const PipelineNets& nets, const PipelinePolicy& policy,
                         const RunOptions& options) {
  if (stream.frames.empty() || stream.frames.size() != stream.ground_truth.size()) {
    throw validation_error("stream frames and ground truth must align");
  }
  const TensorShape shape = stream.shape();
  for (const auto& f : stream.frames) {
    if (f.pixels.rows() != shape.height || f.pixels.cols() != shape.width) throw validation_error("stream frames differ in shape");
  }

  std::optional<lensless::SeparableOperator> op;
  std::optional<lensless::TikhonovSolver> solver;
  if (options.input != InputPath::Scene) {
    op = lensless::compute_operator(
        lensless::generate_mask_pair(shape.height, shape.width, shape.height, shape.width, options.mask_seed));
    if (options.input == InputPath::Reconstructed) solver.emplace(*op, options.lambda);
  }

  PipelineRun run;
  run.reconstruction_macs_per_frame = solver ? solver->macs_per_solve() : 0;
  Controller controller(nets, policy, shape);
  double error_sum = 0.0;
  for (std::size_t i = 0; i < stream.frames.size(); ++i) {
    Eigen::MatrixXd input;
    if (!op) {
      input = stream.frames[i].pixels;
    } else {
      const auto y = lensless::forward_capture(*op, stream.frames[i], options.capture_noise_sigma,
                                               splitmix64(options.noise_seed ^ static_cast<std::uint64_t>(i)));
      if (solver) {
        input = solver->solve(y, lensless::OutputMode::Display).pixels;
      } else {
        input = y.samples / static_cast<double>(shape.height * shape.width);
      }
    }
    auto result = controller.step(i, input);
    run.empirical_total_flops += result.flops;
    error_sum += angular_error(result.gaze, stream.ground_truth[i].gaze);
    run.frames.push_back(std::move(result));
  }
  run.mean_angular_error = error_sum / static_cast<double>(stream.frames.size());

  const bool periodic = policy.mode == PolicyMode::Periodic;
  run.report = pipeline_flops_report(nets.prediction.spec, nets.gaze.spec, policy, shape, stream.frames.size(),
                                     periodic ? std::nullopt : std::optional<std::size_t>(controller.predictions()));
  if (run.report.predictions != controller.predictions()) {
    throw internal_error("prediction count differs from the periodic schedule");
  }
  if (run.report.total_flops != run.empirical_total_flops) {
    throw internal_error("analytic FLOPs total " + std::to_string(run.report.total_flops) +
                         " differs from the per-frame sum " + std::to_string(run.empirical_total_flops));
  }
  return run;
}

std::string frames_csv(const PipelineRun& run, const FrameStream& stream) {
  std::ostringstream out;
  out << "frame,predicted_yaw,predicted_pitch,truth_yaw,truth_pitch,roi_top,roi_left,roi_h,roi_w,flops,repredicted_flag\n";
  char buf[256];
  for (const auto& f : run.frames) {
    const auto& truth = stream.ground_truth.at(f.frame).gaze;
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%" PRId64 ",%" PRId64 ",%" PRId64 ",%" PRId64 ",%" PRIu64 ",%d\n",
                  f.frame, f.gaze.yaw, f.gaze.pitch, truth.yaw, truth.pitch, f.roi.top, f.roi.left, f.roi.height,
                  f.roi.width, f.flops, f.repredicted ? 1 : 0);
    out << buf;
  }
  return out.str();
}

}  // namespace iflatcam::pipeline
