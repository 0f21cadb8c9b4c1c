#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "iflatcam/error.hpp"
#include "iflatcam/pipeline.hpp"
#include "fixtures.hpp"
#include "support.hpp"

using namespace iflatcam;
using namespace iflatcam::pipeline;
using compress::LayerStorage;
using netspec::LayerKind;
using netspec::LayerSpec;
using testing::random_layer;
using testing::random_tensor;

namespace {

PipelineNets preset_nets(std::uint64_t seed, bool compressed) {
  const auto pred = testing::preset("prediction-net");
  const auto gaze = testing::preset("gaze-net");
  const auto wp = testing::seeded_weights(pred, seed);
  const auto wg = testing::seeded_weights(gaze, seed);
  if (!compressed) return {prepare_network(pred, wp), prepare_network(gaze, wg)};
  compress::CompressionOptions opts;
  const auto sp = compress::compress_network(pred, wp, opts);
  const auto sg = compress::compress_network(gaze, wg, opts);
  return {prepare_network(pred, sp), prepare_network(gaze, sg)};
}

// Row-wise L1 norm bound of one layer as a map on activations.
double layer_gain(const LayerSpec& l, const Eigen::MatrixXd& w) {
  (void)l;
  return w.cwiseAbs().rowwise().sum().maxCoeff();
}

}  // namespace

TEST_CASE("angular error examples and properties") {
  CHECK(angular_error({10, -5}, {10, -5}) == 0.0);
  CHECK(std::fabs(angular_error({0, 0}, {90, 0}) - 90.0) < 1e-9);
  CHECK(std::fabs(angular_error({0, 0}, {3, 0}) - 3.0) < 1e-9);
  CHECK(std::fabs(angular_error({0, 0}, {0, 3}) - 3.0) < 1e-9);
  CHECK(std::fabs(angular_error({0, 0}, {180, 0}) - 180.0) < 1e-9);
  CHECK_THROWS_AS(angular_error({NAN, 0}, {0, 0}), Error);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> yaw(-180, 180), pitch(-90, 90);
  for (int i = 0; i < 2000; ++i) {
    const GazeVector a{yaw(rng), pitch(rng)}, b{yaw(rng), pitch(rng)}, c{yaw(rng), pitch(rng)};
    const double ab = angular_error(a, b);
    CHECK(ab == angular_error(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 180.0);
    CHECK(angular_error(a, c) <= ab + angular_error(b, c) + 1e-9);
  }
}

TEST_CASE("synthetic stream contract") {
  const TensorShape shape{1, 64, 64};
  const auto a = generate_synthetic_stream(50, shape, 9);
  const auto b = generate_synthetic_stream(50, shape, 9);
  REQUIRE(a.frames.size() == 50);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(a.frames[i].pixels == b.frames[i].pixels);
    CHECK(a.ground_truth[i].pupil_row == b.ground_truth[i].pupil_row);
  }
  const auto one = generate_synthetic_stream(1, shape, 1);
  CHECK(one.frames.size() == 1);
  CHECK(one.ground_truth.size() == 1);
  CHECK(one.shape() == shape);
  CHECK(one.frames[0].pixels.minCoeff() >= 0.0);
  CHECK(one.frames[0].pixels.maxCoeff() <= 1.0);
  // The pupil is the darkest region and sits at the recorded centre.
  const auto& gt = one.ground_truth[0];
  CHECK(one.frames[0].pixels(static_cast<Eigen::Index>(gt.pupil_row), static_cast<Eigen::Index>(gt.pupil_col)) < 0.1);
  CHECK_THROWS_AS(generate_synthetic_stream(0, shape, 1), Error);
}

TEST_CASE("stream motion statistics over 1000 frames") {
  const auto s = generate_synthetic_stream(1000, {1, 128, 128}, 42);
  double total = 0.0;
  int saccades = 0;
  for (std::size_t i = 1; i < s.frames.size(); ++i) {
    const auto& p = s.ground_truth[i - 1];
    const auto& q = s.ground_truth[i];
    const double step = std::hypot(q.pupil_row - p.pupil_row, q.pupil_col - p.pupil_col);
    total += step;
    if (q.saccade) {
      ++saccades;
      CHECK(step >= 8.0 - 1e-9);
    } else {
      CHECK(step <= 2.0 + 1e-9);
    }
  }
  CHECK(total / 999.0 <= 2.5);
  // 99% interval of Binomial(999, 0.03): mean 29.97, sd 5.39.
  CHECK(saccades >= 16);
  CHECK(saccades <= 44);
}

TEST_CASE("gaze truth follows the affine pupil map") {
  const TensorShape shape{1, 100, 200};
  const auto g = gaze_from_pupil(50, 100, shape);
  CHECK(g.yaw == 0.0);
  CHECK(g.pitch == 0.0);
  CHECK(gaze_from_pupil(0, 200, shape).yaw == 30.0);
  CHECK(gaze_from_pupil(0, 200, shape).pitch == 30.0);
}

TEST_CASE("affine activation quantizer") {
  Eigen::VectorXd x(4);
  x << -1.0, 0.0, 0.5, 3.0;
  const auto q = AffineQuant::fit(x);
  CHECK(q.scale == 4.0 / 255.0);
  CHECK(q.zero_point == 64);
  CHECK(q.apply(0.0) == 0.0);
  for (Eigen::Index i = 0; i < x.size(); ++i) CHECK(std::fabs(q.apply(x(i)) - x(i)) <= q.scale);
  const auto zero = AffineQuant::fit(Eigen::VectorXd::Zero(3));
  CHECK(zero.apply(0.0) == 0.0);
}

TEST_CASE("all-zero weights give all-zero output") {
  const netspec::NetworkSpec net{"z", {2, 6, 6}, {LayerSpec{LayerKind::Conv, 3, 1, 1, 2, 3, netspec::Activation::None},
                                                   LayerSpec{LayerKind::Fc, 1, 1, 0, 3, 2, netspec::Activation::None}}};
  std::vector<compress::DenseWeights> w{Eigen::MatrixXd::Zero(3, 18), Eigen::MatrixXd::Zero(2, 3)};
  std::mt19937_64 rng(1);
  const auto out = execute_network(prepare_network(net, w), random_tensor(net.input_shape, rng)).output;
  CHECK(out.isZero(0.0));
}

TEST_CASE("executor rejects bad inputs") {
  const netspec::NetworkSpec net{"n", {1, 6, 6}, {LayerSpec{LayerKind::Conv, 3, 1, 1, 1, 2}}};
  std::vector<compress::DenseWeights> w{compress::random_weights(net.layers[0], 1)};
  const auto prepared = prepare_network(net, w);
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(execute_network(prepared, random_tensor({1, 5, 6}, rng)), Error);
  CHECK_THROWS_AS(prepare_network(net, std::vector<compress::DenseWeights>{}), Error);
  auto broken = prepared;
  broken.layers.clear();
  CHECK_THROWS_AS(execute_network(broken, random_tensor({1, 6, 6}, rng)), Error);
}

TEST_CASE("executor matches a direct convolution") {
  const LayerSpec l{LayerKind::Conv, 3, 2, 1, 2, 3, netspec::Activation::None};
  const netspec::NetworkSpec net{"c", {2, 7, 5}, {l}};
  std::vector<compress::DenseWeights> w{compress::random_weights(l, 3)};
  std::mt19937_64 rng(2);
  const auto in = random_tensor(net.input_shape, rng);
  const auto out = execute_network(prepare_network(net, w), in, {.quantize_activations = false}).output;
  const auto os = netspec::infer_output_shape(l, net.input_shape);
  for (std::int64_t o = 0; o < 3; ++o)
    for (std::int64_t y = 0; y < os.height; ++y)
      for (std::int64_t x = 0; x < os.width; ++x) {
        double want = 0.0;
        for (std::int64_t i = 0; i < 2; ++i)
          for (std::int64_t ky = 0; ky < 3; ++ky)
            for (std::int64_t kx = 0; kx < 3; ++kx) {
              const auto sy = y * 2 + ky - 1, sx = x * 2 + kx - 1;
              if (sy < 0 || sy >= 7 || sx < 0 || sx >= 5) continue;
              want += w[0](o, (i * 3 + ky) * 3 + kx) * in.at(i, sy, sx);
            }
        CHECK(out((o * os.height + y) * os.width + x) == Catch::Approx(want).margin(1e-12));
      }
}

TEST_CASE("pruned compressed execution equals zero-masked dense execution") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const std::int64_t c = 1 + static_cast<std::int64_t>(rng() % 4);
    const std::int64_t hw = 4 + static_cast<std::int64_t>(rng() % 6);
    netspec::NetworkSpec net{"r", {c, hw, hw}, {}};
    const std::size_t depth = 1 + rng() % 4;
    std::int64_t ch = c;
    for (std::size_t i = 0; i < depth; ++i) {
      net.layers.push_back(random_layer(rng, ch, i + 1 == depth));
      ch = net.layers.back().out_channels;
    }
    const auto w = testing::seeded_weights(net, rng());
    compress::CompressionOptions opts;
    opts.sparsity_target = 0.5;
    opts.include_dw = true;
    const auto storage = compress::compress_network(net, w, opts);
    std::vector<compress::DenseWeights> masked;
    for (std::size_t i = 0; i < net.layers.size(); ++i) masked.push_back(compress::effective_weights(net.layers[i], storage[i]));
    const auto in = random_tensor(net.input_shape, rng);
    const auto a = execute_network(prepare_network(net, storage), in).output;
    const auto b = execute_network(prepare_network(net, masked), in).output;
    CHECK(a == b);
  }
}

TEST_CASE("quantized execution stays within the propagated bound") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    netspec::NetworkSpec net{"q", {2, 8, 8}, {}};
    std::int64_t ch = 2;
    for (std::size_t i = 0; i < 3; ++i) {
      net.layers.push_back(random_layer(rng, ch, i == 2));
      ch = net.layers.back().out_channels;
    }
    const auto w = testing::seeded_weights(net, rng());
    compress::CompressionOptions opts;
    opts.sparsity_target = 0.0;
    opts.exponent_bits = 5;
    opts.include_dw = true;
    const auto storage = compress::compress_network(net, w, opts);
    const auto prepared = prepare_network(net, storage);
    const auto in = random_tensor(net.input_shape, rng);
    const auto q = execute_network(prepared, in);
    const auto f = execute_network(prepared, in, {.quantize_activations = false});
    double bound = q.activation_scales[0];
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      bound = layer_gain(net.layers[i], prepared.layers[i].weights) * bound + q.activation_scales[i + 1];
    }
    CHECK((q.output - f.output).cwiseAbs().maxCoeff() <= bound * (1 + 1e-12));
  }
}

TEST_CASE("resampling helpers") {
  Eigen::MatrixXd img(4, 4);
  img << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16;
  const auto small = downsample_box(img, 2);
  CHECK(small(0, 0) == 3.5);
  CHECK(small(1, 1) == 13.5);
  CHECK(downsample_box(img, 3)(1, 1) == 16.0);
  CHECK(resize_nearest(img, 4, 4) == img);
  CHECK(resize_nearest(img, 2, 2)(0, 0) == 6.0);
}

TEST_CASE("ROI geometry") {
  const auto roi = centered_roi(64, 64, 128, 128, 0.24);
  CHECK(roi.height == 63);
  CHECK(roi.width == 63);
  CHECK(roi.area_fraction == 63.0 * 63.0 / 16384.0);
  const auto corner = centered_roi(0, 500, 128, 128, 0.24);
  CHECK(corner.top == 0);
  CHECK(corner.left == 128 - 63);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> pos(-50, 250), frac(0.01, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const std::int64_t h = 1 + static_cast<std::int64_t>(rng() % 200), w = 1 + static_cast<std::int64_t>(rng() % 200);
    const double f = frac(rng);
    const auto r = centered_roi(pos(rng), pos(rng), h, w, f);
    CHECK(r.top >= 0);
    CHECK(r.left >= 0);
    CHECK(r.top + r.height <= h);
    CHECK(r.left + r.width <= w);
    const double hf = static_cast<double>(h) * std::sqrt(f), wf = static_cast<double>(w) * std::sqrt(f);
    CHECK(std::fabs(static_cast<double>(r.height) - hf) <= 0.5 + 1e-9 + (hf < 1 ? 1 : 0));
    CHECK(std::fabs(static_cast<double>(r.width) - wf) <= 0.5 + 1e-9 + (wf < 1 ? 1 : 0));
  }
}

TEST_CASE("periodic controller schedule and FLOPs ledger") {
  const auto nets = preset_nets(1, false);
  const auto stream = generate_synthetic_stream(45, {1, 128, 128}, 3);
  PipelinePolicy policy;
  const auto run = run_pipeline(stream, nets, policy, {.input = InputPath::Scene});
  std::size_t preds = 0;
  for (const auto& f : run.frames) {
    preds += f.repredicted;
    CHECK(f.repredicted == (f.frame % 20 == 0));
    CHECK(f.roi.height == 63);
    CHECK(std::isfinite(f.gaze.yaw));
  }
  CHECK(preds == 3);
  CHECK(run.report.total_flops == run.empirical_total_flops);
  CHECK(run.report.reduction_fraction > 0.5);

  policy.repredict_period = 1;
  const auto every = run_pipeline(stream, nets, policy, {.input = InputPath::Scene});
  for (const auto& f : every.frames) CHECK(f.flops == every.report.prediction_flops + every.report.gaze_flops_roi);
  CHECK(every.report.avg_flops_per_frame ==
        static_cast<double>(every.report.prediction_flops + every.report.gaze_flops_roi));

  policy.repredict_period = 1000;
  policy.roi_target_fraction = 1.0;
  const auto once = run_pipeline(stream, nets, policy, {.input = InputPath::Scene});
  CHECK(once.report.predictions == 1);
  CHECK(once.report.reduction_fraction < 0.0);
  CHECK(once.report.reduction_fraction ==
        Catch::Approx(-static_cast<double>(once.report.prediction_flops) / (45.0 * once.report.gaze_flops_full)));
}

TEST_CASE("prediction count is ceil(n/p)") {
  const auto pred = testing::preset("prediction-net");
  const auto gaze = testing::preset("gaze-net");
  for (std::size_t n : {1u, 19u, 20u, 21u, 1000u}) {
    for (std::int64_t p : {1, 7, 20, 5000}) {
      PipelinePolicy policy;
      policy.repredict_period = p;
      const auto rep = pipeline_flops_report(pred, gaze, policy, {1, 128, 128}, n);
      CHECK(rep.predictions == (n + static_cast<std::size_t>(p) - 1) / static_cast<std::size_t>(p));
    }
  }
  PipelinePolicy trig;
  trig.mode = PolicyMode::Trigger;
  CHECK_THROWS_AS(pipeline_flops_report(pred, gaze, trig, {1, 128, 128}, 10), Error);
}

TEST_CASE("trigger mode on a static scene predicts once") {
  const auto nets = preset_nets(2, false);
  const auto stream = generate_synthetic_stream(30, {1, 128, 128}, 5, {.static_scene = true});
  PipelinePolicy policy;
  policy.mode = PolicyMode::Trigger;
  policy.trigger_threshold = 1e-6;
  for (auto path : {InputPath::Scene, InputPath::Reconstructed}) {
    const auto run = run_pipeline(stream, nets, policy, {.input = path});
    CHECK(run.report.predictions == 1);
    CHECK(run.frames[0].repredicted);
    CHECK(run.report.total_flops == run.empirical_total_flops);
  }
  const auto moving = generate_synthetic_stream(60, {1, 128, 128}, 5);
  policy.trigger_threshold = 0.001;
  const auto run = run_pipeline(moving, nets, policy, {.input = InputPath::Scene});
  CHECK(run.report.predictions > 1);
  CHECK(run.report.total_flops == run.empirical_total_flops);
}

TEST_CASE("controller must start at frame 0 and run in order") {
  const auto nets = preset_nets(3, false);
  Controller c(nets, PipelinePolicy{}, {1, 128, 128});
  const Eigen::MatrixXd frame = Eigen::MatrixXd::Constant(128, 128, 0.5);
  CHECK_THROWS_AS(c.step(1, frame), Error);
  CHECK(c.step(0, frame).repredicted);
  CHECK_THROWS_AS(c.step(5, frame), Error);
  CHECK_FALSE(c.step(1, frame).repredicted);
  CHECK_THROWS_AS(c.step(2, Eigen::MatrixXd::Zero(64, 64)), Error);
}

TEST_CASE("ROIs too small for the gaze net fall back to the full frame") {
  const auto pred = testing::preset("prediction-net");
  const netspec::NetworkSpec gaze{"g", {1, 128, 128}, {LayerSpec{LayerKind::Conv, 5, 1, 0, 1, 2}, LayerSpec{LayerKind::Fc, 1, 1, 0, 2, 2}}};
  const PipelineNets nets{prepare_network(pred, testing::seeded_weights(pred, 1)),
                          prepare_network(gaze, testing::seeded_weights(gaze, 1))};
  PipelinePolicy policy;
  policy.roi_target_fraction = 0.0001;
  const auto stream = generate_synthetic_stream(3, {1, 128, 128}, 1);
  const auto run = run_pipeline(stream, nets, policy, {.input = InputPath::Scene});
  CHECK(run.frames[0].roi == RoiBox{0, 0, 128, 128, 1.0});
  CHECK(std::find(run.frames[0].events.begin(), run.frames[0].events.end(), "roi_fallback_full_frame") !=
        run.frames[0].events.end());
  CHECK(run.report.gaze_flops_roi == run.report.gaze_flops_full);
  CHECK(run.report.total_flops == run.empirical_total_flops);
}

TEST_CASE("input paths and determinism") {
  const auto nets = preset_nets(4, true);
  const auto stream = generate_synthetic_stream(8, {1, 128, 128}, 2);
  PipelinePolicy policy;
  policy.repredict_period = 4;
  const RunOptions recon{.input = InputPath::Reconstructed, .capture_noise_sigma = 0.01, .noise_seed = 7};
  const auto a = run_pipeline(stream, nets, policy, recon);
  const auto b = run_pipeline(stream, nets, policy, recon);
  CHECK(frames_csv(a, stream) == frames_csv(b, stream));
  CHECK(a.reconstruction_macs_per_frame > 0);
  const auto raw = run_pipeline(stream, nets, policy, {.input = InputPath::RawMeasurement});
  CHECK(raw.reconstruction_macs_per_frame == 0);
  CHECK(raw.report.total_flops == a.report.total_flops);
  const auto csv = frames_csv(a, stream);
  CHECK(csv.rfind("frame,predicted_yaw,predicted_pitch,truth_yaw,truth_pitch,roi_top,roi_left,roi_h,roi_w,flops,"
                  "repredicted_flag\n",
                  0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
}
