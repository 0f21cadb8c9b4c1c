#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "iflatcam/error.hpp"
#include "iflatcam/pipeline.hpp"

namespace iflatcam::pipeline {

namespace {

constexpr double kSclera = 0.85;
constexpr double kIris = 0.45;
constexpr double kPupil = 0.08;

struct Bounds {
  double lo_row, hi_row, lo_col, hi_col;

  bool contains(double r, double c) const { return r >= lo_row && r <= hi_row && c >= lo_col && c <= hi_col; }
};

// Mirror a coordinate back inside [lo, hi]; returns the reflected velocity sign.
double reflect(double& p, double lo, double hi) {
  if (p < lo) {
    p = 2 * lo - p;
    return -1.0;
  }
  if (p > hi) {
    p = 2 * hi - p;
    return -1.0;
  }
  return 1.0;
}

Eigen::MatrixXd render(double row, double col, std::int64_t h, std::int64_t w) {
  const double m = static_cast<double>(std::min(h, w));
  const double r_iris = 0.2 * m;
  const double ry = 0.07 * m;
  const double rx = 0.09 * m;
  Eigen::MatrixXd img(h, w);
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (double sy : {0.25, 0.75}) {
        for (double sx : {0.25, 0.75}) {
          const double dy = static_cast<double>(y) + sy - row;
          const double dx = static_cast<double>(x) + sx - col;
          if ((dy * dy) / (ry * ry) + (dx * dx) / (rx * rx) <= 1.0) {
            acc += kPupil;
          } else if (dy * dy + dx * dx <= r_iris * r_iris) {
            acc += kIris;
          } else {
            acc += kSclera;
          }
        }
      }
      img(y, x) = acc / 4.0;
    }
  }
  return img;
}

}  // namespace

TensorShape FrameStream::shape() const {
  if (frames.empty()) return {1, 1, 1};
  return {1, frames.front().pixels.rows(), frames.front().pixels.cols()};
}

GazeVector gaze_from_pupil(double row, double col, const TensorShape& shape) {
  const auto h = static_cast<double>(shape.height);
  const auto w = static_cast<double>(shape.width);
  return {60.0 * (col - w / 2) / w, -60.0 * (row - h / 2) / h};
}

FrameStream generate_synthetic_stream(std::size_t n_frames, const TensorShape& shape, std::uint64_t motion_seed,
                                      const StreamOptions& options) {
  if (n_frames < 1) throw validation_error("stream needs at least one frame");
  netspec::validate(shape);
  if (shape.channels != 1) throw validation_error("synthetic stream frames are single-channel");
  if (!(options.max_step >= 0.0) || !(options.saccade_probability >= 0.0 && options.saccade_probability <= 1.0) ||
      !(options.saccade_min >= 0.0 && options.saccade_min <= options.saccade_max) || !(options.fps > 0.0)) {
    throw validation_error("invalid stream options");
  }

  const auto h = static_cast<double>(shape.height);
  const auto w = static_cast<double>(shape.width);
  const Bounds box{0.25 * h, 0.75 * h, 0.25 * w, 0.75 * w};

  std::mt19937_64 rng(motion_seed);
  std::normal_distribution<double> jitter(0.0, 0.5);
  std::bernoulli_distribution saccade(options.saccade_probability);
  std::uniform_real_distribution<double> angle(0.0, 2 * std::numbers::pi);
  std::uniform_real_distribution<double> length(options.saccade_min, options.saccade_max);

  FrameStream out;
  out.fps_nominal = options.fps;
  double row = h / 2;
  double col = w / 2;
  double vr = 0.0;
  double vc = 0.0;
  for (std::size_t f = 0; f < n_frames; ++f) {
    bool jumped = false;
    if (f > 0 && !options.static_scene) {
      if (saccade(rng)) {
        double nr = row, nc = col;
        bool placed = false;
        for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
          const double a = angle(rng);
          const double len = length(rng);
          nr = row + len * std::sin(a);
          nc = col + len * std::cos(a);
          placed = box.contains(nr, nc);
        }
        if (!placed) {
          // Head for the centre of the box, which is always far enough away.
          const double dr = (box.lo_row + box.hi_row) / 2 - row;
          const double dc = (box.lo_col + box.hi_col) / 2 - col;
          const double norm = std::max(std::hypot(dr, dc), 1e-12);
          nr = row + options.saccade_min * dr / norm;
          nc = col + options.saccade_min * dc / norm;
        }
        row = nr;
        col = nc;
        vr = vc = 0.0;
        jumped = true;
      } else {
        vr = 0.85 * vr + jitter(rng);
        vc = 0.85 * vc + jitter(rng);
        const double speed = std::hypot(vr, vc);
        if (speed > options.max_step) {
          vr *= options.max_step / speed;
          vc *= options.max_step / speed;
        }
        row += vr;
        col += vc;
        vr *= reflect(row, box.lo_row, box.hi_row);
        vc *= reflect(col, box.lo_col, box.hi_col);
      }
    }
    out.frames.push_back({render(row, col, shape.height, shape.width)});
    out.ground_truth.push_back({row, col, gaze_from_pupil(row, col, shape), jumped});
  }
  return out;
}

double angular_error(const GazeVector& a, const GazeVector& b) {
  if (!std::isfinite(a.yaw) || !std::isfinite(a.pitch) || !std::isfinite(b.yaw) || !std::isfinite(b.pitch)) {
    throw validation_error("angular_error: non-finite gaze");
  }
  constexpr double deg = std::numbers::pi / 180.0;
  auto unit = [](const GazeVector& g) {
    return Eigen::Vector3d(std::cos(g.pitch * deg) * std::sin(g.yaw * deg), std::sin(g.pitch * deg),
                           std::cos(g.pitch * deg) * std::cos(g.yaw * deg));
  };
  const Eigen::Vector3d u = unit(a);
  const Eigen::Vector3d v = unit(b);
  return std::atan2(u.cross(v).norm(), u.dot(v)) / deg;
}

}  // namespace iflatcam::pipeline
