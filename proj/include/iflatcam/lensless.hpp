#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace iflatcam::lensless {

// Physical transmission patterns live in {0,1}; the separable model computes
// in {-1,+1} via b -> 2b - 1.
enum class MaskDomain { ZeroOne, PlusMinusOne };

struct SeparableMaskPair {
  Eigen::MatrixXd phi_left;   // m_rows x n_rows
  Eigen::MatrixXd phi_right;  // m_cols x n_cols
  MaskDomain domain = MaskDomain::ZeroOne;

  Eigen::Index measurement_rows() const { return phi_left.rows(); }
  Eigen::Index measurement_cols() const { return phi_right.rows(); }
  Eigen::Index scene_rows() const { return phi_left.cols(); }
  Eigen::Index scene_cols() const { return phi_right.cols(); }
};

void validate(const SeparableMaskPair& mask);
SeparableMaskPair to_domain(const SeparableMaskPair& mask, MaskDomain domain);

/// Real-valued separable operator Y = left * X * right^T in the compute domain.
struct SeparableOperator {
  Eigen::MatrixXd left;
  Eigen::MatrixXd right;
};

SeparableOperator compute_operator(const SeparableMaskPair& mask);

struct SceneImage {
  Eigen::MatrixXd pixels;
};

struct SensorMeasurement {
  Eigen::MatrixXd samples;
  double noise_sigma = 0.0;
};

/// Maximal-length binary sequence of period 2^order - 1 (order in [2, 20]),
/// produced by a Fibonacci LFSR with a primitive feedback polynomial.
std::vector<std::uint8_t> max_length_sequence(int order);

/// Deterministic mask pair in the {0,1} domain. Each column of a mask is a
/// cyclic shift of an m-sequence whose period covers both mask dimensions; the
/// seed picks the starting shift and the first shift whose {-1,+1} image has
/// full rank is kept. If no shift qualifies (or the size exceeds the LFSR
/// table), a seeded Bernoulli(0.5) pattern is used instead.
SeparableMaskPair generate_mask_pair(Eigen::Index n_rows, Eigen::Index n_cols, Eigen::Index m_rows,
                                     Eigen::Index m_cols, std::uint64_t seed);

SensorMeasurement forward_capture(const SeparableOperator& op, const SceneImage& scene, double noise_sigma,
                                  std::uint64_t seed);
SensorMeasurement forward_capture(const SeparableMaskPair& mask, const SceneImage& scene, double noise_sigma,
                                  std::uint64_t seed);

enum class OutputMode { Raw, Display };

/// Tikhonov solver with the two factor SVDs computed once; reusable across frames.
class TikhonovSolver {
 public:
  TikhonovSolver(const SeparableOperator& op, double lambda);

  SceneImage solve(const SensorMeasurement& y, OutputMode mode = OutputMode::Raw) const;

  double lambda() const { return lambda_; }
  /// Multiply-accumulates spent per solve (two projections plus the filter).
  std::uint64_t macs_per_solve() const;

 private:
  Eigen::MatrixXd u_left_, v_left_, u_right_, v_right_;
  Eigen::MatrixXd filter_;  // sigma_l * sigma_r / (sigma_l^2 sigma_r^2 + lambda)
  double lambda_;
};

SceneImage reconstruct_tikhonov(const SeparableOperator& op, const SensorMeasurement& y, double lambda,
                                OutputMode mode = OutputMode::Raw);
SceneImage reconstruct_tikhonov(const SeparableMaskPair& mask, const SensorMeasurement& y, double lambda,
                                OutputMode mode = OutputMode::Raw);

/// Frobenius norm of left * X * right^T - Y.
double data_residual(const SeparableOperator& op, const SceneImage& x, const SensorMeasurement& y);

/// PSNR in dB with peak 1.0; +infinity when the images are identical.
double psnr(const SceneImage& reference, const SceneImage& candidate);

SceneImage random_scene(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed);

nlohmann::json mask_to_json(const SeparableMaskPair& mask);
SeparableMaskPair mask_from_json(const nlohmann::json& doc);

}  // namespace iflatcam::lensless
