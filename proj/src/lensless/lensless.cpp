#include "iflatcam/lensless.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include "iflatcam/error.hpp"
#include "iflatcam/json_util.hpp"
#include "iflatcam/seed.hpp"

namespace iflatcam::lensless {

namespace {

// Primitive-polynomial tap positions (1-based) for Fibonacci LFSRs of order 2..20.
const std::array<std::vector<int>, 21> kTaps = {{
    {}, {}, {2, 1}, {3, 2}, {4, 3}, {5, 3}, {6, 5}, {7, 6}, {8, 6, 5, 4}, {9, 5}, {10, 7},
    {11, 9}, {12, 6, 4, 1}, {13, 4, 3, 1}, {14, 5, 3, 1}, {15, 14}, {16, 15, 13, 4}, {17, 14},
    {18, 11}, {19, 6, 2, 1}, {20, 17},
}};

constexpr int kMaxOrder = 20;
constexpr double kRankTolerance = 1e-9;

bool full_rank_pm1(const Eigen::MatrixXd& zero_one) {
  const Eigen::MatrixXd pm = 2.0 * zero_one.array() - 1.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(pm);
  const auto& s = svd.singularValues();
  return s(s.size() - 1) > kRankTolerance * s(0);
}

Eigen::MatrixXd mask_side(Eigen::Index m, Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  int order = 2;
  while (order <= kMaxOrder && ((1L << order) - 1) < std::max(m, n)) ++order;

  if (order <= kMaxOrder) {
    const auto seq = max_length_sequence(order);
    const auto period = static_cast<Eigen::Index>(seq.size());
    const auto start = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(period));
    Eigen::MatrixXd side(m, n);
    for (Eigen::Index t = 0; t < period; ++t) {
      const Eigen::Index offset = (start + t) % period;
      for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < m; ++i) side(i, j) = seq[static_cast<std::size_t>((i + j + offset) % period)];
      }
      if (full_rank_pm1(side)) return side;
    }
  }

  std::bernoulli_distribution coin(0.5);
  Eigen::MatrixXd side(m, n);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) side(i, j) = coin(rng) ? 1.0 : 0.0;
  }
  return side;
}

void check_alphabet(const Eigen::MatrixXd& m, MaskDomain domain) {
  const double lo = domain == MaskDomain::ZeroOne ? 0.0 : -1.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double v = m.data()[i];
    if (v != lo && v != 1.0) throw validation_error("mask entry outside the binary alphabet");
  }
}

void check_shapes(const SeparableOperator& op, Eigen::Index rows, Eigen::Index cols, bool scene_side) {
  const Eigen::Index want_rows = scene_side ? op.left.cols() : op.left.rows();
  const Eigen::Index want_cols = scene_side ? op.right.cols() : op.right.rows();
  if (rows != want_rows || cols != want_cols) {
    throw validation_error("shape mismatch: got " + std::to_string(rows) + "x" + std::to_string(cols) + ", expected " +
                           std::to_string(want_rows) + "x" + std::to_string(want_cols));
  }
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& rows, const char* what) {
  if (!rows.is_array() || rows.empty() || !rows.front().is_array() || rows.front().empty()) {
    throw validation_error(std::string("mask: '") + what + "' must be a non-empty array of rows");
  }
  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  const auto n_cols = static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd m(n_rows, n_cols);
  for (Eigen::Index r = 0; r < n_rows; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n_cols) {
      throw validation_error(std::string("mask: ragged rows in '") + what + "'");
    }
    for (Eigen::Index c = 0; c < n_cols; ++c) {
      if (!row[static_cast<std::size_t>(c)].is_number()) throw validation_error("mask: non-numeric entry");
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

}  // namespace

void validate(const SeparableMaskPair& mask) {
  if (mask.phi_left.size() == 0 || mask.phi_right.size() == 0) throw validation_error("mask: empty factor");
  check_alphabet(mask.phi_left, mask.domain);
  check_alphabet(mask.phi_right, mask.domain);
}

SeparableMaskPair to_domain(const SeparableMaskPair& mask, MaskDomain domain) {
  if (mask.domain == domain) return mask;
  SeparableMaskPair out = mask;
  out.domain = domain;
  if (domain == MaskDomain::PlusMinusOne) {
    out.phi_left = 2.0 * mask.phi_left.array() - 1.0;
    out.phi_right = 2.0 * mask.phi_right.array() - 1.0;
  } else {
    out.phi_left = (mask.phi_left.array() + 1.0) / 2.0;
    out.phi_right = (mask.phi_right.array() + 1.0) / 2.0;
  }
  return out;
}

SeparableOperator compute_operator(const SeparableMaskPair& mask) {
  validate(mask);
  const auto pm = to_domain(mask, MaskDomain::PlusMinusOne);
  return {pm.phi_left, pm.phi_right};
}

std::vector<std::uint8_t> max_length_sequence(int order) {
  if (order < 2 || order > kMaxOrder) throw validation_error("m-sequence order must be in [2, 20]");
  const auto& taps = kTaps[static_cast<std::size_t>(order)];
  const std::size_t period = (std::size_t{1} << order) - 1;
  std::vector<std::uint8_t> state(static_cast<std::size_t>(order), 1);
  std::vector<std::uint8_t> out;
  out.reserve(period);
  for (std::size_t i = 0; i < period; ++i) {
    out.push_back(state.back());
    std::uint8_t feedback = 0;
    for (int t : taps) feedback ^= state[static_cast<std::size_t>(t - 1)];
    std::rotate(state.rbegin(), state.rbegin() + 1, state.rend());
    state.front() = feedback;
  }
  return out;
}

SeparableMaskPair generate_mask_pair(Eigen::Index n_rows, Eigen::Index n_cols, Eigen::Index m_rows,
                                     Eigen::Index m_cols, std::uint64_t seed) {
  if (n_rows < 1 || n_cols < 1 || m_rows < 1 || m_cols < 1) throw validation_error("mask sizes must be >= 1");
  SeparableMaskPair pair;
  pair.domain = MaskDomain::ZeroOne;
  pair.phi_left = mask_side(m_rows, n_rows, sub_seed(seed, "mask.left"));
  pair.phi_right = mask_side(m_cols, n_cols, sub_seed(seed, "mask.right"));
  return pair;
}

SensorMeasurement forward_capture(const SeparableOperator& op, const SceneImage& scene, double noise_sigma,
                                  std::uint64_t seed) {
  if (!(noise_sigma >= 0.0)) throw validation_error("noise_sigma must be non-negative");
  check_shapes(op, scene.pixels.rows(), scene.pixels.cols(), true);
  SensorMeasurement y;
  y.noise_sigma = noise_sigma;
  y.samples = op.left * scene.pixels * op.right.transpose();
  if (noise_sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (Eigen::Index r = 0; r < y.samples.rows(); ++r) {
      for (Eigen::Index c = 0; c < y.samples.cols(); ++c) y.samples(r, c) += noise(rng);
    }
  }
  return y;
}

SensorMeasurement forward_capture(const SeparableMaskPair& mask, const SceneImage& scene, double noise_sigma,
                                  std::uint64_t seed) {
  return forward_capture(compute_operator(mask), scene, noise_sigma, seed);
}

TikhonovSolver::TikhonovSolver(const SeparableOperator& op, double lambda) : lambda_(lambda) {
  if (!(lambda > 0.0)) throw validation_error("lambda must be > 0");
  if (op.left.size() == 0 || op.right.size() == 0) throw validation_error("empty operator");
  Eigen::BDCSVD<Eigen::MatrixXd> left(op.left, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::BDCSVD<Eigen::MatrixXd> right(op.right, Eigen::ComputeThinU | Eigen::ComputeThinV);
  u_left_ = left.matrixU();
  v_left_ = left.matrixV();
  u_right_ = right.matrixU();
  v_right_ = right.matrixV();
  const Eigen::VectorXd& sl = left.singularValues();
  const Eigen::VectorXd& sr = right.singularValues();
  filter_.resize(sl.size(), sr.size());
  for (Eigen::Index i = 0; i < sl.size(); ++i) {
    for (Eigen::Index j = 0; j < sr.size(); ++j) {
      const double s = sl(i) * sr(j);
      filter_(i, j) = s / (s * s + lambda);
    }
  }
}

SceneImage TikhonovSolver::solve(const SensorMeasurement& y, OutputMode mode) const {
  if (y.samples.rows() != u_left_.rows() || y.samples.cols() != u_right_.rows()) {
    throw validation_error("measurement shape does not match the operator");
  }
  const Eigen::MatrixXd projected = u_left_.transpose() * y.samples * u_right_;
  const Eigen::MatrixXd filtered = projected.cwiseProduct(filter_);
  SceneImage x{v_left_ * filtered * v_right_.transpose()};
  if (mode == OutputMode::Display) x.pixels = x.pixels.cwiseMax(0.0).cwiseMin(1.0);
  return x;
}

std::uint64_t TikhonovSolver::macs_per_solve() const {
  const auto m_r = static_cast<std::uint64_t>(u_left_.rows());
  const auto m_c = static_cast<std::uint64_t>(u_right_.rows());
  const auto k_l = static_cast<std::uint64_t>(u_left_.cols());
  const auto k_r = static_cast<std::uint64_t>(u_right_.cols());
  const auto n_r = static_cast<std::uint64_t>(v_left_.rows());
  const auto n_c = static_cast<std::uint64_t>(v_right_.rows());
  return k_l * m_r * m_c + k_l * m_c * k_r + k_l * k_r + n_r * k_l * k_r + n_r * k_r * n_c;
}

SceneImage reconstruct_tikhonov(const SeparableOperator& op, const SensorMeasurement& y, double lambda,
                                OutputMode mode) {
  return TikhonovSolver(op, lambda).solve(y, mode);
}

SceneImage reconstruct_tikhonov(const SeparableMaskPair& mask, const SensorMeasurement& y, double lambda,
                                OutputMode mode) {
  return reconstruct_tikhonov(compute_operator(mask), y, lambda, mode);
}

double data_residual(const SeparableOperator& op, const SceneImage& x, const SensorMeasurement& y) {
  return (op.left * x.pixels * op.right.transpose() - y.samples).norm();
}

double psnr(const SceneImage& reference, const SceneImage& candidate) {
  if (reference.pixels.rows() != candidate.pixels.rows() || reference.pixels.cols() != candidate.pixels.cols()) {
    throw validation_error("psnr: shape mismatch");
  }
  if (reference.pixels.size() == 0) throw validation_error("psnr: empty image");
  const double mse = (reference.pixels - candidate.pixels).squaredNorm() / static_cast<double>(reference.pixels.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

SceneImage random_scene(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SceneImage scene{Eigen::MatrixXd(rows, cols)};
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) scene.pixels(r, c) = unit(rng);
  }
  return scene;
}

nlohmann::json mask_to_json(const SeparableMaskPair& mask) {
  return {{"domain", mask.domain == MaskDomain::ZeroOne ? "01" : "pm1"},
          {"phi_left", matrix_to_json(mask.phi_left)},
          {"phi_right", matrix_to_json(mask.phi_right)}};
}

SeparableMaskPair mask_from_json(const nlohmann::json& doc) {
  json_util::reject_unknown(doc, {"domain", "phi_left", "phi_right"}, "mask");
  const auto domain = json_util::required<std::string>(doc, "domain", "mask");
  SeparableMaskPair mask;
  if (domain == "01") {
    mask.domain = MaskDomain::ZeroOne;
  } else if (domain == "pm1") {
    mask.domain = MaskDomain::PlusMinusOne;
  } else {
    throw validation_error("mask: domain must be \"01\" or \"pm1\"");
  }
  if (!doc.contains("phi_left") || !doc.contains("phi_right")) throw validation_error("mask: missing factor");
  mask.phi_left = matrix_from_json(doc.at("phi_left"), "phi_left");
  mask.phi_right = matrix_from_json(doc.at("phi_right"), "phi_right");
  validate(mask);
  return mask;
}

}  // namespace iflatcam::lensless
