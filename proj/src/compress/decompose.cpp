#include <algorithm>
#include <cmath>
#include <numeric>

#include "iflatcam/compress.hpp"
#include "iflatcam/error.hpp"

namespace iflatcam::compress {

namespace {

CoefficientRow quantize_row(const Eigen::RowVectorXd& row, int e_min, int e_max) {
  CoefficientRow out;
  out.entries.reserve(static_cast<std::size_t>(row.size()));
  for (Eigen::Index j = 0; j < row.size(); ++j) out.entries.push_back(quantize_pow2_code(row(j), e_min, e_max));
  return out;
}

// Row indices to prune: the `count` smallest importance scores, lower index first on ties.
std::vector<bool> prune_mask(const Eigen::MatrixXd& coeffs, const Eigen::VectorXd& row_norms, std::size_t count) {
  const auto n = static_cast<std::size_t>(coeffs.rows());
  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) {
    score[i] = coeffs.row(static_cast<Eigen::Index>(i)).norm() * row_norms(static_cast<Eigen::Index>(i));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  std::vector<bool> pruned(n, false);
  for (std::size_t t = 0; t < count; ++t) pruned[order[t]] = true;
  return pruned;
}

}  // namespace

std::size_t pruned_row_count(double sparsity_target, std::size_t n_rows) {
  if (!(sparsity_target >= 0.0 && sparsity_target < 1.0)) {
    throw validation_error("sparsity_target must lie in [0, 1)");
  }
  // ceil(s*n), robust to products such as 0.3*10 = 3.0000000000000004
  const double raw = sparsity_target * static_cast<double>(n_rows);
  const double nearest = std::round(raw);
  const double count = std::fabs(raw - nearest) < 1e-9 ? nearest : std::ceil(raw);
  return std::min(static_cast<std::size_t>(count), n_rows);
}

double Decomposition::reconstruction_error(const Eigen::MatrixXd& w) const {
  return (w - cm.to_dense() * bm.to_dense()).norm();
}

Decomposition decompose(const WeightStack& stack, const DecomposeOptions& options) {
  const Eigen::MatrixXd& w = stack.matrix;
  const Eigen::Index n = w.rows();
  const Eigen::Index d = w.cols();
  const int r = options.rank;
  if (n < 1 || d < 1) throw validation_error("decompose: empty weight stack");
  if (r < 1 || r > d) throw validation_error("decompose: rank must be in [1, d]");
  if (options.iters < 1) throw validation_error("decompose: iters must be >= 1");

  const auto [exp_bits, scale] = exponent_encoding(options.exponent_min, options.exponent_max);
  if (scale < -128 || scale > 127) throw validation_error("decompose: scale exponent does not fit in 8 bits");
  const std::size_t n_pruned = pruned_row_count(options.sparsity_target, static_cast<std::size_t>(n));

  Decomposition out;
  out.cm.rank = r;
  out.cm.exponent_bits = exp_bits;
  out.cm.scale_exponent = scale;
  out.cm.rows.resize(static_cast<std::size_t>(n));

  if (w.isZero(0.0)) {
    out.degenerate = true;
    out.bm = to_fixed_point(Eigen::MatrixXd::Identity(r, d), options.bm_fraction_bits);
    for (Eigen::Index i = static_cast<Eigen::Index>(n_pruned); i < n; ++i) {
      out.cm.rows[static_cast<std::size_t>(i)].entries.assign(static_cast<std::size_t>(r), Pow2{});
    }
    return out;
  }

  // Truncated SVD initialisation: C = U_r S_r, B = V_r^T.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(w, Eigen::ComputeThinU | Eigen::ComputeFullV);
  const Eigen::Index k = std::min<Eigen::Index>(r, svd.singularValues().size());
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, r);
  c.leftCols(k) = svd.matrixU().leftCols(k) * svd.singularValues().head(k).asDiagonal();
  Eigen::MatrixXd b = svd.matrixV().leftCols(r).transpose();

  const Eigen::VectorXd row_norms = w.rowwise().norm();
  std::vector<bool> pruned(static_cast<std::size_t>(n), false);

  for (int it = 0; it < options.iters; ++it) {
    IterationTrace trace;
    trace.before_c_solve = (w - c * b).norm();

    // (1) C <- argmin ||W - C B||, row by row (min-norm when B is rank deficient).
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> b_cod(b.transpose());
    c = b_cod.solve(w.transpose()).transpose();
    trace.after_c_solve = (w - c * b).norm();

    // (2) structured pruning, (3) power-of-2 projection.
    pruned = prune_mask(c, row_norms, n_pruned);
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& row = out.cm.rows[static_cast<std::size_t>(i)];
      if (pruned[static_cast<std::size_t>(i)]) {
        row.entries.clear();
        c.row(i).setZero();
      } else {
        row = quantize_row(c.row(i), options.exponent_min, options.exponent_max);
        for (Eigen::Index j = 0; j < r; ++j) c(i, j) = row.entries[static_cast<std::size_t>(j)].value();
      }
    }
    trace.after_projection = (w - c * b).norm();

    // (4) B <- argmin ||W_S - C_S B|| over surviving rows, then snap to the fixed-point grid.
    std::vector<Eigen::Index> survivors;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!pruned[static_cast<std::size_t>(i)]) survivors.push_back(i);
    }
    if (!survivors.empty()) {
      const auto s = static_cast<Eigen::Index>(survivors.size());
      Eigen::MatrixXd c_s(s, r);
      Eigen::MatrixXd w_s(s, d);
      for (Eigen::Index t = 0; t < s; ++t) {
        c_s.row(t) = c.row(survivors[static_cast<std::size_t>(t)]);
        w_s.row(t) = w.row(survivors[static_cast<std::size_t>(t)]);
      }
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> c_cod(c_s);
      b = c_cod.solve(w_s);
    }
    trace.after_b_solve = (w - c * b).norm();

    out.bm = to_fixed_point(b, options.bm_fraction_bits);
    b = out.bm.to_dense();
    trace.after_b_rounding = (w - c * b).norm();
    out.trace.push_back(trace);
  }
  return out;
}

}  // namespace iflatcam::compress
