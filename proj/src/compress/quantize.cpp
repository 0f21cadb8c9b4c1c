#include <algorithm>
#include <cmath>
#include <numbers>

#include "iflatcam/compress.hpp"
#include "iflatcam/error.hpp"

namespace iflatcam::compress {

double Pow2::value() const { return sign == 0 ? 0.0 : sign * std::ldexp(1.0, exponent); }

Pow2 quantize_pow2_code(double x, int e_min, int e_max) {
  if (e_min > e_max) throw validation_error("quantize_pow2: e_min > e_max");
  if (std::isnan(x) || x == 0.0) return {};
  const std::int8_t sign = x < 0 ? -1 : 1;
  const double mag = std::fabs(x);
  if (std::isinf(mag)) return {sign, static_cast<std::int16_t>(e_max)};
  if (mag < std::ldexp(1.0, e_min - 1)) return {};

  // mag = f * 2^e with f in [1, 2); log2(mag) rounds up iff f >= sqrt(2).
  // The double nearest sqrt(2) lies above it, so the comparison is exact.
  int q = 0;
  const double f = 2.0 * std::frexp(mag, &q);
  int e = q - 1;
  if (f >= std::numbers::sqrt2) ++e;
  e = std::clamp(e, e_min, e_max);
  return {sign, static_cast<std::int16_t>(e)};
}

double quantize_pow2(double x, int e_min, int e_max) { return quantize_pow2_code(x, e_min, e_max).value(); }

Eigen::MatrixXd BasisMatrix::to_dense() const {
  Eigen::MatrixXd out(words.rows(), words.cols());
  for (Eigen::Index i = 0; i < words.rows(); ++i) {
    for (Eigen::Index j = 0; j < words.cols(); ++j) out(i, j) = std::ldexp(static_cast<double>(words(i, j)), -fraction_bits);
  }
  return out;
}

BasisMatrix to_fixed_point(const Eigen::MatrixXd& basis, int fraction_bits) {
  if (fraction_bits < 0 || fraction_bits > 30) throw validation_error("bm_fraction_bits must be in [0, 30]");
  constexpr double lo = -(1 << (BasisMatrix::kWordBits - 1));
  constexpr double hi = (1 << (BasisMatrix::kWordBits - 1)) - 1;
  BasisMatrix bm;
  bm.fraction_bits = fraction_bits;
  bm.words.resize(basis.rows(), basis.cols());
  for (Eigen::Index i = 0; i < basis.rows(); ++i) {
    for (Eigen::Index j = 0; j < basis.cols(); ++j) {
      const double scaled = std::round(std::ldexp(basis(i, j), fraction_bits));
      bm.words(i, j) = static_cast<std::int32_t>(std::clamp(scaled, lo, hi));
    }
  }
  return bm;
}

std::size_t CoefficientMatrix::zero_row_count() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.is_zero(); }));
}

Eigen::MatrixXd CoefficientMatrix::to_dense() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), rank);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].entries.size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i].entries[j].value();
    }
  }
  return out;
}

std::pair<int, int> exponent_encoding(int e_min, int e_max) {
  if (e_min > e_max) throw validation_error("exponent range is empty");
  int bits = 1;
  while ((1L << bits) < static_cast<long>(e_max) - e_min + 1) ++bits;
  return {bits, e_min + (1 << (bits - 1))};
}

}  // namespace iflatcam::compress
