#include <bit>
#include <cmath>

#include "iflatcam/compress.hpp"
#include "iflatcam/error.hpp"

namespace iflatcam::compress {

Eigen::MatrixXd RestoredRows::to_dense() const {
  Eigen::MatrixXd out(mantissa.rows(), mantissa.cols());
  for (Eigen::Index i = 0; i < mantissa.rows(); ++i) {
    for (Eigen::Index j = 0; j < mantissa.cols(); ++j) {
      out(i, j) = std::ldexp(static_cast<double>(mantissa(i, j)), binary_exponent);
    }
  }
  return out;
}

RestoredRows restore_rows(const BasisMatrix& bm, const CompressedLayer& layer, std::uint32_t row_begin,
                          std::uint32_t row_end) {
  if (row_begin > row_end || row_end > layer.n_rows) throw validation_error("restore_rows: row range out of bounds");
  const int e_min = layer.exponent_min();
  const int e_max = layer.exponent_max();
  const auto r = static_cast<std::uint64_t>(bm.rank());

  // Accumulator width: word bits + largest shift + carry bits for r terms.
  const int width = BasisMatrix::kWordBits + (e_max - e_min) + std::bit_width(r) + 1;
  if (width > 63) {
    throw validation_error("restore_rows: accumulator would need " + std::to_string(width) + " bits");
  }

  RestoredRows out;
  out.binary_exponent = e_min - bm.fraction_bits;
  out.mantissa.setZero(static_cast<Eigen::Index>(row_end - row_begin), bm.width());
  const auto map = layer.row_map();
  for (std::uint32_t row = row_begin; row < row_end; ++row) {
    const std::int64_t stored = map[row];
    if (stored < 0) continue;
    const auto& entries = layer.nonzero_rows[static_cast<std::size_t>(stored)];
    if (entries.size() != r) throw validation_error("restore_rows: stored row has wrong width");
    auto acc = out.mantissa.row(static_cast<Eigen::Index>(row - row_begin));
    for (std::size_t j = 0; j < entries.size(); ++j) {
      const Pow2& e = entries[j];
      if (e.sign == 0) continue;
      if (e.exponent < e_min || e.exponent > e_max) {
        throw validation_error("restore_rows: exponent " + std::to_string(e.exponent) + " outside declared range");
      }
      const int shift = e.exponent - e_min;
      for (Eigen::Index k = 0; k < bm.width(); ++k) {
        const std::int64_t shifted = static_cast<std::int64_t>(bm.words(static_cast<Eigen::Index>(j), k)) * (std::int64_t{1} << shift);
        acc(k) += e.sign > 0 ? shifted : -shifted;
      }
    }
  }
  return out;
}

RestoredRows restore_rows(const CompressedLayer& layer, std::uint32_t row_begin, std::uint32_t row_end) {
  return restore_rows(layer.bm, layer, row_begin, row_end);
}

}  // namespace iflatcam::compress
