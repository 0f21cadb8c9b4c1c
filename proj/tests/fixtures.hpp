#pragma once

#include <random>

#include <boost/multiprecision/cpp_int.hpp>

#include "iflatcam/compress.hpp"
#include "iflatcam/pipeline.hpp"

// Random generators shared by the unit suites and the acceptance binary.
namespace testing {

namespace compress = iflatcam::compress;
namespace netspec = iflatcam::netspec;
namespace pipeline = iflatcam::pipeline;

inline boost::multiprecision::cpp_rational pow2(int e) {
  using boost::multiprecision::cpp_rational;
  cpp_rational one(1);
  return e >= 0 ? one * (boost::multiprecision::cpp_int(1) << e)
                : one / cpp_rational(boost::multiprecision::cpp_int(1) << -e);
}

// Random CM over [S - 2^(b-1), S + 2^(b-1) - 1] with a random ZERO-row pattern.
inline compress::CoefficientMatrix random_cm(std::mt19937_64& rng, std::size_t n, int r, int bits, int scale, double zero_p) {
  compress::CoefficientMatrix cm;
  cm.rank = r;
  cm.exponent_bits = bits;
  cm.scale_exponent = scale;
  std::bernoulli_distribution zero_row(zero_p);
  std::uniform_int_distribution<int> expo(cm.exponent_min(), cm.exponent_max());
  std::uniform_int_distribution<int> sign(-1, 1);
  cm.rows.resize(n);
  for (auto& row : cm.rows) {
    if (zero_row(rng)) continue;
    for (int j = 0; j < r; ++j) {
      const int s = sign(rng);
      row.entries.push_back(s == 0 ? compress::Pow2{} : compress::Pow2{static_cast<std::int8_t>(s), static_cast<std::int16_t>(expo(rng))});
    }
  }
  return cm;
}

inline compress::BasisMatrix random_bm(std::mt19937_64& rng, int r, int d, int fraction_bits) {
  compress::BasisMatrix bm;
  bm.fraction_bits = fraction_bits;
  bm.words.resize(r, d);
  std::uniform_int_distribution<std::int32_t> word(-32768, 32767);
  for (Eigen::Index i = 0; i < bm.words.size(); ++i) bm.words.data()[i] = word(rng);
  return bm;
}

inline pipeline::Tensor random_tensor(const netspec::TensorShape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  pipeline::Tensor t{shape, Eigen::VectorXd(shape.elements())};
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data(i) = u(rng);
  return t;
}

inline netspec::LayerSpec random_layer(std::mt19937_64& rng, std::int64_t cin, bool last) {
  const auto pick = [&](std::int64_t n) { return static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(n)); };
  const auto act = pick(3) == 0 ? netspec::Activation::None : netspec::Activation::Relu;
  if (last) return {netspec::LayerKind::Fc, 1, 1, 0, cin, 1 + pick(4), act};
  switch (pick(3)) {
    case 0: return {netspec::LayerKind::Conv, 1 + 2 * pick(2), 1 + pick(2), pick(2), cin, 1 + pick(6), act};
    case 1: return {netspec::LayerKind::DwConv, 3, 1 + pick(2), 1, cin, cin, act};
    default: return {netspec::LayerKind::PwConv, 1, 1, 0, cin, 1 + pick(6), act};
  }
}

}  // namespace testing
