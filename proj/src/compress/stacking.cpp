#include <cmath>
#include <random>

#include "iflatcam/compress.hpp"
#include "iflatcam/error.hpp"

namespace iflatcam::compress {

Eigen::Index dense_weight_cols(const LayerSpec& layer) {
  const auto k = static_cast<Eigen::Index>(layer.kernel_size);
  switch (layer.kind) {
    case LayerKind::Conv: return static_cast<Eigen::Index>(layer.in_channels) * k * k;
    case LayerKind::DwConv: return k * k;
    case LayerKind::PwConv:
    case LayerKind::Fc: return static_cast<Eigen::Index>(layer.in_channels);
  }
  return 0;
}

void check_weights(const LayerSpec& layer, const DenseWeights& weights) {
  netspec::validate(layer);
  if (weights.rows() != layer.out_channels || weights.cols() != dense_weight_cols(layer)) {
    throw validation_error(std::string(netspec::kind_name(layer.kind)) + ": weight tensor is " +
                           std::to_string(weights.rows()) + "x" + std::to_string(weights.cols()) + ", expected " +
                           std::to_string(layer.out_channels) + "x" + std::to_string(dense_weight_cols(layer)));
  }
}

DenseWeights random_weights(const LayerSpec& layer, std::uint64_t seed) {
  netspec::validate(layer);
  const Eigen::Index cols = dense_weight_cols(layer);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(cols)));
  DenseWeights w(layer.out_channels, cols);
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng);
  }
  return w;
}

WeightStack stack_weights(const LayerSpec& layer, const DenseWeights& weights, std::int32_t layer_id) {
  check_weights(layer, weights);
  WeightStack stack;
  stack.source_kind = layer.kind;
  const auto cout = static_cast<std::int32_t>(layer.out_channels);

  if (layer.kind == LayerKind::Conv) {
    const auto cin = static_cast<std::int32_t>(layer.in_channels);
    const Eigen::Index kk = layer.kernel_size * layer.kernel_size;
    stack.matrix.resize(static_cast<Eigen::Index>(cout) * cin, kk);
    for (std::int32_t o = 0; o < cout; ++o) {
      for (std::int32_t i = 0; i < cin; ++i) {
        const Eigen::Index row = static_cast<Eigen::Index>(o) * cin + i;
        stack.matrix.row(row) = weights.row(o).segment(static_cast<Eigen::Index>(i) * kk, kk);
        stack.row_meta.push_back({layer_id, o, i});
      }
    }
    return stack;
  }

  stack.matrix = weights;
  for (std::int32_t o = 0; o < cout; ++o) {
    stack.row_meta.push_back({layer_id, o, layer.kind == LayerKind::DwConv ? o : -1});
  }
  return stack;
}

DenseWeights unstack_weights(const LayerSpec& layer, const Eigen::MatrixXd& stacked) {
  netspec::validate(layer);
  if (layer.kind != LayerKind::Conv) {
    check_weights(layer, stacked);
    return stacked;
  }
  const Eigen::Index cin = layer.in_channels;
  const Eigen::Index kk = layer.kernel_size * layer.kernel_size;
  if (stacked.rows() != layer.out_channels * cin || stacked.cols() != kk) {
    throw validation_error("CONV: stacked matrix has the wrong shape");
  }
  DenseWeights w(layer.out_channels, cin * kk);
  for (Eigen::Index o = 0; o < layer.out_channels; ++o) {
    for (Eigen::Index i = 0; i < cin; ++i) w.row(o).segment(i * kk, kk) = stacked.row(o * cin + i);
  }
  return w;
}

}  // namespace iflatcam::compress
