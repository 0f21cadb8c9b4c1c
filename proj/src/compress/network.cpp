#include <algorithm>
#include <cmath>
#include <limits>

#include "iflatcam/compress.hpp"
#include "iflatcam/error.hpp"
#include "iflatcam/seed.hpp"

namespace iflatcam::compress {

int RankPolicy::rank_for(std::size_t layer_index, int width) const {
  for (const auto& [index, rank] : overrides) {
    if (index == layer_index) return std::clamp(rank, 1, width);
  }
  int rank = 1;
  switch (mode) {
    case Mode::Half: rank = (width + 1) / 2; break;
    case Mode::Fraction: rank = static_cast<int>(std::ceil(value * width)); break;
    case Mode::Fixed: rank = static_cast<int>(value); break;
  }
  return std::clamp(rank, 1, width);
}

std::vector<DenseWeights> random_network_weights(const netspec::NetworkSpec& net, std::uint64_t seed) {
  const std::uint64_t root = sub_seed(seed, "weights");
  std::vector<DenseWeights> out;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    out.push_back(random_weights(net.layers[i], sub_seed(root, "layer." + std::to_string(i))));
  }
  return out;
}

CompressedLayer compress_layer(const LayerSpec& layer, const DenseWeights& weights, int rank,
                               const CompressionOptions& options, std::int32_t layer_id) {
  if (options.exponent_bits < 1 || options.exponent_bits > 8) throw validation_error("exponent_bits must be in [1, 8]");
  const WeightStack stack = stack_weights(layer, weights, layer_id);

  // Scale exponent: put the largest SVD-initialised coefficient at the top code.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(stack.matrix, Eigen::ComputeThinU);
  const Eigen::Index k = std::min<Eigen::Index>(rank, svd.singularValues().size());
  const double largest =
      (svd.matrixU().leftCols(k) * svd.singularValues().head(k).asDiagonal()).cwiseAbs().maxCoeff();
  const int top = (1 << (options.exponent_bits - 1)) - 1;
  const int lead = largest > 0.0 ? quantize_pow2_code(largest, -1000, 1000).exponent : 0;
  const int scale = std::clamp(lead - top, -128, 127);

  DecomposeOptions opts;
  opts.rank = rank;
  opts.sparsity_target = options.sparsity_target;
  opts.exponent_min = scale - (top + 1);
  opts.exponent_max = scale + top;
  opts.iters = options.iters;
  opts.bm_fraction_bits = options.bm_fraction_bits;
  const Decomposition result = decompose(stack, opts);
  return rle_encode(result.cm, result.bm);
}

std::vector<LayerStorage> compress_network(const netspec::NetworkSpec& net, std::span<const DenseWeights> weights,
                                           const CompressionOptions& options) {
  if (weights.size() != net.layers.size()) throw validation_error("one weight tensor per layer is required");
  std::vector<LayerStorage> out;
  out.reserve(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& layer = net.layers[i];
    check_weights(layer, weights[i]);
    if (layer.kind == LayerKind::DwConv && !options.include_dw) {
      out.emplace_back(DenseLayer{weights[i], options.dense_weight_bits});
      continue;
    }
    const int width = static_cast<int>(layer.kind == LayerKind::Conv || layer.kind == LayerKind::DwConv
                                           ? layer.kernel_size * layer.kernel_size
                                           : layer.in_channels);
    out.emplace_back(compress_layer(layer, weights[i], options.rank.rank_for(i, width), options, static_cast<std::int32_t>(i)));
  }
  return out;
}

DenseWeights effective_weights(const LayerSpec& layer, const LayerStorage& storage) {
  if (const auto* dense = std::get_if<DenseLayer>(&storage)) {
    check_weights(layer, dense->weights);
    return dense->weights;
  }
  const auto& compressed = std::get<CompressedLayer>(storage);
  return unstack_weights(layer, restore_rows(compressed, 0, compressed.n_rows).to_dense());
}

double LayerReport::ratio() const {
  const auto total = total_bits();
  return total == 0 ? std::numeric_limits<double>::infinity() : static_cast<double>(baseline_bits) / static_cast<double>(total);
}

CompressionReport compression_report(const netspec::NetworkSpec& net, std::span<const LayerStorage> storage,
                                     std::uint32_t weight_bits_baseline) {
  if (storage.size() != net.layers.size()) throw validation_error("compression_report: one entry per layer required");
  CompressionReport report;
  for (std::size_t i = 0; i < storage.size(); ++i) {
    LayerReport row;
    row.index = i;
    row.kind = net.layers[i].kind;
    row.baseline_bits = netspec::layer_param_count(net.layers[i]) * weight_bits_baseline;
    if (const auto* c = std::get_if<CompressedLayer>(&storage[i])) {
      row.compressed = true;
      row.bm_bits = c->bit_budget.bm_bits;
      row.cm_bits = c->bit_budget.cm_bits;
      row.index_bits = c->bit_budget.index_bits;
    } else {
      row.dense_bits = std::get<DenseLayer>(storage[i]).bits();
    }
    report.total_bits += row.total_bits();
    report.baseline_bits += row.baseline_bits;
    report.layers.push_back(row);
  }
  report.ratio = report.total_bits == 0 ? std::numeric_limits<double>::infinity()
                                        : static_cast<double>(report.baseline_bits) / static_cast<double>(report.total_bits);
  return report;
}

nlohmann::json report_to_json(const CompressionReport& report) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& row : report.layers) {
    layers.push_back({{"index", row.index},
                      {"kind", netspec::kind_name(row.kind)},
                      {"compressed", row.compressed},
                      {"bm_bits", row.bm_bits},
                      {"cm_bits", row.cm_bits},
                      {"index_bits", row.index_bits},
                      {"dense_bits", row.dense_bits},
                      {"total_bits", row.total_bits()},
                      {"baseline_bits", row.baseline_bits},
                      {"ratio", row.ratio()}});
  }
  return {{"total_bits", report.total_bits},
          {"baseline_bits", report.baseline_bits},
          {"ratio", report.ratio},
          {"layers", std::move(layers)}};
}

}  // namespace iflatcam::compress
