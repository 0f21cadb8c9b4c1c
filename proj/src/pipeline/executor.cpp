#include <algorithm>
#include <cmath>

#include "iflatcam/error.hpp"
#include "iflatcam/pipeline.hpp"

namespace iflatcam::pipeline {

using netspec::LayerKind;
using netspec::LayerSpec;

namespace {

std::size_t stacked_rows(const LayerSpec& l) {
  return static_cast<std::size_t>(l.kind == LayerKind::Conv ? l.out_channels * l.in_channels : l.out_channels);
}

double round_half_away(double x) { return std::round(x); }

Tensor run_layer(const LayerSpec& l, const PreparedLayer& p, const Tensor& in) {
  Tensor out;
  out.shape = netspec::infer_output_shape(l, in.shape);
  out.data.setZero(out.shape.elements());
  const std::int64_t ih = in.shape.height, iw = in.shape.width;
  const std::int64_t oh = out.shape.height, ow = out.shape.width;
  const std::int64_t k = l.kernel_size, s = l.stride, pad = l.padding;
  const Eigen::MatrixXd& w = p.weights;

  // Accumulates weight * input-plane(c) into output-plane(o) for one kernel tap.
  auto tap = [&](std::int64_t o, std::int64_t c, std::int64_t ky, std::int64_t kx, double weight) {
    double* dst = out.data.data() + o * oh * ow;
    const double* src = in.data.data() + c * ih * iw;
    for (std::int64_t y = 0; y < oh; ++y) {
      const std::int64_t sy = y * s + ky - pad;
      if (sy < 0 || sy >= ih) continue;
      for (std::int64_t x = 0; x < ow; ++x) {
        const std::int64_t sx = x * s + kx - pad;
        if (sx < 0 || sx >= iw) continue;
        dst[y * ow + x] += weight * src[sy * iw + sx];
      }
    }
  };

  switch (l.kind) {
    case LayerKind::Conv:
      for (std::int64_t o = 0; o < l.out_channels; ++o)
        for (std::int64_t i = 0; i < l.in_channels; ++i) {
          if (!p.live_rows[static_cast<std::size_t>(o * l.in_channels + i)]) continue;
          for (std::int64_t ky = 0; ky < k; ++ky)
            for (std::int64_t kx = 0; kx < k; ++kx) tap(o, i, ky, kx, w(o, (i * k + ky) * k + kx));
        }
      break;
    case LayerKind::DwConv:
      for (std::int64_t c = 0; c < l.out_channels; ++c) {
        if (!p.live_rows[static_cast<std::size_t>(c)]) continue;
        for (std::int64_t ky = 0; ky < k; ++ky)
          for (std::int64_t kx = 0; kx < k; ++kx) tap(c, c, ky, kx, w(c, ky * k + kx));
      }
      break;
    case LayerKind::PwConv:
      for (std::int64_t o = 0; o < l.out_channels; ++o) {
        if (!p.live_rows[static_cast<std::size_t>(o)]) continue;
        for (std::int64_t i = 0; i < l.in_channels; ++i) tap(o, i, 0, 0, w(o, i));
      }
      break;
    case LayerKind::Fc: {
      const std::int64_t plane = ih * iw;
      Eigen::VectorXd pooled(l.in_channels);
      for (std::int64_t i = 0; i < l.in_channels; ++i) {
        pooled(i) = in.data.segment(i * plane, plane).sum() / static_cast<double>(plane);
      }
      for (std::int64_t o = 0; o < l.out_channels; ++o) {
        if (!p.live_rows[static_cast<std::size_t>(o)]) continue;
        double acc = 0.0;
        for (std::int64_t i = 0; i < l.in_channels; ++i) acc += w(o, i) * pooled(i);
        out.data(o) = acc;
      }
      break;
    }
  }
  if (l.activation == netspec::Activation::Relu) out.data = out.data.cwiseMax(0.0);
  return out;
}

}  // namespace

Tensor Tensor::from_image(const Eigen::MatrixXd& image) {
  Tensor t;
  t.shape = {1, image.rows(), image.cols()};
  t.data.resize(image.size());
  for (Eigen::Index y = 0; y < image.rows(); ++y)
    for (Eigen::Index x = 0; x < image.cols(); ++x) t.data(y * image.cols() + x) = image(y, x);
  return t;
}

PreparedNetwork PreparedNetwork::retarget(const TensorShape& input) const {
  PreparedNetwork out{netspec::with_input_shape(spec, input), layers};
  netspec::infer_shapes(out.spec);
  return out;
}

PreparedNetwork prepare_network(const NetworkSpec& net, std::span<const compress::LayerStorage> weights) {
  if (weights.size() != net.layers.size()) {
    throw validation_error("network '" + net.name + "' has " + std::to_string(net.layers.size()) + " layers but " +
                           std::to_string(weights.size()) + " weight tensors");
  }
  netspec::infer_shapes(net);
  PreparedNetwork out;
  out.spec = net;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const auto& layer = net.layers[i];
    PreparedLayer p;
    p.weights = compress::effective_weights(layer, weights[i]);
    if (const auto* c = std::get_if<compress::CompressedLayer>(&weights[i])) {
      if (c->n_rows != stacked_rows(layer)) throw validation_error("compressed layer does not match its spec");
      for (auto m : c->row_map()) p.live_rows.push_back(m >= 0);
    } else {
      p.live_rows.assign(stacked_rows(layer), true);
    }
    out.layers.push_back(std::move(p));
  }
  return out;
}

PreparedNetwork prepare_network(const NetworkSpec& net, std::span<const compress::DenseWeights> weights) {
  std::vector<compress::LayerStorage> storage;
  for (const auto& w : weights) storage.emplace_back(compress::DenseLayer{w, 8});
  return prepare_network(net, storage);
}

AffineQuant AffineQuant::fit(const Eigen::VectorXd& x) {
  const double lo = x.size() == 0 ? 0.0 : std::min(0.0, x.minCoeff());
  const double hi = x.size() == 0 ? 0.0 : std::max(0.0, x.maxCoeff());
  if (!(hi > lo)) return {};
  AffineQuant q;
  q.scale = (hi - lo) / 255.0;
  q.zero_point = static_cast<std::int32_t>(std::clamp(round_half_away(-lo / q.scale), 0.0, 255.0));
  return q;
}

double AffineQuant::apply(double x) const {
  const double q = std::clamp(round_half_away(x / scale) + zero_point, 0.0, 255.0);
  return (q - zero_point) * scale;
}

ExecResult execute_network(const PreparedNetwork& net, const Tensor& input, const ExecOptions& options) {
  if (net.layers.size() != net.spec.layers.size()) throw validation_error("missing weights for network '" + net.spec.name + "'");
  if (!(input.shape == net.spec.input_shape) || input.data.size() != input.shape.elements()) {
    throw validation_error("input shape does not match network '" + net.spec.name + "'");
  }
  ExecResult result;
  auto quantize = [&](Tensor& t) {
    if (!options.quantize_activations) return;
    const AffineQuant q = AffineQuant::fit(t.data);
    result.activation_scales.push_back(q.scale);
    t.data = t.data.unaryExpr([&](double v) { return q.apply(v); });
  };

  Tensor x = input;
  quantize(x);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    x = run_layer(net.spec.layers[i], net.layers[i], x);
    quantize(x);
  }
  result.output = x.data;
  return result;
}

Eigen::MatrixXd resize_nearest(const Eigen::MatrixXd& image, Eigen::Index rows, Eigen::Index cols) {
  if (rows < 1 || cols < 1 || image.size() == 0) throw validation_error("resize_nearest: empty size");
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index y = 0; y < rows; ++y) {
    const auto sy = std::min<Eigen::Index>(image.rows() - 1, (2 * y + 1) * image.rows() / (2 * rows));
    for (Eigen::Index x = 0; x < cols; ++x) {
      const auto sx = std::min<Eigen::Index>(image.cols() - 1, (2 * x + 1) * image.cols() / (2 * cols));
      out(y, x) = image(sy, sx);
    }
  }
  return out;
}

Eigen::MatrixXd downsample_box(const Eigen::MatrixXd& image, int factor) {
  if (factor < 1) throw validation_error("downsample factor must be >= 1");
  const Eigen::Index rows = (image.rows() + factor - 1) / factor;
  const Eigen::Index cols = (image.cols() + factor - 1) / factor;
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index y = 0; y < rows; ++y) {
    for (Eigen::Index x = 0; x < cols; ++x) {
      const Eigen::Index h = std::min<Eigen::Index>(factor, image.rows() - y * factor);
      const Eigen::Index w = std::min<Eigen::Index>(factor, image.cols() - x * factor);
      out(y, x) = image.block(y * factor, x * factor, h, w).mean();
    }
  }
  return out;
}

}  // namespace iflatcam::pipeline
