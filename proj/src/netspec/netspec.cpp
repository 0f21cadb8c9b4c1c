#include "iflatcam/netspec.hpp"

#include "iflatcam/error.hpp"
#include "iflatcam/json_util.hpp"

namespace iflatcam::netspec {

std::string_view kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "CONV";
    case LayerKind::DwConv: return "DW_CONV";
    case LayerKind::PwConv: return "PW_CONV";
    case LayerKind::Fc: return "FC";
  }
  return "CONV";
}

LayerKind parse_kind(std::string_view name) {
  if (name == "CONV") return LayerKind::Conv;
  if (name == "DW_CONV") return LayerKind::DwConv;
  if (name == "PW_CONV") return LayerKind::PwConv;
  if (name == "FC") return LayerKind::Fc;
  throw validation_error("unknown layer kind '" + std::string(name) + "'");
}

void validate(const TensorShape& shape) {
  if (shape.channels < 1 || shape.height < 1 || shape.width < 1) {
    throw validation_error("tensor dimensions must be >= 1");
  }
}

void validate(const LayerSpec& layer) {
  if (layer.kernel_size < 1 || layer.stride < 1 || layer.padding < 0 || layer.in_channels < 1 ||
      layer.out_channels < 1) {
    throw validation_error(std::string(kind_name(layer.kind)) + ": sizes must be positive");
  }
  if (layer.kind == LayerKind::DwConv && layer.in_channels != layer.out_channels) {
    throw validation_error("DW_CONV requires in_channels == out_channels");
  }
  if (layer.kind == LayerKind::PwConv && layer.kernel_size != 1) {
    throw validation_error("PW_CONV requires kernel_size == 1");
  }
}

namespace {

std::int64_t conv_dim(std::int64_t in, std::int64_t k, std::int64_t stride, std::int64_t pad) {
  const std::int64_t span = in + 2 * pad - k;
  if (span < 0) return 0;
  return span / stride + 1;
}

}  // namespace

TensorShape infer_output_shape(const LayerSpec& layer, const TensorShape& in) {
  validate(layer);
  validate(in);
  if (layer.in_channels != in.channels) {
    throw validation_error(std::string(kind_name(layer.kind)) + ": expects " +
                           std::to_string(layer.in_channels) + " input channels, got " +
                           std::to_string(in.channels));
  }
  if (layer.kind == LayerKind::Fc) return {layer.out_channels, 1, 1};

  const std::int64_t k = layer.kind == LayerKind::PwConv ? 1 : layer.kernel_size;
  TensorShape out{layer.out_channels, conv_dim(in.height, k, layer.stride, layer.padding),
                  conv_dim(in.width, k, layer.stride, layer.padding)};
  if (out.height < 1 || out.width < 1) {
    throw validation_error(std::string(kind_name(layer.kind)) + ": output dimension < 1 for input " +
                           std::to_string(in.height) + "x" + std::to_string(in.width));
  }
  return out;
}

std::vector<LayerShapes> infer_shapes(std::span<const LayerSpec> layers, const TensorShape& input) {
  if (layers.empty()) throw validation_error("network has no layers");
  std::vector<LayerShapes> shapes;
  shapes.reserve(layers.size());
  TensorShape current = input;
  for (const auto& layer : layers) {
    TensorShape next = infer_output_shape(layer, current);
    shapes.push_back({current, next});
    current = next;
  }
  return shapes;
}

std::vector<LayerShapes> infer_shapes(const NetworkSpec& net) {
  return infer_shapes(net.layers, net.input_shape);
}

NetworkSpec with_input_shape(NetworkSpec net, const TensorShape& input) {
  net.input_shape = input;
  return net;
}

std::uint64_t layer_macs(const LayerSpec& layer, const TensorShape& in) {
  const TensorShape out = infer_output_shape(layer, in);
  const auto k = static_cast<std::uint64_t>(layer.kernel_size);
  const auto cin = static_cast<std::uint64_t>(layer.in_channels);
  const auto cout = static_cast<std::uint64_t>(layer.out_channels);
  const auto plane = static_cast<std::uint64_t>(out.height * out.width);
  switch (layer.kind) {
    case LayerKind::Conv: return k * k * cin * cout * plane;
    case LayerKind::DwConv: return k * k * cout * plane;
    case LayerKind::PwConv: return cin * cout * plane;
    case LayerKind::Fc: return cin * cout;
  }
  return 0;
}

std::uint64_t network_macs(const NetworkSpec& net) {
  std::uint64_t total = 0;
  const auto shapes = infer_shapes(net);
  for (std::size_t i = 0; i < net.layers.size(); ++i) total += layer_macs(net.layers[i], shapes[i].input);
  return total;
}

std::uint64_t layer_param_count(const LayerSpec& layer) {
  const auto k = static_cast<std::uint64_t>(layer.kernel_size);
  const auto cin = static_cast<std::uint64_t>(layer.in_channels);
  const auto cout = static_cast<std::uint64_t>(layer.out_channels);
  switch (layer.kind) {
    case LayerKind::Conv: return k * k * cin * cout;
    case LayerKind::DwConv: return k * k * cout;
    case LayerKind::PwConv:
    case LayerKind::Fc: return cin * cout;
  }
  return 0;
}

std::uint64_t dense_storage_bits(const NetworkSpec& net, std::uint32_t weight_bits) {
  std::uint64_t params = 0;
  for (const auto& layer : net.layers) params += layer_param_count(layer);
  return params * weight_bits;
}

NetworkSpec network_from_json(const nlohmann::json& doc) {
  using namespace json_util;
  reject_unknown(doc, {"name", "input_shape", "layers"}, "network");
  NetworkSpec net;
  net.name = required<std::string>(doc, "name", "network");

  if (!doc.contains("input_shape")) throw validation_error("network: missing field 'input_shape'");
  const auto& shape = doc.at("input_shape");
  reject_unknown(shape, {"c", "h", "w"}, "network.input_shape");
  net.input_shape = {required<std::int64_t>(shape, "c", "input_shape"),
                     required<std::int64_t>(shape, "h", "input_shape"),
                     required<std::int64_t>(shape, "w", "input_shape")};
  validate(net.input_shape);

  if (!doc.contains("layers") || !doc.at("layers").is_array()) {
    throw validation_error("network: 'layers' must be an array");
  }
  for (const auto& item : doc.at("layers")) {
    reject_unknown(item, {"kind", "k", "stride", "pad", "cin", "cout", "act"}, "network.layers[]");
    LayerSpec layer;
    layer.kind = parse_kind(required<std::string>(item, "kind", "layer"));
    layer.kernel_size = required<std::int64_t>(item, "k", "layer");
    layer.stride = required<std::int64_t>(item, "stride", "layer");
    layer.padding = required<std::int64_t>(item, "pad", "layer");
    layer.in_channels = required<std::int64_t>(item, "cin", "layer");
    layer.out_channels = required<std::int64_t>(item, "cout", "layer");
    const auto act = optional<std::string>(item, "act", "relu", "layer");
    if (act == "relu") {
      layer.activation = Activation::Relu;
    } else if (act == "none") {
      layer.activation = Activation::None;
    } else {
      throw validation_error("layer: act must be 'relu' or 'none'");
    }
    validate(layer);
    net.layers.push_back(layer);
  }
  infer_shapes(net);
  return net;
}

nlohmann::json network_to_json(const NetworkSpec& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : net.layers) {
    nlohmann::json item = {{"kind", kind_name(layer.kind)}, {"k", layer.kernel_size},
                           {"stride", layer.stride},        {"pad", layer.padding},
                           {"cin", layer.in_channels},      {"cout", layer.out_channels}};
    if (layer.activation == Activation::None) item["act"] = "none";
    layers.push_back(std::move(item));
  }
  return {{"name", net.name},
          {"input_shape", {{"c", net.input_shape.channels}, {"h", net.input_shape.height}, {"w", net.input_shape.width}}},
          {"layers", std::move(layers)}};
}

NetworkSpec load_network(const std::filesystem::path& path) {
  return network_from_json(json_util::read_file(path));
}

void save_network(const NetworkSpec& net, const std::filesystem::path& path) {
  json_util::write_file(path, network_to_json(net));
}

}  // namespace iflatcam::netspec
