#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace iflatcam::netspec {

enum class LayerKind { Conv, DwConv, PwConv, Fc };
enum class Activation { Relu, None };

std::string_view kind_name(LayerKind kind);
LayerKind parse_kind(std::string_view name);

struct TensorShape {
  std::int64_t channels = 1;
  std::int64_t height = 1;
  std::int64_t width = 1;

  std::int64_t elements() const { return channels * height * width; }
  bool operator==(const TensorShape&) const = default;
};

void validate(const TensorShape& shape);

// FC layers consume a channel vector. When the incoming tensor still has
// spatial extent it is globally average-pooled first; the pooling is not
// counted as MACs (same treatment as biases and normalization).
struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  std::int64_t kernel_size = 1;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  Activation activation = Activation::Relu;

  bool operator==(const LayerSpec&) const = default;
};

/// Checks the per-layer invariants (positive sizes, DW channel equality,
/// PW kernel of one). Throws Error(Validation).
void validate(const LayerSpec& layer);

struct NetworkSpec {
  std::string name;
  TensorShape input_shape;
  std::vector<LayerSpec> layers;

  bool operator==(const NetworkSpec&) const = default;
};

struct LayerShapes {
  TensorShape input;
  TensorShape output;
};

TensorShape infer_output_shape(const LayerSpec& layer, const TensorShape& in);

std::vector<LayerShapes> infer_shapes(std::span<const LayerSpec> layers, const TensorShape& input);
std::vector<LayerShapes> infer_shapes(const NetworkSpec& net);

/// Same network retargeted to a different input (used for ROI crops).
NetworkSpec with_input_shape(NetworkSpec net, const TensorShape& input);

std::uint64_t layer_macs(const LayerSpec& layer, const TensorShape& in);
inline std::uint64_t macs_to_flops(std::uint64_t macs) { return 2 * macs; }
std::uint64_t network_macs(const NetworkSpec& net);

std::uint64_t layer_param_count(const LayerSpec& layer);
std::uint64_t dense_storage_bits(const NetworkSpec& net, std::uint32_t weight_bits);

// JSON document: {name, input_shape:{c,h,w}, layers:[{kind,k,stride,pad,cin,cout[,act]}]}
NetworkSpec network_from_json(const nlohmann::json& doc);
nlohmann::json network_to_json(const NetworkSpec& net);
NetworkSpec load_network(const std::filesystem::path& path);
void save_network(const NetworkSpec& net, const std::filesystem::path& path);

}  // namespace iflatcam::netspec
