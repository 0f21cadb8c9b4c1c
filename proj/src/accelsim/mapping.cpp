#include <algorithm>
#include <map>

#include "iflatcam/accelsim.hpp"
#include "iflatcam/error.hpp"
#include "mapping_internal.hpp"

namespace iflatcam::accelsim {

std::string_view dataflow_name(Dataflow dataflow) {
  switch (dataflow) {
    case Dataflow::ConvInterChannel: return "CONV_INTER_CHANNEL";
    case Dataflow::DwIntraChannel: return "DW_INTRA_CHANNEL";
    case Dataflow::DwNaiveBaseline: return "DW_NAIVE_BASELINE";
  }
  return "CONV_INTER_CHANNEL";
}

Dataflow default_dataflow(LayerKind kind) {
  return kind == LayerKind::DwConv ? Dataflow::DwIntraChannel : Dataflow::ConvInterChannel;
}

std::size_t LayerSchedule::max_lines_per_pass() const {
  std::size_t most = 0;
  for (const auto& pass : passes) most = std::max(most, pass.lines.size());
  return most;
}

int swpr_throughput(const AccelConfig& cfg) { return cfg.swpr_enabled ? 2 : 1; }

namespace detail {

LayerSchedule map_channels(const LayerSpec& layer, const TensorShape& in_shape, const AccelConfig& cfg,
                           Dataflow dataflow, const std::vector<std::int64_t>& channels) {
  validate(cfg);
  const bool is_dw = layer.kind == LayerKind::DwConv;
  if (dataflow == Dataflow::DwIntraChannel && !is_dw) throw validation_error("DW_INTRA_CHANNEL requires a DW_CONV layer");
  if (dataflow == Dataflow::DwNaiveBaseline && !is_dw) throw validation_error("DW_NAIVE_BASELINE requires a DW_CONV layer");
  if (dataflow == Dataflow::ConvInterChannel && is_dw) {
    throw validation_error("DW_CONV layers map with DW_INTRA_CHANNEL or DW_NAIVE_BASELINE");
  }

  LayerSchedule s;
  s.layer = layer;
  s.in_shape = in_shape;
  s.out_shape = netspec::infer_output_shape(layer, in_shape);
  s.dataflow = dataflow;
  s.num_pe_lines = cfg.num_pe_lines;

  const auto lines = static_cast<std::int64_t>(cfg.num_pe_lines);
  const std::int64_t rows = s.out_shape.height;
  const auto n_channels = static_cast<std::int64_t>(channels.size());
  // Lines cooperating on one channel (intra-channel reuse only).
  const std::int64_t group =
      dataflow == Dataflow::DwIntraChannel && n_channels > 0 ? std::max<std::int64_t>(1, lines / n_channels) : 1;
  const std::int64_t per_pass = lines / group;

  for (std::int64_t first = 0; first < n_channels; first += per_pass) {
    Pass pass;
    const std::int64_t last = std::min(n_channels, first + per_pass);
    for (std::int64_t c = first; c < last; ++c) {
      for (std::int64_t g = 0; g < group; ++g) {
        LineAssignment a;
        a.pe_line = static_cast<int>((c - first) * group + g);
        a.channel = channels[static_cast<std::size_t>(c)];
        for (std::int64_t y = g; y < rows; y += group) a.output_rows.push_back(y);
        if (!a.output_rows.empty()) pass.lines.push_back(std::move(a));
      }
    }
    s.passes.push_back(std::move(pass));
  }

  // IFM footprint per output-row tile: rows touched * width * channels.
  const std::int64_t k = layer.kind == LayerKind::PwConv || layer.kind == LayerKind::Fc ? 1 : layer.kernel_size;
  const std::int64_t row_words = in_shape.width * in_shape.channels;
  std::int64_t begin = 0;
  while (begin < rows) {
    std::int64_t end = begin + 1;
    while (end < rows && ((end - begin) * layer.stride + k) * row_words <= cfg.ifm_gb_words) ++end;
    s.ifm_row_tiles.emplace_back(begin, end);
    begin = end;
  }
  return s;
}

}  // namespace detail

LayerSchedule map_layer(const LayerSpec& layer, const TensorShape& in_shape, const AccelConfig& cfg, Dataflow dataflow) {
  std::vector<std::int64_t> channels(static_cast<std::size_t>(layer.out_channels));
  for (std::size_t c = 0; c < channels.size(); ++c) channels[c] = static_cast<std::int64_t>(c);
  LayerSchedule s = detail::map_channels(layer, in_shape, cfg, dataflow, channels);
  if (s.passes.empty() || s.max_lines_per_pass() == 0) throw validation_error("map_layer: empty mapping");
  return s;
}

bool covers_outputs_exactly_once(const LayerSchedule& schedule) {
  std::map<std::pair<std::int64_t, std::int64_t>, int> seen;
  for (const auto& pass : schedule.passes) {
    std::vector<bool> used(static_cast<std::size_t>(schedule.num_pe_lines), false);
    for (const auto& a : pass.lines) {
      if (a.pe_line < 0 || a.pe_line >= schedule.num_pe_lines || used[static_cast<std::size_t>(a.pe_line)]) return false;
      used[static_cast<std::size_t>(a.pe_line)] = true;
      for (auto y : a.output_rows) ++seen[{a.channel, y}];
    }
  }
  if (seen.size() != static_cast<std::size_t>(schedule.out_shape.channels * schedule.out_shape.height)) return false;
  return std::all_of(seen.begin(), seen.end(), [](const auto& kv) { return kv.second == 1; });
}

}  // namespace iflatcam::accelsim
