#include <algorithm>

#include "iflatcam/accelsim.hpp"
#include "iflatcam/error.hpp"
#include "mapping_internal.hpp"

namespace iflatcam::accelsim {

namespace {

// One row-stationary work item of a PE line: fetch some IFM rows (shared by
// every line that needs the same `key` in the same step), then run `cycles`
// MAC batches.
struct Unit {
  std::int64_t key = -1;  // -1: operand lies entirely in padding, nothing fetched
  std::uint64_t rows = 0;
  std::uint64_t words = 0;
  std::uint64_t cycles = 0;
  std::uint64_t macs = 0;
  std::int64_t stack_row = 0;  // row of the stacked weight matrix that feeds this unit
};

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

std::vector<Unit> line_units(const LayerSchedule& s, const LineAssignment& a, int macs_per_line) {
  const auto& layer = s.layer;
  const std::int64_t h_in = s.in_shape.height;
  const auto w_in = static_cast<std::uint64_t>(s.in_shape.width);
  const auto w_out = static_cast<std::uint64_t>(s.out_shape.width);
  const std::int64_t k = layer.kernel_size;
  const auto m = static_cast<std::int64_t>(macs_per_line);
  const std::uint64_t batches = ceil_div(static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(m));
  auto row_key = [&](std::int64_t channel, std::int64_t r) { return r < 0 || r >= h_in ? -1 : channel * h_in + r; };

  std::vector<Unit> units;
  for (std::int64_t y : a.output_rows) {
    switch (layer.kind) {
      case LayerKind::Conv:
        for (std::int64_t i = 0; i < layer.in_channels; ++i) {
          for (std::int64_t ky = 0; ky < k; ++ky) {
            units.push_back({row_key(i, y * layer.stride + ky - layer.padding), 1, w_in, w_out * batches,
                             static_cast<std::uint64_t>(k) * w_out, a.channel * layer.in_channels + i});
          }
        }
        break;
      case LayerKind::DwConv:
        for (std::int64_t ky = 0; ky < k; ++ky) {
          units.push_back({row_key(a.channel, y * layer.stride + ky - layer.padding), 1, w_in, w_out * batches,
                           static_cast<std::uint64_t>(k) * w_out, a.channel});
        }
        break;
      case LayerKind::PwConv:
        for (std::int64_t i0 = 0; i0 < layer.in_channels; i0 += m) {
          const auto size = static_cast<std::uint64_t>(std::min(m, layer.in_channels - i0));
          units.push_back({row_key(i0 / m, y * layer.stride - layer.padding), size, size * w_in, w_out, size * w_out,
                           a.channel});
        }
        break;
      case LayerKind::Fc:
        for (std::int64_t i0 = 0; i0 < layer.in_channels; i0 += m) {
          const auto size = static_cast<std::uint64_t>(std::min(m, layer.in_channels - i0));
          units.push_back({i0 / m, 1, size, 1, size, a.channel});
        }
        break;
    }
  }
  return units;
}

std::int64_t stack_rows_per_channel(const LayerSpec& layer) {
  return layer.kind == LayerKind::Conv ? layer.in_channels : 1;
}

void finish(SimTrace& t, const EnergyCosts& costs) {
  const double lines = t.num_pe_lines;
  t.utilization = t.compute_cycles == 0 ? 0.0 : static_cast<double>(t.active_pe_line_cycles) / (static_cast<double>(t.compute_cycles) * lines);
  t.overall_utilization = t.cycles == 0 ? 0.0 : static_cast<double>(t.active_pe_line_cycles) / (static_cast<double>(t.cycles) * lines);
  t.energy_total = energy_from_counts(t, costs);
}

}  // namespace

double energy_from_counts(const SimTrace& t, const EnergyCosts& c) {
  return static_cast<double>(t.macs) * c.e_mac +
         static_cast<double>(t.gb_weight_reads + t.bm_loads) * c.e_weight_gb +
         static_cast<double>(t.gb_ifm_reads) * c.e_ifm_gb + static_cast<double>(t.gb_ofm_writes) * c.e_ofm_gb +
         static_cast<double>(t.index_sram_reads) * c.e_index_sram +
         static_cast<double>(t.local_reg_accesses) * c.e_local_reg;
}

SimTrace simulate_layer(const LayerSchedule& schedule, const AccelConfig& cfg, const compress::CompressedLayer* sparsity,
                        EventLog* log) {
  validate(cfg);
  if (schedule.num_pe_lines != cfg.num_pe_lines) throw validation_error("schedule was mapped for a different PE count");
  for (const auto& pass : schedule.passes) {
    for (const auto& a : pass.lines) {
      if (a.pe_line < 0 || a.pe_line >= cfg.num_pe_lines) throw validation_error("schedule uses a PE line outside the config");
    }
  }

  const LayerSpec& layer = schedule.layer;
  const std::int64_t per_channel = stack_rows_per_channel(layer);
  std::vector<bool> row_live(static_cast<std::size_t>(layer.out_channels * per_channel), true);
  if (sparsity != nullptr) {
    if (sparsity->n_rows != row_live.size()) throw validation_error("sparsity view does not match the layer's weight stack");
    const auto map = sparsity->row_map();
    for (std::size_t r = 0; r < map.size(); ++r) row_live[r] = map[r] >= 0;
  }

  // Channels whose stacked rows are all ZERO drop out of the mapping entirely.
  const LayerSchedule* active = &schedule;
  LayerSchedule remapped;
  if (sparsity != nullptr) {
    std::vector<std::int64_t> channels;
    std::vector<bool> seen(static_cast<std::size_t>(layer.out_channels), false);
    for (const auto& pass : schedule.passes) {
      for (const auto& a : pass.lines) {
        if (seen[static_cast<std::size_t>(a.channel)]) continue;
        seen[static_cast<std::size_t>(a.channel)] = true;
        for (std::int64_t i = 0; i < per_channel; ++i) {
          if (row_live[static_cast<std::size_t>(a.channel * per_channel + i)]) {
            channels.push_back(a.channel);
            break;
          }
        }
      }
    }
    remapped = detail::map_channels(layer, schedule.in_shape, cfg, schedule.dataflow, channels);
    active = &remapped;
  }

  SimTrace t;
  t.label = std::string(netspec::kind_name(layer.kind)) + "/" + std::string(dataflow_name(schedule.dataflow));
  t.num_pe_lines = cfg.num_pe_lines;
  const auto throughput = static_cast<std::uint64_t>(swpr_throughput(cfg));
  const auto w_out = static_cast<std::uint64_t>(schedule.out_shape.width);
  std::uint64_t cycle = 0;

  if (sparsity != nullptr) {
    t.bm_loads += static_cast<std::uint64_t>(sparsity->rank()) * sparsity->width();
    t.index_sram_reads += ceil_div(sparsity->bit_budget.index_bits, static_cast<std::uint64_t>(cfg.index_sram_word_bits));
    if (log != nullptr) {
      for (std::uint64_t j = 0; j < t.bm_loads; ++j) log->record(cycle, -1, "bm_load", "weight_gb");
      for (std::uint64_t j = 0; j < t.index_sram_reads; ++j) log->record(cycle, -1, "index_read", "index_sram");
    }
  }

  for (const auto& pass : active->passes) {
    if (pass.lines.empty()) continue;

    // Stationary weights: each live stacked row of a channel is fetched once per pass.
    std::vector<bool> loaded(static_cast<std::size_t>(layer.out_channels), false);
    for (const auto& a : pass.lines) {
      if (loaded[static_cast<std::size_t>(a.channel)]) continue;
      loaded[static_cast<std::size_t>(a.channel)] = true;
      for (std::int64_t i = 0; i < per_channel; ++i) {
        if (!row_live[static_cast<std::size_t>(a.channel * per_channel + i)]) continue;
        ++t.gb_weight_reads;
        if (sparsity != nullptr) t.restore_shift_adds += sparsity->width();
        if (log != nullptr) log->record(cycle, a.pe_line, "weight_read", "weight_gb");
      }
    }

    if (cfg.swpr_enabled) {
      const auto fill = static_cast<std::uint64_t>(cfg.ifm_buffer_depth);
      if (log != nullptr) {
        for (std::uint64_t c = 0; c < fill; ++c) log->record(cycle + c, -1, "swpr_fill", "ifm_gb");
      }
      t.fill_cycles += fill;
      cycle += fill;
    }

    std::vector<std::vector<Unit>> units;
    units.reserve(pass.lines.size());
    std::size_t steps = 0;
    for (const auto& a : pass.lines) {
      units.push_back(line_units(*active, a, cfg.macs_per_line));
      steps = std::max(steps, units.back().size());
    }

    std::vector<std::int64_t> keys;
    for (std::size_t step = 0; step < steps; ++step) {
      keys.clear();
      std::uint64_t words = 0;
      std::uint64_t rows = 0;
      std::uint64_t compute = 0;
      std::uint64_t active_lines = 0;
      for (std::size_t l = 0; l < units.size(); ++l) {
        if (step >= units[l].size()) continue;
        const Unit& u = units[l][step];
        if (!row_live[static_cast<std::size_t>(u.stack_row)]) continue;
        ++active_lines;
        compute = std::max(compute, u.cycles);
        t.macs += u.macs;
        if (u.key >= 0 && std::find(keys.begin(), keys.end(), u.key) == keys.end()) {
          keys.push_back(u.key);
          words += u.words;
          rows += u.rows;
        }
      }
      if (active_lines == 0) continue;

      const std::uint64_t stall = ceil_div(words, throughput);
      t.gb_ifm_reads += rows;
      t.gb_ifm_words += words;
      t.ifm_stall_cycles += stall;
      t.compute_cycles += compute;
      t.active_pe_line_cycles += active_lines * compute;
      if (log != nullptr && !log->full()) {
        for (std::uint64_t c = 0; c < stall; ++c) log->record(cycle + c, -1, "ifm_deliver", "ifm_gb");
        for (std::uint64_t c = 0; c < compute; ++c) {
          for (std::size_t l = 0; l < units.size(); ++l) {
            if (step < units[l].size() && row_live[static_cast<std::size_t>(units[l][step].stack_row)]) {
              log->record(cycle + stall + c, pass.lines[l].pe_line, "mac", "local_reg");
            }
          }
        }
      }
      cycle += stall + compute;
    }

    for (const auto& a : pass.lines) {
      t.gb_ofm_writes += a.output_rows.size() * w_out;
      if (log != nullptr) log->record(cycle, a.pe_line, "ofm_write", "ofm_gb");
    }
  }

  t.cycles = t.fill_cycles + t.ifm_stall_cycles + t.compute_cycles;
  t.local_reg_accesses = t.macs + t.restore_shift_adds;
  finish(t, cfg.energy);
  return t;
}

DataflowComparison compare_dataflows(const LayerSpec& layer, const TensorShape& in_shape, const AccelConfig& cfg) {
  if (layer.kind != LayerKind::DwConv) throw validation_error("compare_dataflows requires a DW_CONV layer");
  DataflowComparison out;
  out.naive = simulate_layer(map_layer(layer, in_shape, cfg, Dataflow::DwNaiveBaseline), cfg);
  out.intra = simulate_layer(map_layer(layer, in_shape, cfg, Dataflow::DwIntraChannel), cfg);
  out.utilization_boost_pp = 100.0 * (out.intra.utilization - out.naive.utilization);
  out.utilization_ratio = out.naive.utilization == 0.0 ? 0.0 : out.intra.utilization / out.naive.utilization;
  return out;
}

namespace {

SimTrace aggregate(std::vector<SimTrace> layers, const AccelConfig& cfg, std::string label) {
  SimTrace t;
  t.label = std::move(label);
  t.num_pe_lines = cfg.num_pe_lines;
  for (const auto& l : layers) {
    t.cycles += l.cycles;
    t.compute_cycles += l.compute_cycles;
    t.ifm_stall_cycles += l.ifm_stall_cycles;
    t.fill_cycles += l.fill_cycles;
    t.active_pe_line_cycles += l.active_pe_line_cycles;
    t.macs += l.macs;
    t.gb_weight_reads += l.gb_weight_reads;
    t.gb_ifm_reads += l.gb_ifm_reads;
    t.gb_ifm_words += l.gb_ifm_words;
    t.gb_ofm_writes += l.gb_ofm_writes;
    t.index_sram_reads += l.index_sram_reads;
    t.bm_loads += l.bm_loads;
    t.restore_shift_adds += l.restore_shift_adds;
    t.local_reg_accesses += l.local_reg_accesses;
  }
  t.layers = std::move(layers);
  finish(t, cfg.energy);
  return t;
}

}  // namespace

NetworkSimulation simulate_network(const netspec::NetworkSpec& net,
                                   std::optional<std::span<const compress::LayerStorage>> storage,
                                   const AccelConfig& cfg) {
  if (storage && storage->size() != net.layers.size()) throw validation_error("simulate_network: one storage entry per layer");
  const auto shapes = netspec::infer_shapes(net);
  std::vector<SimTrace> dense;
  std::vector<SimTrace> compressed;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& layer = net.layers[i];
    const LayerSchedule sched = map_layer(layer, shapes[i].input, cfg, default_dataflow(layer.kind));
    dense.push_back(simulate_layer(sched, cfg));
    if (storage) {
      const auto* c = std::get_if<compress::CompressedLayer>(&(*storage)[i]);
      compressed.push_back(c != nullptr ? simulate_layer(sched, cfg, c) : dense.back());
    }
  }

  NetworkSimulation out;
  out.dense_reference = aggregate(dense, cfg, net.name + "/dense");
  if (!storage) {
    out.trace = out.dense_reference;
    return out;
  }
  out.trace = aggregate(std::move(compressed), cfg, net.name + "/compressed");
  out.weight_access_reduction =
      1.0 - static_cast<double>(out.trace.weight_accesses()) / static_cast<double>(out.dense_reference.gb_weight_reads);
  return out;
}

}  // namespace iflatcam::accelsim
