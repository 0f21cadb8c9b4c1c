#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "iflatcam/compress.hpp"
#include "iflatcam/netspec.hpp"

namespace iflatcam::accelsim {

using netspec::LayerKind;
using netspec::LayerSpec;
using netspec::TensorShape;

/// Relative energy per event (arbitrary units).
struct EnergyCosts {
  double e_mac = 1.0;
  double e_weight_gb = 6.0;
  double e_ifm_gb = 6.0;
  double e_ofm_gb = 6.0;
  double e_index_sram = 1.5;
  double e_local_reg = 0.5;
};

struct AccelConfig {
  int num_pe_lines = 64;
  int macs_per_line = 8;
  int ifm_buffer_depth = 64;  // SWPR buffer words; filled once per pass
  bool swpr_enabled = true;
  std::int64_t weight_gb_words = 1 << 17;
  std::int64_t ifm_gb_words = 1 << 17;
  std::int64_t ofm_gb_words = 1 << 17;
  int index_sram_word_bits = 64;
  EnergyCosts energy;
};

void validate(const AccelConfig& cfg);
AccelConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const AccelConfig& cfg);

enum class Dataflow { ConvInterChannel, DwIntraChannel, DwNaiveBaseline };

std::string_view dataflow_name(Dataflow dataflow);
Dataflow default_dataflow(LayerKind kind);

struct LineAssignment {
  int pe_line = 0;
  std::int64_t channel = 0;
  std::vector<std::int64_t> output_rows;  // in processing order
};

struct Pass {
  std::vector<LineAssignment> lines;
};

struct LayerSchedule {
  LayerSpec layer;
  TensorShape in_shape;
  TensorShape out_shape;
  Dataflow dataflow = Dataflow::ConvInterChannel;
  int num_pe_lines = 64;
  std::vector<Pass> passes;
  /// Output-row tiles whose IFM footprint fits the IFM global buffer.
  std::vector<std::pair<std::int64_t, std::int64_t>> ifm_row_tiles;

  std::size_t max_lines_per_pass() const;
};

/// CONV_INTER_CHANNEL: one output channel per PE line, IFM rows broadcast to all
/// lines; channels beyond num_pe_lines run in further passes.
/// DW_NAIVE_BASELINE: the same rule on a DW layer (one line per channel).
/// DW_INTRA_CHANNEL: each channel's output rows interleaved over num_pe_lines / C lines.
LayerSchedule map_layer(const LayerSpec& layer, const TensorShape& in_shape, const AccelConfig& cfg, Dataflow dataflow);

/// Checks that every output element is produced by exactly one line assignment.
bool covers_outputs_exactly_once(const LayerSchedule& schedule);

/// IFM words per cycle the SWPR buffer delivers to the PE lines.
int swpr_throughput(const AccelConfig& cfg);

struct SimTrace {
  std::string label;
  int num_pe_lines = 64;
  std::uint64_t cycles = 0;  // fill + IFM stall + compute
  std::uint64_t compute_cycles = 0;
  std::uint64_t ifm_stall_cycles = 0;
  std::uint64_t fill_cycles = 0;
  std::uint64_t active_pe_line_cycles = 0;
  std::uint64_t macs = 0;
  std::uint64_t gb_weight_reads = 0;
  std::uint64_t gb_ifm_reads = 0;
  std::uint64_t gb_ifm_words = 0;
  std::uint64_t gb_ofm_writes = 0;
  std::uint64_t index_sram_reads = 0;
  std::uint64_t bm_loads = 0;  // BM words copied once per layer into the restore engine's local store
  std::uint64_t restore_shift_adds = 0;
  std::uint64_t local_reg_accesses = 0;
  double utilization = 0.0;          // active / (compute_cycles * lines)
  double overall_utilization = 0.0;  // active / (cycles * lines)
  double energy_total = 0.0;
  std::vector<SimTrace> layers;

  std::uint64_t weight_accesses() const { return gb_weight_reads + index_sram_reads; }
};

/// Energy from the event-count table: sum of count * unit cost. BM loads are
/// charged as weight GB traffic.
double energy_from_counts(const SimTrace& trace, const EnergyCosts& costs);

struct TraceEvent {
  std::uint64_t cycle = 0;
  int pe_line = -1;
  std::string event;
  std::string address_class;
};

/// Per-cycle event log for small layers; stops recording at `cap` events.
class EventLog {
 public:
  explicit EventLog(std::size_t cap = 1'000'000) : cap_(cap) {}

  void record(std::uint64_t cycle, int pe_line, const char* event, const char* address_class);
  const std::vector<TraceEvent>& events() const { return events_; }
  bool truncated() const { return truncated_; }
  bool full() const { return events_.size() >= cap_; }
  std::string to_csv() const;

 private:
  std::size_t cap_;
  std::vector<TraceEvent> events_;
  bool truncated_ = false;
};

/// Event-counted simulation of one scheduled layer. With `sparsity`, ZERO CM
/// rows are skipped structurally: no MACs, no weight reads and no cycles.
SimTrace simulate_layer(const LayerSchedule& schedule, const AccelConfig& cfg,
                        const compress::CompressedLayer* sparsity = nullptr, EventLog* log = nullptr);

struct DataflowComparison {
  SimTrace naive;
  SimTrace intra;
  double utilization_boost_pp = 0.0;
  double utilization_ratio = 0.0;
};

DataflowComparison compare_dataflows(const LayerSpec& layer, const TensorShape& in_shape, const AccelConfig& cfg);

struct NetworkSimulation {
  SimTrace trace;
  SimTrace dense_reference;
  /// 1 - (weight GB reads + index reads) / dense weight GB reads.
  double weight_access_reduction = 0.0;
};

NetworkSimulation simulate_network(const netspec::NetworkSpec& net,
                                   std::optional<std::span<const compress::LayerStorage>> storage,
                                   const AccelConfig& cfg);

nlohmann::json trace_to_json(const SimTrace& trace);
/// One row per layer; columns listed by trace_csv_header().
std::string trace_csv_header();
std::string trace_to_csv(const SimTrace& trace);

}  // namespace iflatcam::accelsim
