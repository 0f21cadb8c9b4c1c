#include <cinttypes>
#include <cstdio>
#include <sstream>

#include "iflatcam/accelsim.hpp"
#include "iflatcam/error.hpp"
#include "iflatcam/json_util.hpp"

namespace iflatcam::accelsim {

void validate(const AccelConfig& cfg) {
  if (cfg.num_pe_lines < 1 || cfg.macs_per_line < 1 || cfg.ifm_buffer_depth < 1) {
    throw validation_error("accel config: line counts and buffer depth must be >= 1");
  }
  if (cfg.weight_gb_words < 1 || cfg.ifm_gb_words < 1 || cfg.ofm_gb_words < 1 || cfg.index_sram_word_bits < 8) {
    throw validation_error("accel config: memory sizes must be positive (index word >= 8 bits)");
  }
  const auto& e = cfg.energy;
  for (double v : {e.e_mac, e.e_weight_gb, e.e_ifm_gb, e.e_ofm_gb, e.e_index_sram, e.e_local_reg}) {
    if (!(v >= 0.0)) throw validation_error("accel config: energy costs must be >= 0");
  }
}

AccelConfig config_from_json(const nlohmann::json& doc) {
  using namespace json_util;
  reject_unknown(doc, {"num_pe_lines", "macs_per_line", "ifm_buffer_depth", "swpr_enabled", "weight_gb_words",
                       "ifm_gb_words", "ofm_gb_words", "index_sram_word_bits", "energy_costs"},
                 "accel");
  AccelConfig cfg;
  cfg.num_pe_lines = optional(doc, "num_pe_lines", cfg.num_pe_lines, "accel");
  cfg.macs_per_line = optional(doc, "macs_per_line", cfg.macs_per_line, "accel");
  cfg.ifm_buffer_depth = optional(doc, "ifm_buffer_depth", cfg.ifm_buffer_depth, "accel");
  cfg.swpr_enabled = optional(doc, "swpr_enabled", cfg.swpr_enabled, "accel");
  cfg.weight_gb_words = optional(doc, "weight_gb_words", cfg.weight_gb_words, "accel");
  cfg.ifm_gb_words = optional(doc, "ifm_gb_words", cfg.ifm_gb_words, "accel");
  cfg.ofm_gb_words = optional(doc, "ofm_gb_words", cfg.ofm_gb_words, "accel");
  cfg.index_sram_word_bits = optional(doc, "index_sram_word_bits", cfg.index_sram_word_bits, "accel");
  if (doc.contains("energy_costs")) {
    const auto& e = doc.at("energy_costs");
    reject_unknown(e, {"e_mac", "e_weight_gb", "e_ifm_gb", "e_ofm_gb", "e_index_sram", "e_local_reg"}, "accel.energy_costs");
    auto& c = cfg.energy;
    c.e_mac = optional(e, "e_mac", c.e_mac, "energy_costs");
    c.e_weight_gb = optional(e, "e_weight_gb", c.e_weight_gb, "energy_costs");
    c.e_ifm_gb = optional(e, "e_ifm_gb", c.e_ifm_gb, "energy_costs");
    c.e_ofm_gb = optional(e, "e_ofm_gb", c.e_ofm_gb, "energy_costs");
    c.e_index_sram = optional(e, "e_index_sram", c.e_index_sram, "energy_costs");
    c.e_local_reg = optional(e, "e_local_reg", c.e_local_reg, "energy_costs");
  }
  validate(cfg);
  return cfg;
}

nlohmann::json config_to_json(const AccelConfig& cfg) {
  const auto& e = cfg.energy;
  return {{"num_pe_lines", cfg.num_pe_lines},
          {"macs_per_line", cfg.macs_per_line},
          {"ifm_buffer_depth", cfg.ifm_buffer_depth},
          {"swpr_enabled", cfg.swpr_enabled},
          {"weight_gb_words", cfg.weight_gb_words},
          {"ifm_gb_words", cfg.ifm_gb_words},
          {"ofm_gb_words", cfg.ofm_gb_words},
          {"index_sram_word_bits", cfg.index_sram_word_bits},
          {"energy_costs",
           {{"e_mac", e.e_mac},
            {"e_weight_gb", e.e_weight_gb},
            {"e_ifm_gb", e.e_ifm_gb},
            {"e_ofm_gb", e.e_ofm_gb},
            {"e_index_sram", e.e_index_sram},
            {"e_local_reg", e.e_local_reg}}}};
}

namespace {

nlohmann::json trace_fields(const SimTrace& t) {
  return {{"label", t.label},
          {"cycles", t.cycles},
          {"compute_cycles", t.compute_cycles},
          {"ifm_stall_cycles", t.ifm_stall_cycles},
          {"fill_cycles", t.fill_cycles},
          {"active_pe_line_cycles", t.active_pe_line_cycles},
          {"utilization", t.utilization},
          {"overall_utilization", t.overall_utilization},
          {"macs", t.macs},
          {"gb_weight_reads", t.gb_weight_reads},
          {"gb_ifm_reads", t.gb_ifm_reads},
          {"gb_ifm_words", t.gb_ifm_words},
          {"gb_ofm_writes", t.gb_ofm_writes},
          {"index_sram_reads", t.index_sram_reads},
          {"bm_loads", t.bm_loads},
          {"restore_shift_adds", t.restore_shift_adds},
          {"local_reg_accesses", t.local_reg_accesses},
          {"energy_total", t.energy_total}};
}

void csv_row(std::ostringstream& out, std::size_t index, const SimTrace& t) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%zu,%s,%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%.17g,%" PRIu64 ",%" PRIu64
                ",%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%.17g\n",
                index, t.label.c_str(), t.cycles, t.compute_cycles, t.ifm_stall_cycles, t.fill_cycles,
                t.active_pe_line_cycles, t.utilization, t.macs, t.gb_weight_reads, t.gb_ifm_reads, t.gb_ifm_words,
                t.gb_ofm_writes, t.index_sram_reads, t.bm_loads, t.restore_shift_adds, t.local_reg_accesses, t.energy_total);
  out << buf;
}

}  // namespace

nlohmann::json trace_to_json(const SimTrace& trace) {
  nlohmann::json doc = trace_fields(trace);
  doc["num_pe_lines"] = trace.num_pe_lines;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : trace.layers) layers.push_back(trace_fields(layer));
  doc["layers"] = std::move(layers);
  return doc;
}

std::string trace_csv_header() {
  return "layer,label,cycles,compute_cycles,ifm_stall_cycles,fill_cycles,active_pe_line_cycles,utilization,macs,"
         "gb_weight_reads,gb_ifm_reads,gb_ifm_words,gb_ofm_writes,index_sram_reads,bm_loads,restore_shift_adds,"
         "local_reg_accesses,energy_total\n";
}

std::string trace_to_csv(const SimTrace& trace) {
  std::ostringstream out;
  out << trace_csv_header();
  if (trace.layers.empty()) {
    csv_row(out, 0, trace);
  } else {
    for (std::size_t i = 0; i < trace.layers.size(); ++i) csv_row(out, i, trace.layers[i]);
  }
  return out.str();
}

void EventLog::record(std::uint64_t cycle, int pe_line, const char* event, const char* address_class) {
  if (full()) {
    truncated_ = true;
    return;
  }
  events_.push_back({cycle, pe_line, event, address_class});
}

std::string EventLog::to_csv() const {
  std::ostringstream out;
  out << "cycle,pe_line,event,address_class\n";
  for (const auto& e : events_) out << e.cycle << ',' << e.pe_line << ',' << e.event << ',' << e.address_class << '\n';
  return out.str();
}

}  // namespace iflatcam::accelsim
