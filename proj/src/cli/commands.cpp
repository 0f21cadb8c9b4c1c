#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "iflatcam/cli.hpp"
#include "iflatcam/error.hpp"
#include "iflatcam/json_util.hpp"
#include "iflatcam/lensless.hpp"
#include "iflatcam/raster_io.hpp"
#include "iflatcam/seed.hpp"

namespace iflatcam::cli {

using nlohmann::json;

namespace {

std::string fmt_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// JSON has no infinity; identical images report the string "inf".
json json_number(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : "-inf";
}

void write_text(const fs::path& path, const std::string& text) {
  io::write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create directory " + dir.string() + ": " + ec.message());
}

netspec::NetworkSpec gaze_network(const ExperimentConfig& cfg) {
  if (cfg.network_path.empty()) throw validation_error("config: 'network' is required for this command");
  return netspec::load_network(cfg.network_path);
}

std::vector<compress::DenseWeights> load_weights(const netspec::NetworkSpec& net, const std::vector<fs::path>& paths,
                                                 std::uint64_t seed) {
  if (paths.empty()) return compress::random_network_weights(net, seed);
  if (paths.size() != net.layers.size()) {
    throw validation_error("config: expected " + std::to_string(net.layers.size()) + " weight files, got " +
                           std::to_string(paths.size()));
  }
  std::vector<compress::DenseWeights> out;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    out.push_back(io::read_raw(paths[i]));
    compress::check_weights(net.layers[i], out.back());
  }
  return out;
}

std::vector<compress::LayerStorage> build_storage(const ExperimentConfig& cfg, const netspec::NetworkSpec& net,
                                                  const std::vector<compress::DenseWeights>& weights) {
  if (cfg.compression_enabled) return compress::compress_network(net, weights, cfg.compression);
  std::vector<compress::LayerStorage> out;
  for (const auto& w : weights) out.emplace_back(compress::DenseLayer{w, cfg.compression.dense_weight_bits});
  return out;
}

std::string layer_file(std::size_t i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "layer_%02zu.%s", i, ext);
  return buf;
}

std::string compression_csv(const compress::CompressionReport& report) {
  std::ostringstream out;
  out << "layer,kind,compressed,bm_bits,cm_bits,index_bits,dense_bits,total_bits,baseline_bits,ratio\n";
  for (const auto& r : report.layers) {
    out << r.index << ',' << netspec::kind_name(r.kind) << ',' << (r.compressed ? 1 : 0) << ',' << r.bm_bits << ','
        << r.cm_bits << ',' << r.index_bits << ',' << r.dense_bits << ',' << r.total_bits() << ',' << r.baseline_bits
        << ',' << fmt_double(r.ratio()) << '\n';
  }
  return out.str();
}

struct DataflowRow {
  std::size_t layer = 0;
  std::int64_t channels = 0;
  accelsim::DataflowComparison cmp;
};

std::string dataflows_csv(const std::vector<DataflowRow>& rows) {
  std::ostringstream out;
  out << "layer,channels,naive_utilization,intra_utilization,boost_pp,ratio,naive_cycles,intra_cycles\n";
  for (const auto& r : rows) {
    out << r.layer << ',' << r.channels << ',' << fmt_double(r.cmp.naive.utilization) << ','
        << fmt_double(r.cmp.intra.utilization) << ',' << fmt_double(r.cmp.utilization_boost_pp) << ','
        << fmt_double(r.cmp.utilization_ratio) << ',' << r.cmp.naive.cycles << ',' << r.cmp.intra.cycles << '\n';
  }
  return out.str();
}

json dataflow_json(const DataflowRow& r) {
  return {{"layer", r.layer},
          {"channels", r.channels},
          {"naive_utilization", r.cmp.naive.utilization},
          {"intra_utilization", r.cmp.intra.utilization},
          {"boost_pp", r.cmp.utilization_boost_pp},
          {"ratio", r.cmp.utilization_ratio}};
}

const char* input_name(pipeline::InputPath p) {
  switch (p) {
    case pipeline::InputPath::Scene: return "scene";
    case pipeline::InputPath::Reconstructed: return "reconstructed";
    case pipeline::InputPath::RawMeasurement: return "raw";
  }
  return "scene";
}

ExperimentConfig in_subdir(const ExperimentConfig& cfg, const char* name) {
  ExperimentConfig sub = cfg;
  sub.output_dir = cfg.output_dir / name;
  return sub;
}

}  // namespace

CommandResult cmd_compress(const ExperimentConfig& cfg) {
  const auto net = gaze_network(cfg);
  const auto weights = load_weights(net, cfg.weight_paths, cfg.seed);
  const auto storage = build_storage(cfg, net, weights);
  const auto report = compress::compression_report(net, storage, cfg.baseline_weight_bits);

  const fs::path dir = cfg.output_dir / "compressed";
  make_dir(dir);
  json layers_extra = json::array();
  for (std::size_t i = 0; i < storage.size(); ++i) {
    if (const auto* c = std::get_if<compress::CompressedLayer>(&storage[i])) {
      const auto bytes = compress::serialize(*c);
      io::write_bytes(dir / layer_file(i, "ifc"), bytes);
      layers_extra.push_back({{"index", i},
                              {"file", layer_file(i, "ifc")},
                              {"serialized_bytes", bytes.size()},
                              {"rank", c->rank()},
                              {"rows", c->n_rows},
                              {"zero_rows", c->n_rows - c->nonzero_rows.size()}});
    } else {
      io::write_raw(dir / layer_file(i, "raw"), std::get<compress::DenseLayer>(storage[i]).weights);
      layers_extra.push_back({{"index", i}, {"file", layer_file(i, "raw")}});
    }
  }

  json summary = compress::report_to_json(report);
  summary["network"] = net.name;
  summary["seed"] = cfg.seed;
  summary["compression_enabled"] = cfg.compression_enabled;
  summary["baseline_weight_bits"] = cfg.baseline_weight_bits;
  summary["files"] = std::move(layers_extra);
  const std::string table = compression_csv(report);
  make_dir(cfg.output_dir);
  json_util::write_file(cfg.output_dir / "report.json", summary);
  write_text(cfg.output_dir / "report.csv", table);
  return {summary, table};
}

CommandResult cmd_simulate(const ExperimentConfig& cfg) {
  const auto net = gaze_network(cfg);
  const auto weights = load_weights(net, cfg.weight_paths, cfg.seed);
  const auto storage = build_storage(cfg, net, weights);
  const auto sim = accelsim::simulate_network(net, std::span<const compress::LayerStorage>(storage), cfg.accel);
  const auto shapes = netspec::infer_shapes(net);

  std::vector<DataflowRow> dataflows;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (net.layers[i].kind != netspec::LayerKind::DwConv) continue;
    dataflows.push_back({i, net.layers[i].in_channels, accelsim::compare_dataflows(net.layers[i], shapes[i].input, cfg.accel)});
  }

  json summary;
  summary["network"] = net.name;
  summary["seed"] = cfg.seed;
  summary["accel"] = accelsim::config_to_json(cfg.accel);
  summary["compressed"] = accelsim::trace_to_json(sim.trace);
  summary["dense"] = accelsim::trace_to_json(sim.dense_reference);
  summary["weight_access_reduction"] = sim.weight_access_reduction;
  json df = json::array();
  for (const auto& r : dataflows) df.push_back(dataflow_json(r));
  summary["dataflows"] = std::move(df);

  if (cfg.simulate.swpr_sweep) {
    auto on = cfg.accel;
    auto off = cfg.accel;
    on.swpr_enabled = true;
    off.swpr_enabled = false;
    const auto t_on = accelsim::simulate_network(net, std::nullopt, on).trace;
    const auto t_off = accelsim::simulate_network(net, std::nullopt, off).trace;
    const double ratio = t_on.ifm_stall_cycles == 0
                             ? 0.0
                             : static_cast<double>(t_off.ifm_stall_cycles) / static_cast<double>(t_on.ifm_stall_cycles);
    summary["swpr_sweep"] = {{"swpr_on", {{"cycles", t_on.cycles}, {"ifm_stall_cycles", t_on.ifm_stall_cycles}, {"fill_cycles", t_on.fill_cycles}}},
                             {"swpr_off", {{"cycles", t_off.cycles}, {"ifm_stall_cycles", t_off.ifm_stall_cycles}, {"fill_cycles", t_off.fill_cycles}}},
                             {"ifm_stall_ratio", ratio}};
  }

  make_dir(cfg.output_dir);
  if (cfg.simulate.event_log_layer >= 0) {
    const auto li = static_cast<std::size_t>(cfg.simulate.event_log_layer);
    if (li >= net.layers.size()) throw validation_error("simulate.event_log_layer out of range");
    const auto& layer = net.layers[li];
    const auto schedule = accelsim::map_layer(layer, shapes[li].input, cfg.accel, accelsim::default_dataflow(layer.kind));
    const auto* sparsity = std::get_if<compress::CompressedLayer>(&storage[li]);
    accelsim::EventLog log(cfg.simulate.event_log_cap);
    accelsim::simulate_layer(schedule, cfg.accel, sparsity, &log);
    write_text(cfg.output_dir / "events.csv", log.to_csv());
    summary["event_log"] = {{"layer", li}, {"events", log.events().size()}, {"truncated", log.truncated()}};
  }

  const std::string table = accelsim::trace_to_csv(sim.trace);
  json_util::write_file(cfg.output_dir / "trace.json", summary);
  write_text(cfg.output_dir / "trace.csv", table);
  write_text(cfg.output_dir / "dataflows.csv", dataflows_csv(dataflows));
  return {summary, table};
}

CommandResult cmd_pipeline(const ExperimentConfig& cfg) {
  if (!cfg.prediction_network_path) throw validation_error("config: 'prediction_network' is required for pipeline");
  const auto& ps = cfg.pipeline;
  const netspec::TensorShape frame_shape{1, ps.frame_height, ps.frame_width};
  const auto gaze_net = netspec::with_input_shape(gaze_network(cfg), frame_shape);
  const netspec::TensorShape pred_shape{1, std::max<std::int64_t>(1, ps.frame_height / ps.policy.prediction_downsample),
                          std::max<std::int64_t>(1, ps.frame_width / ps.policy.prediction_downsample)};
  const auto pred_net = netspec::with_input_shape(netspec::load_network(*cfg.prediction_network_path), pred_shape);

  const auto gaze_weights = load_weights(gaze_net, cfg.weight_paths, cfg.seed);
  const auto pred_weights = load_weights(pred_net, cfg.prediction_weight_paths, sub_seed(cfg.seed, "prediction"));
  const auto gaze_storage = build_storage(cfg, gaze_net, gaze_weights);

  pipeline::PipelineNets nets{pipeline::prepare_network(pred_net, std::span<const compress::DenseWeights>(pred_weights)),
                              pipeline::prepare_network(gaze_net, std::span<const compress::LayerStorage>(gaze_storage))};
  const auto stream = pipeline::generate_synthetic_stream(ps.n_frames, frame_shape, sub_seed(cfg.seed, "stream"), ps.stream);
  auto run_opts = ps.run;
  run_opts.mask_seed = sub_seed(cfg.seed, "mask");
  run_opts.noise_seed = sub_seed(cfg.seed, "noise");
  const auto run = pipeline::run_pipeline(stream, nets, ps.policy, run_opts);
  const auto& r = run.report;

  json summary = {{"network", gaze_net.name},
                  {"prediction_network", pred_net.name},
                  {"seed", cfg.seed},
                  {"mode", ps.policy.mode == pipeline::PolicyMode::Periodic ? "periodic" : "trigger"},
                  {"input", input_name(run_opts.input)},
                  {"n_frames", r.n_frames},
                  {"predictions", r.predictions},
                  {"prediction_flops", r.prediction_flops},
                  {"gaze_flops_roi", r.gaze_flops_roi},
                  {"gaze_flops_full", r.gaze_flops_full},
                  {"total_flops", r.total_flops},
                  {"empirical_total_flops", run.empirical_total_flops},
                  {"analytic_matches_empirical", r.total_flops == run.empirical_total_flops},
                  {"baseline_total", r.baseline_total},
                  {"avg_flops_per_frame", r.avg_flops_per_frame},
                  {"baseline_flops_per_frame", r.baseline_flops_per_frame},
                  {"reduction_fraction", r.reduction_fraction},
                  {"roi_target_fraction", ps.policy.roi_target_fraction},
                  {"reconstruction_macs_per_frame", run.reconstruction_macs_per_frame},
                  {"mean_angular_error_deg", run.mean_angular_error}};
  const std::string table = pipeline::frames_csv(run, stream);
  make_dir(cfg.output_dir);
  json_util::write_file(cfg.output_dir / "flops_report.json", summary);
  write_text(cfg.output_dir / "frames.csv", table);
  return {summary, table};
}

CommandResult cmd_reconstruct(const ExperimentConfig& cfg) {
  const auto& ls = cfg.lensless;
  const auto mask = ls.mask_path ? lensless::mask_from_json(json_util::read_file(*ls.mask_path))
                                 : lensless::generate_mask_pair(ls.scene_rows, ls.scene_cols, ls.measurement_rows,
                                                                ls.measurement_cols, sub_seed(cfg.seed, "mask"));
  if (mask.scene_rows() != ls.scene_rows || mask.scene_cols() != ls.scene_cols) {
    throw validation_error("lensless: mask scene size does not match scene_rows x scene_cols");
  }
  const auto op = lensless::compute_operator(mask);

  std::vector<lensless::SceneImage> scenes;
  if (ls.scenes == SceneSource::Stream) {
    const auto stream = pipeline::generate_synthetic_stream(ls.n_scenes, {1, ls.scene_rows, ls.scene_cols},
                                                            sub_seed(cfg.seed, "stream"), cfg.pipeline.stream);
    for (const auto& f : stream.frames) scenes.push_back({f});
  } else {
    for (std::size_t i = 0; i < ls.n_scenes; ++i) {
      if (ls.scenes == SceneSource::Zero) {
        scenes.push_back({Eigen::MatrixXd::Zero(ls.scene_rows, ls.scene_cols)});
      } else {
        scenes.push_back(lensless::random_scene(ls.scene_rows, ls.scene_cols, sub_seed(cfg.seed, "scene." + std::to_string(i))));
      }
    }
  }

  std::vector<double> lambdas = ls.lambdas;
  std::sort(lambdas.begin(), lambdas.end());
  std::vector<lensless::TikhonovSolver> solvers;
  for (double lambda : lambdas) solvers.emplace_back(op, lambda);

  make_dir(cfg.output_dir);
  std::ostringstream table;
  table << "scene,lambda,psnr_db,residual,max_abs\n";
  double min_psnr = std::numeric_limits<double>::infinity();
  std::vector<double> min_by_lambda(lambdas.size(), std::numeric_limits<double>::infinity());
  double max_abs = 0.0;
  bool monotone = true;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto y = lensless::forward_capture(op, scenes[s], ls.noise_sigma, sub_seed(cfg.seed, "noise." + std::to_string(s)));
    double prev_residual = -1.0;
    for (std::size_t l = 0; l < solvers.size(); ++l) {
      const auto x = solvers[l].solve(y, lensless::OutputMode::Raw);
      const double p = lensless::psnr(scenes[s], x);
      const double res = lensless::data_residual(op, x, y);
      const double amax = x.pixels.cwiseAbs().maxCoeff();
      min_psnr = std::min(min_psnr, p);
      min_by_lambda[l] = std::min(min_by_lambda[l], p);
      max_abs = std::max(max_abs, amax);
      if (res < prev_residual) monotone = false;
      prev_residual = res;
      table << s << ',' << fmt_double(lambdas[l]) << ',' << fmt_double(p) << ',' << fmt_double(res) << ','
            << fmt_double(amax) << '\n';
      if (ls.write_images) {
        char name[64];
        std::snprintf(name, sizeof name, "recon_s%02zu_l%02zu", s, l);
        io::write_raw(cfg.output_dir / (std::string(name) + ".raw"), x.pixels);
        io::write_pgm(cfg.output_dir / (std::string(name) + ".pgm"), x.pixels);
      }
    }
  }

  json per_lambda = json::array();
  for (std::size_t l = 0; l < lambdas.size(); ++l) {
    per_lambda.push_back({{"lambda", lambdas[l]}, {"min_psnr_db", json_number(min_by_lambda[l])}});
  }
  json summary = {{"seed", cfg.seed},
                  {"scene_rows", ls.scene_rows},
                  {"scene_cols", ls.scene_cols},
                  {"measurement_rows", ls.measurement_rows},
                  {"measurement_cols", ls.measurement_cols},
                  {"n_scenes", scenes.size()},
                  {"noise_sigma", ls.noise_sigma},
                  {"lambdas", lambdas},
                  {"min_psnr_db", json_number(min_psnr)},
                  {"per_lambda", std::move(per_lambda)},
                  {"max_abs_reconstruction", max_abs},
                  {"residual_monotone_in_lambda", monotone},
                  {"macs_per_solve", solvers.front().macs_per_solve()}};
  json_util::write_file(cfg.output_dir / "mask.json", lensless::mask_to_json(mask));
  json_util::write_file(cfg.output_dir / "reconstruct.json", summary);
  write_text(cfg.output_dir / "psnr.csv", table.str());
  return {summary, table.str()};
}

CommandResult cmd_report(const ExperimentConfig& cfg) {
  const auto comp = cmd_compress(in_subdir(cfg, "compress"));
  const auto sim = cmd_simulate(in_subdir(cfg, "simulate"));

  json summary = {{"seed", cfg.seed},
                  {"compression_ratio", comp.summary.at("ratio")},
                  {"compressed_bits", comp.summary.at("total_bits")},
                  {"baseline_bits", comp.summary.at("baseline_bits")},
                  {"weight_access_reduction", sim.summary.at("weight_access_reduction")},
                  {"dataflows", sim.summary.at("dataflows")}};
  if (sim.summary.contains("swpr_sweep")) summary["swpr_ifm_stall_ratio"] = sim.summary["swpr_sweep"]["ifm_stall_ratio"];
  if (cfg.prediction_network_path) {
    const auto pipe = cmd_pipeline(in_subdir(cfg, "pipeline"));
    summary["pipeline"] = {{"n_frames", pipe.summary.at("n_frames")},
                           {"predictions", pipe.summary.at("predictions")},
                           {"reduction_fraction", pipe.summary.at("reduction_fraction")},
                           {"analytic_matches_empirical", pipe.summary.at("analytic_matches_empirical")}};
  }

  std::ostringstream table;
  table << "metric,value\n";
  table << "compression_ratio," << fmt_double(summary["compression_ratio"].get<double>()) << '\n';
  table << "weight_access_reduction," << fmt_double(summary["weight_access_reduction"].get<double>()) << '\n';
  if (summary.contains("swpr_ifm_stall_ratio")) {
    table << "swpr_ifm_stall_ratio," << fmt_double(summary["swpr_ifm_stall_ratio"].get<double>()) << '\n';
  }
  if (summary.contains("pipeline")) {
    table << "pipeline_predictions," << summary["pipeline"]["predictions"].get<std::size_t>() << '\n';
    table << "pipeline_reduction," << fmt_double(summary["pipeline"]["reduction_fraction"].get<double>()) << '\n';
  }
  make_dir(cfg.output_dir);
  json_util::write_file(cfg.output_dir / "summary.json", summary);
  write_text(cfg.output_dir / "summary.csv", table.str());
  return {summary, table.str()};
}

}  // namespace iflatcam::cli
