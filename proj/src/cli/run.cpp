#include <exception>
#include <filesystem>
#include <ostream>

#include <CLI11.hpp>

#include "iflatcam/cli.hpp"
#include "iflatcam/error.hpp"

namespace iflatcam::cli {

namespace {

struct Flags {
  std::string config;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::string format = "json";
  bool verbose = false;
};

void add_flags(CLI::App& sub, Flags& flags) {
  sub.add_option("--config", flags.config, "experiment config (JSON)")->required();
  sub.add_option("--output-dir", flags.output_dir, "override the config's output_dir");
  sub.add_option("--seed", flags.seed, "override the config's seed");
  sub.add_option("--format", flags.format, "stdout format")->check(CLI::IsMember({"json", "csv"}));
  sub.add_flag("--verbose", flags.verbose, "log progress to stderr");
}

void report_error(std::ostream& err, ErrorCode code, const std::string& message) {
  err << nlohmann::json{{"code", error_code_name(code)}, {"message", message}}.dump() << '\n';
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"iflatcam: lensless eye-tracking accelerator experiments"};
  app.require_subcommand(1);
  Flags flags;
  using Command = CommandResult (*)(const ExperimentConfig&);
  const std::pair<const char*, Command> commands[] = {{"compress", cmd_compress},
                                                      {"simulate", cmd_simulate},
                                                      {"pipeline", cmd_pipeline},
                                                      {"reconstruct", cmd_reconstruct},
                                                      {"report", cmd_report}};
  const char* descriptions[] = {"compress network weights and write bitstreams plus a storage report",
                                "run the accelerator simulator (dense vs compressed, dataflows, SWPR sweep)",
                                "run predict-then-focus over a synthetic eye stream",
                                "capture and reconstruct scenes through the coded mask",
                                "run compress, simulate and pipeline and collect headline numbers"};
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < std::size(commands); ++i) {
    subs.push_back(app.add_subcommand(commands[i].first, descriptions[i]));
    add_flags(*subs.back(), flags);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    report_error(err, ErrorCode::Validation, e.what());
    return exit_code_for(ErrorCode::Validation);
  }

  try {
    ExperimentConfig cfg = load_config(flags.config);
    if (flags.seed) cfg.seed = *flags.seed;
    if (!flags.output_dir.empty()) cfg.output_dir = flags.output_dir;
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (!subs[i]->parsed()) continue;
      if (flags.verbose) err << "iflatcam: " << commands[i].first << " -> " << cfg.output_dir.string() << '\n';
      const CommandResult result = commands[i].second(cfg);
      if (flags.format == "csv") {
        out << result.table;
      } else {
        out << result.summary.dump(2) << '\n';
      }
      if (flags.verbose) err << "iflatcam: done\n";
    }
    return 0;
  } catch (const Error& e) {
    report_error(err, e.code(), e.what());
    return exit_code_for(e.code());
  } catch (const nlohmann::json::exception& e) {
    report_error(err, ErrorCode::Validation, e.what());
    return exit_code_for(ErrorCode::Validation);
  } catch (const std::filesystem::filesystem_error& e) {
    report_error(err, ErrorCode::Io, e.what());
    return exit_code_for(ErrorCode::Io);
  } catch (const std::exception& e) {
    report_error(err, ErrorCode::Internal, e.what());
    return exit_code_for(ErrorCode::Internal);
  }
}

}  // namespace iflatcam::cli
