// car: experiment runner for adaptive chunk-size stream classification.
//
//   car run --config <path> [--out <dir>] [--jobs <k>]
//   car report --traces <dir> --out <file>
//   car generate --config <path> --seed <s> --out <file.csv>
//
// Exit codes: 0 success, 1 validation error, 2 runtime or I/O error.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "car/error.hpp"
#include "car/experiment.hpp"
#include "car/kernels.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

int cmd_run(const std::string& config_path, const std::string& out_dir, std::size_t jobs) {
  car::ExperimentConfig config = car::load_config(config_path);
  if (!out_dir.empty()) config.output_dir = out_dir;
  const auto result = car::run_experiment(config, jobs);
  std::cout << "wrote " << result.trace_files.size() << " trace files to "
            << (config.output_dir / "traces").string() << '\n'
            << "summary: " << result.summary_text.string() << '\n';
  return 0;
}

int cmd_report(const std::string& trace_dir, const std::string& out_file) {
  const car::Report report = car::emit_report(trace_dir);
  car::write_report(report, out_file);
  std::cout << "wrote " << out_file << '\n';
  return 0;
}

// Dumps the configured synthetic stream as CSV plus a .drifts.json sidecar,
// producing input for the csv stream source.
int cmd_generate(const std::string& config_path, std::uint64_t seed, const std::string& out_file) {
  const car::ExperimentConfig config = car::load_config(config_path);
  if (config.stream.source != car::StreamConfig::Source::kSynthetic) {
    throw car::ValidationError("stream.source: generate needs a synthetic stream");
  }
  auto stream = car::make_stream(config, seed);
  std::ofstream out(out_file, std::ios::binary);
  if (!out) throw car::RuntimeError("cannot write " + out_file);
  for (int f = 0; f < stream->n_features(); ++f) out << 'x' << f << ',';
  out << "class\n";
  char buf[32];
  while (auto chunk = stream->next_chunk(10000)) {
    for (const car::Sample& s : chunk->samples) {
      for (double v : s.features) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << buf << ',';
      }
      out << s.label << '\n';
    }
  }
  std::ofstream meta(out_file + ".drifts.json", std::ios::binary);
  meta << nlohmann::json{{"ground_truth_drifts", stream->ground_truth_drifts()}}.dump() << '\n';
  if (!out || !meta) throw car::RuntimeError("failed writing " + out_file);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive chunk-size data stream classification experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::size_t jobs = 1;
  auto* run = app.add_subcommand("run", "Run baseline and CAR experiments from a JSON config");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--out", out_dir, "Output directory (overrides output_dir)");
  run->add_option("--jobs", jobs, "Concurrent runs")->check(CLI::PositiveNumber);

  std::string trace_dir;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Aggregate trace files into an SR / Wilcoxon report");
  report->add_option("--traces", trace_dir, "Directory with trace CSVs and .meta.json files")->required();
  report->add_option("--out", report_out, "Report file (.json for JSON, text otherwise)")->required();

  std::string gen_config;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  auto* generate = app.add_subcommand("generate", "Write a synthetic stream to CSV");
  generate->add_option("--config", gen_config, "Experiment config (JSON)")->required();
  generate->add_option("--seed", gen_seed, "Stream seed");
  generate->add_option("--out", gen_out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*run) return cmd_run(config_path, out_dir, jobs);
    if (*report) return cmd_report(trace_dir, report_out);
    if (*generate) return cmd_generate(gen_config, gen_seed, gen_out);
  } catch (const car::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
