#pragma once

// Config-driven experiment orchestration: builds streams per seed, runs the
// baseline and adaptive-chunk variants on the same stream realization, writes
// per-run trace CSVs, and aggregates them into Sample Restoration reports.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "car/ensemble.hpp"
#include "car/evaluation.hpp"
#include "car/scheduler.hpp"
#include "car/stream.hpp"

namespace car {

struct StreamConfig {
  enum class Source { kSynthetic, kCsv };
  Source source = Source::kSynthetic;
  std::string name = "synthetic";
  SyntheticStreamSpec synthetic;  // seed is overridden per run
  std::filesystem::path csv_path;
  std::string label_column = "class";
  std::optional<std::filesystem::path> metadata_path;
};

struct DetectorConfig {
  std::size_t fhddm_window = 1000;
  double fhddm_delta = 1e-6;
  std::size_t vsdm_window = 30;
  double vsdm_threshold = 1e-4;
  bool stabilization_enabled = true;
};

enum class RunMode { kBaseline, kCar, kBoth };

// Grid over stabilization thresholds and one second axis, either the
// stabilization window size or the drift chunk size.
struct SweepConfig {
  std::vector<double> vsdm_thresholds;
  std::string axis = "vsdm_window";  // or "drift_chunk_size"
  std::vector<std::size_t> values;
};

struct ExperimentConfig {
  std::string name = "experiment";
  StreamConfig stream;
  EnsembleConfig ensemble;
  SchedulerConfig scheduler;
  DetectorConfig detector;
  std::vector<double> sr_thresholds{0.9, 0.8, 0.7};
  std::vector<std::uint64_t> seeds{1};
  RunMode car_enabled = RunMode::kBoth;
  double noise_fraction = 0.0;
  bool oversample = false;
  std::filesystem::path output_dir = "out";
  std::optional<SweepConfig> sweep;

  // Throws ValidationError naming the offending field.
  void validate() const;
};

// Missing keys take the defaults above. Unknown keys are rejected.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

// One concrete run produced by expanding seeds, modes and the sweep grid.
struct RunPlan {
  std::string run_id;
  bool car = false;
  std::uint64_t seed = 0;
  SchedulerConfig scheduler;
  DetectorConfig detector;
  std::string variant;  // empty unless the run belongs to a sweep point
  std::optional<double> sweep_threshold;
  std::optional<std::size_t> sweep_value;
};

std::vector<RunPlan> plan_runs(const ExperimentConfig& config);

std::unique_ptr<StreamSource> make_stream(const ExperimentConfig& config, std::uint64_t seed);

// Executes a single planned run in memory.
RunRecord execute_run(const ExperimentConfig& config, const RunPlan& plan);

struct RunMeta {
  std::string run_id;
  std::string stream;
  std::string strategy;
  std::string learner;
  bool car = false;
  std::uint64_t seed = 0;
  std::string variant;
  std::optional<double> sweep_threshold;
  std::string sweep_axis;
  std::optional<std::size_t> sweep_value;
  std::vector<std::size_t> ground_truth_drifts;
  std::size_t train_only_samples = 0;
  std::size_t samples_consumed = 0;
  std::vector<double> sr_thresholds;
  nlohmann::json config;
};

void write_trace_csv(const RunRecord& record, const std::filesystem::path& path);
// Restores the trace rows and run_id; run metadata lives in the .meta.json.
RunRecord read_trace_csv(const std::filesystem::path& path);

void write_run_meta(const RunMeta& meta, const std::filesystem::path& path);
RunMeta read_run_meta(const std::filesystem::path& path);

struct ExperimentResult {
  std::vector<std::filesystem::path> trace_files;
  std::filesystem::path summary_text;
  std::filesystem::path summary_json;
};

// Runs every planned run (jobs workers), writing traces under
// <output_dir>/traces, the resolved config to <output_dir>/config.json and
// the summary to <output_dir>/summary.{txt,json}.
ExperimentResult run_experiment(const ExperimentConfig& config, std::size_t jobs = 1);

struct ReportRow {
  std::string stream;  // "*" for rows pooled over streams
  std::string model;   // "<strategy>+<learner>"
  std::string variant;
  double p = 0.0;
  std::size_t n_pairs = 0;
  double baseline_mean = 0.0;
  double baseline_std = 0.0;
  double car_mean = 0.0;
  double car_std = 0.0;
  std::optional<WilcoxonResult> wilcoxon;
  std::string wilcoxon_error;
};

struct GridReport {
  std::string axis;
  double p = 0.8;
  std::vector<double> thresholds;
  std::vector<std::size_t> values;
  std::vector<std::vector<std::optional<double>>> mean_car_sr;  // [threshold][value]
};

struct Report {
  std::vector<ReportRow> per_stream;
  std::vector<ReportRow> per_model;
  std::optional<GridReport> grid;
};

// Pairs every CAR run with the baseline run on the same stream, model and
// seed, matches their detected-drift segments per ground-truth drift, and
// compares SR values. With require_pairs, throws ValidationError listing
// unpaired runs; otherwise unpaired runs only feed their side's mean/std.
Report emit_report(const std::filesystem::path& trace_dir, bool require_pairs = true);

std::string format_report_text(const Report& report);
nlohmann::json report_to_json(const Report& report);
// Writes JSON when the extension is .json, the text table otherwise.
void write_report(const Report& report, const std::filesystem::path& path);

}  // namespace car
