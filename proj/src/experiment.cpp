#include "car/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "car/error.hpp"

namespace car {

using nlohmann::json;

namespace {

// Reads one JSON object, remembering which keys were consumed so that typos
// surface as validation errors instead of silently falling back to defaults.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ValidationError(path_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end() || it->is_null()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ValidationError(field(key) + ": must be true or false");
      } else if constexpr (std::is_unsigned_v<T> && std::is_integral_v<T>) {
        if (!it->is_number_integer() || it->template get<long long>() < 0) {
          throw ValidationError(field(key) + ": must be a non-negative integer");
        }
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_integer()) throw ValidationError(field(key) + ": must be an integer");
      }
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ValidationError(field(key) + ": has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() || it->is_null() ? nullptr : &*it;
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) throw ValidationError(field(key.c_str()) + ": unknown key");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

bool safe_name(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.';
  });
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string model_name(const std::string& strategy, const std::string& learner) {
  return strategy + "+" + learner;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (!safe_name(name)) throw ValidationError("name: use letters, digits, '_', '-' or '.'");
  if (!safe_name(stream.name)) throw ValidationError("stream.name: use letters, digits, '_', '-' or '.'");
  if (stream.source == StreamConfig::Source::kSynthetic) {
    try {
      stream.synthetic.validate();
    } catch (const ValidationError& e) {
      throw ValidationError(std::string("stream.") + e.what());
    }
  } else {
    if (stream.csv_path.empty()) throw ValidationError("stream.path: required for csv streams");
    if (stream.label_column.empty()) throw ValidationError("stream.label_column: must not be empty");
  }
  try {
    ensemble.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("ensemble.") + e.what());
  }
  try {
    scheduler.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("scheduler.") + e.what());
  }
  if (detector.fhddm_window < 1) throw ValidationError("detector.fhddm_window: must be >= 1");
  if (!(detector.fhddm_delta > 0.0 && detector.fhddm_delta < 1.0)) {
    throw ValidationError("detector.fhddm_delta: must lie in (0, 1)");
  }
  if (detector.vsdm_window < 2) throw ValidationError("detector.vsdm_window: must be >= 2");
  if (!(detector.vsdm_threshold > 0.0)) throw ValidationError("detector.vsdm_threshold: must be > 0");
  if (sr_thresholds.empty()) throw ValidationError("sr_thresholds: must not be empty");
  for (double p : sr_thresholds) {
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("sr_thresholds: values must lie in (0, 1)");
  }
  if (seeds.empty()) throw ValidationError("seeds: must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ValidationError("seeds: must be distinct");
  }
  if (!(noise_fraction >= 0.0 && noise_fraction <= 1.0)) {
    throw ValidationError("noise_fraction: must lie in [0, 1]");
  }
  if (output_dir.empty()) throw ValidationError("output_dir: must not be empty");
  if (sweep) {
    if (sweep->axis != "vsdm_window" && sweep->axis != "drift_chunk_size") {
      throw ValidationError("sweep.axis: must be 'vsdm_window' or 'drift_chunk_size'");
    }
    if (sweep->vsdm_thresholds.empty()) throw ValidationError("sweep.vsdm_thresholds: must not be empty");
    if (sweep->values.empty()) throw ValidationError("sweep.values: must not be empty");
    for (double t : sweep->vsdm_thresholds) {
      if (!(t > 0.0)) throw ValidationError("sweep.vsdm_thresholds: values must be > 0");
    }
    for (std::size_t v : sweep->values) {
      if (sweep->axis == "vsdm_window" && v < 2) throw ValidationError("sweep.values: window sizes must be >= 2");
      if (sweep->axis == "drift_chunk_size" && (v < 1 || v > scheduler.base_chunk_size)) {
        throw ValidationError("sweep.values: drift chunk sizes must lie in [1, base_chunk_size]");
      }
    }
    if (car_enabled == RunMode::kBaseline) throw ValidationError("sweep: requires CAR runs");
  }
}

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig config;
  ObjectReader root(doc, "");
  root.read("name", config.name);

  if (const json* s = root.child("stream")) {
    ObjectReader r(*s, "stream");
    std::string source = "synthetic";
    r.read("source", source);
    r.read("name", config.stream.name);
    if (source == "synthetic") {
      auto& spec = config.stream.synthetic;
      std::string drift_type = to_string(spec.drift_type);
      r.read("n_samples", spec.n_samples);
      r.read("n_classes", spec.n_classes);
      r.read("n_features", spec.n_features);
      r.read("n_informative", spec.n_informative);
      r.read("n_redundant", spec.n_redundant);
      r.read("n_drifts", spec.n_drifts);
      r.read("drift_type", drift_type);
      r.read("recurring", spec.recurring);
      r.read("sigmoid_spacing", spec.sigmoid_spacing);
      r.read("class_sep", spec.class_sep);
      try {
        spec.drift_type = parse_drift_type(drift_type);
      } catch (const ValidationError&) {
        throw ValidationError("stream.drift_type: unknown value '" + drift_type + "'");
      }
    } else if (source == "csv") {
      config.stream.source = StreamConfig::Source::kCsv;
      std::string path;
      std::string metadata;
      r.read("path", path);
      r.read("label_column", config.stream.label_column);
      r.read("metadata", metadata);
      config.stream.csv_path = path;
      if (!metadata.empty()) config.stream.metadata_path = metadata;
    } else {
      throw ValidationError("stream.source: unknown value '" + source + "'");
    }
    r.finish();
  }

  if (const json* e = root.child("ensemble")) {
    ObjectReader r(*e, "ensemble");
    std::string strategy = to_string(config.ensemble.strategy);
    r.read("strategy", strategy);
    r.read("capacity", config.ensemble.capacity);
    r.read("wae_age_decay", config.ensemble.wae_age_decay);
    r.read("candidate_folds", config.ensemble.candidate_folds);
    r.finish();
    config.ensemble.strategy = parse_ensemble_strategy(strategy);
  }

  if (const json* l = root.child("learner")) {
    ObjectReader r(*l, "learner");
    auto& spec = config.ensemble.learner;
    std::string kind = to_string(spec.kind);
    r.read("kind", kind);
    r.read("cart_max_depth", spec.cart_max_depth);
    r.read("cart_min_split", spec.cart_min_split);
    double floor = 0.0;
    r.read("nb_variance_floor", floor);
    if (floor != 0.0) spec.nb_variance_floor = floor;
    r.finish();
    spec.kind = parse_learner_kind(kind);
  }

  if (const json* s = root.child("scheduler")) {
    ObjectReader r(*s, "scheduler");
    r.read("base_chunk_size", config.scheduler.base_chunk_size);
    r.read("drift_chunk_size", config.scheduler.drift_chunk_size);
    r.read("alpha", config.scheduler.alpha);
    r.finish();
  }

  if (const json* d = root.child("detector")) {
    ObjectReader r(*d, "detector");
    r.read("fhddm_window", config.detector.fhddm_window);
    r.read("fhddm_delta", config.detector.fhddm_delta);
    r.read("vsdm_window", config.detector.vsdm_window);
    r.read("vsdm_threshold", config.detector.vsdm_threshold);
    r.read("stabilization_enabled", config.detector.stabilization_enabled);
    r.finish();
  }

  root.read("sr_thresholds", config.sr_thresholds);
  root.read("seeds", config.seeds);

  if (const json* mode = root.child("car_enabled")) {
    if (mode->is_boolean()) {
      config.car_enabled = mode->get<bool>() ? RunMode::kCar : RunMode::kBaseline;
    } else if (mode->is_string() && mode->get<std::string>() == "both") {
      config.car_enabled = RunMode::kBoth;
    } else {
      throw ValidationError("car_enabled: must be true, false or \"both\"");
    }
  }

  root.read("noise_fraction", config.noise_fraction);
  root.read("oversample", config.oversample);
  std::string out = config.output_dir.string();
  root.read("output_dir", out);
  config.output_dir = out;

  if (const json* s = root.child("sweep")) {
    ObjectReader r(*s, "sweep");
    SweepConfig sweep;
    r.read("vsdm_thresholds", sweep.vsdm_thresholds);
    r.read("axis", sweep.axis);
    r.read("values", sweep.values);
    r.finish();
    config.sweep = sweep;
  }
  root.finish();
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeError("cannot open config " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

json to_json(const ExperimentConfig& config) {
  json doc;
  doc["name"] = config.name;
  json stream;
  stream["name"] = config.stream.name;
  if (config.stream.source == StreamConfig::Source::kSynthetic) {
    const auto& spec = config.stream.synthetic;
    stream["source"] = "synthetic";
    stream["n_samples"] = spec.n_samples;
    stream["n_classes"] = spec.n_classes;
    stream["n_features"] = spec.n_features;
    stream["n_informative"] = spec.n_informative;
    stream["n_redundant"] = spec.n_redundant;
    stream["n_drifts"] = spec.n_drifts;
    stream["drift_type"] = to_string(spec.drift_type);
    stream["recurring"] = spec.recurring;
    stream["sigmoid_spacing"] = spec.sigmoid_spacing;
    stream["class_sep"] = spec.class_sep;
  } else {
    stream["source"] = "csv";
    stream["path"] = config.stream.csv_path.string();
    stream["label_column"] = config.stream.label_column;
    if (config.stream.metadata_path) stream["metadata"] = config.stream.metadata_path->string();
  }
  doc["stream"] = stream;
  doc["ensemble"] = {{"strategy", to_string(config.ensemble.strategy)},
                     {"capacity", config.ensemble.capacity},
                     {"wae_age_decay", config.ensemble.wae_age_decay},
                     {"candidate_folds", config.ensemble.candidate_folds}};
  const auto& learner = config.ensemble.learner;
  doc["learner"] = {{"kind", to_string(learner.kind)},
                    {"cart_max_depth", learner.cart_max_depth},
                    {"cart_min_split", learner.cart_min_split},
                    {"nb_variance_floor", learner.nb_variance_floor ? json(*learner.nb_variance_floor)
                                                                    : json(nullptr)}};
  doc["scheduler"] = {{"base_chunk_size", config.scheduler.base_chunk_size},
                      {"drift_chunk_size", config.scheduler.drift_chunk_size},
                      {"alpha", config.scheduler.alpha}};
  doc["detector"] = {{"fhddm_window", config.detector.fhddm_window},
                     {"fhddm_delta", config.detector.fhddm_delta},
                     {"vsdm_window", config.detector.vsdm_window},
                     {"vsdm_threshold", config.detector.vsdm_threshold},
                     {"stabilization_enabled", config.detector.stabilization_enabled}};
  doc["sr_thresholds"] = config.sr_thresholds;
  doc["seeds"] = config.seeds;
  switch (config.car_enabled) {
    case RunMode::kBaseline: doc["car_enabled"] = false; break;
    case RunMode::kCar: doc["car_enabled"] = true; break;
    case RunMode::kBoth: doc["car_enabled"] = "both"; break;
  }
  doc["noise_fraction"] = config.noise_fraction;
  doc["oversample"] = config.oversample;
  doc["output_dir"] = config.output_dir.string();
  if (config.sweep) {
    doc["sweep"] = {{"vsdm_thresholds", config.sweep->vsdm_thresholds},
                    {"axis", config.sweep->axis},
                    {"values", config.sweep->values}};
  }
  return doc;
}

std::vector<RunPlan> plan_runs(const ExperimentConfig& config) {
  std::vector<RunPlan> plans;
  for (std::uint64_t seed : config.seeds) {
    const std::string suffix = "-s" + std::to_string(seed);
    if (config.car_enabled != RunMode::kCar) {
      plans.push_back({config.name + "-baseline" + suffix, false, seed, config.scheduler,
                       config.detector, "", std::nullopt, std::nullopt});
    }
    if (config.car_enabled == RunMode::kBaseline) continue;
    if (!config.sweep) {
      plans.push_back({config.name + "-car" + suffix, true, seed, config.scheduler, config.detector,
                       "", std::nullopt, std::nullopt});
      continue;
    }
    for (double threshold : config.sweep->vsdm_thresholds) {
      for (std::size_t value : config.sweep->values) {
        RunPlan plan{"", true, seed, config.scheduler, config.detector, "", threshold, value};
        plan.detector.vsdm_threshold = threshold;
        if (config.sweep->axis == "vsdm_window") {
          plan.detector.vsdm_window = value;
        } else {
          plan.scheduler.drift_chunk_size = value;
        }
        plan.variant = "eps" + short_double(threshold) + "-" + config.sweep->axis + std::to_string(value);
        plan.run_id = config.name + "-car-" + plan.variant + suffix;
        plans.push_back(std::move(plan));
      }
    }
  }
  return plans;
}

std::unique_ptr<StreamSource> make_stream(const ExperimentConfig& config, std::uint64_t seed) {
  if (config.stream.source == StreamConfig::Source::kCsv) {
    return load_dataset_stream(config.stream.csv_path, config.stream.label_column,
                               config.stream.metadata_path);
  }
  SyntheticStreamSpec spec = config.stream.synthetic;
  spec.seed = seed;
  return generate_synthetic_stream(spec);
}

RunRecord execute_run(const ExperimentConfig& config, const RunPlan& plan) {
  auto stream = make_stream(config, plan.seed);
  EnsembleModel ensemble(config.ensemble);
  FhddmState fhddm(plan.detector.fhddm_window, plan.detector.fhddm_delta);
  StabilizationWindow vsdm(plan.detector.vsdm_window, plan.detector.vsdm_threshold);
  ChunkSizeScheduler scheduler(plan.scheduler);
  RunOptions options;
  options.car_enabled = plan.car;
  options.stabilization_enabled = plan.detector.stabilization_enabled;
  options.noise_fraction = config.noise_fraction;
  options.oversample = config.oversample;
  options.seed = plan.seed;
  RunRecord record = test_then_train_run(*stream, ensemble, fhddm, vsdm, scheduler, options);
  record.run_id = plan.run_id;
  record.config_snapshot = to_json(config).dump();
  return record;
}

void write_trace_csv(const RunRecord& record, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << "run_id,chunk_index,chunk_size,accuracy,drift_detected,stabilization_detected,"
         "cumulative_samples\n";
  for (const ChunkTrace& t : record.traces) {
    out << record.run_id << ',' << t.chunk_index << ',' << t.chunk_size << ','
        << format_double(t.accuracy) << ',' << (t.drift_detected ? 1 : 0) << ','
        << (t.stabilization_detected ? 1 : 0) << ',' << t.cumulative_samples << '\n';
  }
  if (!out) throw RuntimeError("failed writing " + path.string());
}

RunRecord read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeError("cannot open trace " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty trace file");
  RunRecord record;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cells[7];
    for (auto& cell : cells) std::getline(ss, cell, ',');
    try {
      ChunkTrace t;
      record.run_id = cells[0];
      t.chunk_index = std::stoull(cells[1]);
      t.chunk_size = std::stoull(cells[2]);
      t.accuracy = std::stod(cells[3]);
      t.drift_detected = cells[4] == "1";
      t.stabilization_detected = cells[5] == "1";
      t.cumulative_samples = std::stoull(cells[6]);
      record.traces.push_back(t);
    } catch (const std::exception&) {
      throw ValidationError(path.string() + ": malformed row " + std::to_string(line_no));
    }
  }
  return record;
}

void write_run_meta(const RunMeta& meta, const std::filesystem::path& path) {
  json doc;
  doc["run_id"] = meta.run_id;
  doc["stream"] = meta.stream;
  doc["strategy"] = meta.strategy;
  doc["learner"] = meta.learner;
  doc["mode"] = meta.car ? "car" : "baseline";
  doc["seed"] = meta.seed;
  doc["variant"] = meta.variant;
  doc["sweep_threshold"] = meta.sweep_threshold ? json(*meta.sweep_threshold) : json(nullptr);
  doc["sweep_axis"] = meta.sweep_axis;
  doc["sweep_value"] = meta.sweep_value ? json(*meta.sweep_value) : json(nullptr);
  doc["ground_truth_drifts"] = meta.ground_truth_drifts;
  doc["train_only_samples"] = meta.train_only_samples;
  doc["samples_consumed"] = meta.samples_consumed;
  doc["sr_thresholds"] = meta.sr_thresholds;
  doc["config"] = meta.config;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

RunMeta read_run_meta(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeError("cannot open " + path.string());
  try {
    json doc;
    in >> doc;
    RunMeta meta;
    meta.run_id = doc.at("run_id").get<std::string>();
    meta.stream = doc.at("stream").get<std::string>();
    meta.strategy = doc.at("strategy").get<std::string>();
    meta.learner = doc.at("learner").get<std::string>();
    meta.car = doc.at("mode").get<std::string>() == "car";
    meta.seed = doc.at("seed").get<std::uint64_t>();
    meta.variant = doc.value("variant", "");
    if (doc.contains("sweep_threshold") && !doc["sweep_threshold"].is_null()) {
      meta.sweep_threshold = doc["sweep_threshold"].get<double>();
    }
    meta.sweep_axis = doc.value("sweep_axis", "");
    if (doc.contains("sweep_value") && !doc["sweep_value"].is_null()) {
      meta.sweep_value = doc["sweep_value"].get<std::size_t>();
    }
    meta.ground_truth_drifts = doc.at("ground_truth_drifts").get<std::vector<std::size_t>>();
    meta.train_only_samples = doc.value("train_only_samples", std::size_t{0});
    meta.samples_consumed = doc.value("samples_consumed", std::size_t{0});
    meta.sr_thresholds = doc.at("sr_thresholds").get<std::vector<double>>();
    meta.config = doc.value("config", json::object());
    return meta;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

ExperimentResult run_experiment(const ExperimentConfig& config, std::size_t jobs) {
  config.validate();
  namespace fs = std::filesystem;
  const fs::path trace_dir = config.output_dir / "traces";
  std::error_code ec;
  fs::create_directories(trace_dir, ec);
  if (ec) throw RuntimeError("cannot create " + trace_dir.string() + ": " + ec.message());
  {
    std::ofstream out(config.output_dir / "config.json", std::ios::binary);
    if (!out) throw RuntimeError("cannot write config.json in " + config.output_dir.string());
    out << to_json(config).dump(2) << '\n';
  }

  const auto plans = plan_runs(config);
  ExperimentResult result;
  for (const RunPlan& plan : plans) result.trace_files.push_back(trace_dir / (plan.run_id + ".csv"));

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < plans.size(); i = next++) {
      try {
        const RunPlan& plan = plans[i];
        const RunRecord record = execute_run(config, plan);
        write_trace_csv(record, result.trace_files[i]);
        RunMeta meta;
        meta.run_id = plan.run_id;
        meta.stream = config.stream.name;
        meta.strategy = to_string(config.ensemble.strategy);
        meta.learner = to_string(config.ensemble.learner.kind);
        meta.car = plan.car;
        meta.seed = plan.seed;
        meta.variant = plan.variant;
        meta.sweep_threshold = plan.sweep_threshold;
        meta.sweep_axis = config.sweep ? config.sweep->axis : "";
        meta.sweep_value = plan.sweep_value;
        meta.ground_truth_drifts = record.ground_truth_drifts;
        meta.train_only_samples = record.train_only_samples;
        meta.samples_consumed = record.samples_consumed;
        meta.sr_thresholds = config.sr_thresholds;
        meta.config = to_json(config);
        write_run_meta(meta, trace_dir / (plan.run_id + ".meta.json"));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = plans.size();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, plans.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
  }
  if (failure) std::rethrow_exception(failure);

  const Report report = emit_report(trace_dir, config.car_enabled == RunMode::kBoth);
  result.summary_text = config.output_dir / "summary.txt";
  result.summary_json = config.output_dir / "summary.json";
  write_report(report, result.summary_text);
  write_report(report, result.summary_json);
  return result;
}

namespace {

struct LoadedRun {
  RunMeta meta;
  RunRecord record;
};

struct SrSamples {
  std::vector<double> baseline;
  std::vector<double> car;
  std::size_t pairs = 0;
};

std::pair<double, double> mean_std(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

ReportRow make_row(const std::string& stream, const std::string& model, const std::string& variant,
                   double p, const SrSamples& samples) {
  ReportRow row;
  row.stream = stream;
  row.model = model;
  row.variant = variant;
  row.p = p;
  row.n_pairs = samples.pairs;
  std::tie(row.baseline_mean, row.baseline_std) = mean_std(samples.baseline);
  std::tie(row.car_mean, row.car_std) = mean_std(samples.car);
  if (samples.pairs == 0) {
    row.wilcoxon_error = "no paired drift segments";
    return row;
  }
  try {
    row.wilcoxon = wilcoxon_one_sided_signed_rank(
        std::span(samples.car.data(), samples.pairs), std::span(samples.baseline.data(), samples.pairs));
  } catch (const ValidationError& e) {
    row.wilcoxon_error = e.what();
  }
  return row;
}

}  // namespace

Report emit_report(const std::filesystem::path& trace_dir, bool require_pairs) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(trace_dir)) throw RuntimeError("trace directory not found: " + trace_dir.string());

  std::vector<fs::path> meta_files;
  for (const auto& entry : fs::directory_iterator(trace_dir)) {
    const std::string fname = entry.path().filename().string();
    if (fname.size() > 10 && fname.ends_with(".meta.json")) meta_files.push_back(entry.path());
  }
  std::sort(meta_files.begin(), meta_files.end());
  if (meta_files.empty()) throw ValidationError("no runs found in " + trace_dir.string());

  std::vector<LoadedRun> runs;
  for (const fs::path& mf : meta_files) {
    LoadedRun run;
    run.meta = read_run_meta(mf);
    const fs::path csv = trace_dir / (run.meta.run_id + ".csv");
    if (!fs::exists(csv)) throw ValidationError("missing trace file " + csv.string());
    run.record = read_trace_csv(csv);
    run.record.run_id = run.meta.run_id;
    run.record.seed = run.meta.seed;
    run.record.ground_truth_drifts = run.meta.ground_truth_drifts;
    run.record.train_only_samples = run.meta.train_only_samples;
    run.record.samples_consumed = run.meta.samples_consumed;
    runs.push_back(std::move(run));
  }
  const std::vector<double> thresholds = runs.front().meta.sr_thresholds;

  // Baselines are shared by every CAR variant on the same stream, model and seed.
  using BaseKey = std::tuple<std::string, std::string, std::uint64_t>;
  std::map<BaseKey, const LoadedRun*> baselines;
  for (const LoadedRun& run : runs) {
    if (run.meta.car) continue;
    const BaseKey key{run.meta.stream, model_name(run.meta.strategy, run.meta.learner), run.meta.seed};
    if (!baselines.emplace(key, &run).second) {
      throw ValidationError("duplicate baseline run " + run.meta.run_id);
    }
  }

  using CellKey = std::tuple<std::string, std::string, std::string>;  // stream, model, variant
  std::map<CellKey, std::vector<SrSamples>> per_stream;                 // indexed by threshold
  std::map<std::pair<std::string, std::string>, std::vector<SrSamples>> per_model;
  std::map<std::pair<double, std::size_t>, std::vector<double>> grid_values;
  std::string grid_axis;
  std::set<const LoadedRun*> used_baselines;
  std::vector<std::string> missing;

  const auto cell = [&](auto& map, const auto& key) -> std::vector<SrSamples>& {
    auto& slot = map[key];
    if (slot.empty()) slot.resize(thresholds.size());
    return slot;
  };
  const std::size_t grid_p = [&] {
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      if (std::abs(thresholds[i] - 0.8) < 1e-12) return i;
    }
    return std::size_t{0};
  }();

  for (const LoadedRun& run : runs) {
    if (!run.meta.car) continue;
    const std::string model = model_name(run.meta.strategy, run.meta.learner);
    auto& stream_cells = cell(per_stream, CellKey{run.meta.stream, model, run.meta.variant});
    auto& model_cells = cell(per_model, std::pair{model, run.meta.variant});
    const auto it = baselines.find(BaseKey{run.meta.stream, model, run.meta.seed});

    if (it == baselines.end()) {
      missing.push_back("baseline for " + run.meta.run_id);
      for (std::size_t k = 0; k < thresholds.size(); ++k) {
        for (const SrEntry& e : sample_restoration_report(run.record, thresholds[k]).entries) {
          stream_cells[k].car.push_back(static_cast<double>(e.sr_value));
          model_cells[k].car.push_back(static_cast<double>(e.sr_value));
        }
      }
      continue;
    }
    const LoadedRun& base = *it->second;
    used_baselines.insert(&base);
    const auto car_segments = drift_aligned_segments(run.record);
    const auto base_segments = drift_aligned_segments(base.record);
    const std::size_t slots = std::min(car_segments.size(), base_segments.size());
    for (std::size_t d = 0; d < slots; ++d) {
      if (!car_segments[d] || !base_segments[d]) continue;
      for (std::size_t k = 0; k < thresholds.size(); ++k) {
        const double car_sr =
            static_cast<double>(sample_restoration_for(run.record, *car_segments[d], thresholds[k]).sr_value);
        const double base_sr = static_cast<double>(
            sample_restoration_for(base.record, *base_segments[d], thresholds[k]).sr_value);
        for (auto* samples : {&stream_cells[k], &model_cells[k]}) {
          samples->car.push_back(car_sr);
          samples->baseline.push_back(base_sr);
          ++samples->pairs;
        }
        if (k == grid_p && run.meta.sweep_threshold && run.meta.sweep_value) {
          grid_values[{*run.meta.sweep_threshold, *run.meta.sweep_value}].push_back(car_sr);
          grid_axis = run.meta.sweep_axis;
        }
      }
    }
  }
  for (const auto& [key, run] : baselines) {
    if (used_baselines.count(run)) continue;
    missing.push_back("CAR run for " + run->meta.run_id);
    const std::string model = model_name(run->meta.strategy, run->meta.learner);
    auto& stream_cells = cell(per_stream, CellKey{run->meta.stream, model, ""});
    auto& model_cells = cell(per_model, std::pair{model, std::string()});
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      for (const SrEntry& e : sample_restoration_report(run->record, thresholds[k]).entries) {
        stream_cells[k].baseline.push_back(static_cast<double>(e.sr_value));
        model_cells[k].baseline.push_back(static_cast<double>(e.sr_value));
      }
    }
  }
  if (require_pairs && !missing.empty()) {
    std::string msg = "unpaired runs:";
    for (const auto& m : missing) msg += "\n  missing " + m;
    throw ValidationError(msg);
  }

  Report report;
  for (const auto& [key, cells] : per_stream) {
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      report.per_stream.push_back(
          make_row(std::get<0>(key), std::get<1>(key), std::get<2>(key), thresholds[k], cells[k]));
    }
  }
  for (const auto& [key, cells] : per_model) {
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      report.per_model.push_back(make_row("*", key.first, key.second, thresholds[k], cells[k]));
    }
  }
  if (!grid_values.empty()) {
    GridReport grid;
    grid.axis = grid_axis;
    grid.p = thresholds[grid_p];
    std::set<double, std::greater<>> ts;
    std::set<std::size_t> vs;
    for (const auto& [key, values] : grid_values) {
      ts.insert(key.first);
      vs.insert(key.second);
    }
    grid.thresholds.assign(ts.begin(), ts.end());
    grid.values.assign(vs.begin(), vs.end());
    for (double t : grid.thresholds) {
      auto& row = grid.mean_car_sr.emplace_back();
      for (std::size_t v : grid.values) {
        const auto it = grid_values.find({t, v});
        if (it == grid_values.end() || it->second.empty()) {
          row.emplace_back(std::nullopt);
        } else {
          row.emplace_back(mean_std(it->second).first);
        }
      }
    }
    report.grid = std::move(grid);
  }
  return report;
}

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

std::string wilcoxon_cells(const ReportRow& row) {
  if (!row.wilcoxon) return pad("-", 10) + pad("(" + row.wilcoxon_error + ")", 12);
  return pad(fmt("%.1f", row.wilcoxon->statistic), 10) + pad(fmt("%.4g", row.wilcoxon->p_value), 12);
}

}  // namespace

std::string format_report_text(const Report& report) {
  std::ostringstream out;
  out << "Sample Restoration: CAR vs baseline over paired drift segments\n";
  out << "One-sided Wilcoxon signed-rank, H1: CAR needs fewer samples than baseline\n\n";

  out << "Per stream and model\n";
  out << pad("stream", 18) << pad("model", 18) << pad("variant", 34) << pad("SR(p)", 8)
      << pad("pairs", 7) << pad("baseline", 22) << pad("CAR", 22) << pad("statistic", 10)
      << pad("p-value", 12) << '\n';
  for (const ReportRow& row : report.per_stream) {
    out << pad(row.stream, 18) << pad(row.model, 18) << pad(row.variant.empty() ? "-" : row.variant, 34)
        << pad(fmt("%.2f", row.p), 8) << pad(std::to_string(row.n_pairs), 7)
        << pad(fmt("%.2f", row.baseline_mean) + " +/- " + fmt("%.2f", row.baseline_std), 22)
        << pad(fmt("%.2f", row.car_mean) + " +/- " + fmt("%.2f", row.car_std), 22)
        << wilcoxon_cells(row) << '\n';
  }

  out << "\nWilcoxon test results (pooled over streams)\n";
  std::vector<double> ps;
  for (const ReportRow& row : report.per_model) {
    if (std::find(ps.begin(), ps.end(), row.p) == ps.end()) ps.push_back(row.p);
  }
  out << pad("model", 18) << pad("variant", 34);
  for (double p : ps) out << pad("SR(" + fmt("%.2g", p) + ") stat", 10) << pad("p-value", 12);
  out << '\n';
  for (std::size_t i = 0; i < report.per_model.size(); i += ps.size()) {
    const ReportRow& first = report.per_model[i];
    out << pad(first.model, 18) << pad(first.variant.empty() ? "-" : first.variant, 34);
    for (std::size_t k = 0; k < ps.size() && i + k < report.per_model.size(); ++k) {
      out << wilcoxon_cells(report.per_model[i + k]);
    }
    out << '\n';
  }

  if (report.grid) {
    const GridReport& g = *report.grid;
    out << "\nMean CAR SR(" << fmt("%.2g", g.p) << ") by stabilization threshold x " << g.axis << '\n';
    out << pad("threshold", 12);
    for (std::size_t v : g.values) out << pad(std::to_string(v), 14);
    out << '\n';
    for (std::size_t t = 0; t < g.thresholds.size(); ++t) {
      out << pad(fmt("%g", g.thresholds[t]), 12);
      for (const auto& cell : g.mean_car_sr[t]) out << pad(cell ? fmt("%.2f", *cell) : "-", 14);
      out << '\n';
    }
  }
  return out.str();
}

json report_to_json(const Report& report) {
  const auto row_json = [](const ReportRow& row) {
    json j = {{"stream", row.stream},
              {"model", row.model},
              {"variant", row.variant},
              {"p", row.p},
              {"pairs", row.n_pairs},
              {"baseline_mean", row.baseline_mean},
              {"baseline_std", row.baseline_std},
              {"car_mean", row.car_mean},
              {"car_std", row.car_std}};
    if (row.wilcoxon) {
      j["wilcoxon"] = {{"statistic", row.wilcoxon->statistic},
                       {"p_value", row.wilcoxon->p_value},
                       {"n", row.wilcoxon->n},
                       {"exact", row.wilcoxon->exact}};
    } else {
      j["wilcoxon"] = {{"error", row.wilcoxon_error}};
    }
    return j;
  };
  json doc;
  doc["per_stream"] = json::array();
  for (const auto& row : report.per_stream) doc["per_stream"].push_back(row_json(row));
  doc["per_model"] = json::array();
  for (const auto& row : report.per_model) doc["per_model"].push_back(row_json(row));
  if (report.grid) {
    json grid = {{"axis", report.grid->axis},
                 {"p", report.grid->p},
                 {"thresholds", report.grid->thresholds},
                 {"values", report.grid->values}};
    json cells = json::array();
    for (const auto& row : report.grid->mean_car_sr) {
      json r = json::array();
      for (const auto& c : row) r.push_back(c ? json(*c) : json(nullptr));
      cells.push_back(r);
    }
    grid["mean_car_sr"] = cells;
    doc["grid"] = grid;
  }
  return doc;
}

void write_report(const Report& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  if (path.extension() == ".json") {
    out << report_to_json(report).dump(2) << '\n';
  } else {
    out << format_report_text(report);
  }
  if (!out) throw RuntimeError("failed writing " + path.string());
}

}  // namespace car
