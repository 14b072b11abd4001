#include "car/experiment.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "car/error.hpp"
#include "test_support.hpp"

namespace car {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json small_config(const fs::path& out, const std::string& name = "tiny") {
  return json{{"name", name},
              {"stream", {{"source", "synthetic"}, {"name", "syn"}, {"n_samples", 24000}, {"n_drifts", 2}}},
              {"seeds", {1, 2, 3}},
              {"output_dir", out.string()}};
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  out << doc.dump(2);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CAR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Config, DefaultsWhenKeysMissing) {
  const ExperimentConfig c = parse_config(json::object());
  EXPECT_EQ(c.scheduler.base_chunk_size, 1000u);
  EXPECT_EQ(c.scheduler.drift_chunk_size, 30u);
  EXPECT_EQ(c.scheduler.alpha, 1.1);
  EXPECT_EQ(c.detector.fhddm_window, 1000u);
  EXPECT_EQ(c.detector.fhddm_delta, 1e-6);
  EXPECT_EQ(c.detector.vsdm_window, 30u);
  EXPECT_EQ(c.detector.vsdm_threshold, 1e-4);
  EXPECT_EQ(c.ensemble.capacity, 10u);
  EXPECT_EQ(c.sr_thresholds, (std::vector<double>{0.9, 0.8, 0.7}));
  EXPECT_EQ(c.car_enabled, RunMode::kBoth);
}

TEST(Config, RejectsUnknownValuesAndKeys) {
  const auto expect_error = [](const json& doc, const std::string& needle) {
    try {
      parse_config(doc);
      FAIL() << "accepted " << doc.dump();
    } catch (const ValidationError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_error({{"ensemble", {{"strategy", "foo"}}}}, "strategy");
  expect_error({{"learner", {{"kind", "svm"}}}}, "kind");
  expect_error({{"scheduler", {{"alpha", 1.0}}}}, "alpha");
  expect_error({{"scheduler", {{"chunk", 5}}}}, "scheduler.chunk");
  expect_error({{"typo", 1}}, "typo");
  expect_error({{"scheduler", {{"base_chunk_size", -5}}}}, "base_chunk_size");
  expect_error({{"car_enabled", "sometimes"}}, "car_enabled");
  expect_error({{"stream", {{"source", "kafka"}}}}, "source");
  expect_error({{"stream", {{"drift_type", "sideways"}}}}, "drift_type");
}

TEST(Config, JsonRoundTrip) {
  json doc = small_config("/tmp/x");
  doc["ensemble"] = {{"strategy", "wae"}, {"capacity", 7}};
  doc["learner"] = {{"kind", "cart"}, {"cart_max_depth", 5}};
  doc["sweep"] = {{"vsdm_thresholds", {1e-3, 1e-4}}, {"axis", "drift_chunk_size"}, {"values", {30, 100}}};
  doc["noise_fraction"] = 0.1;
  const ExperimentConfig a = parse_config(doc);
  const json dumped = to_json(a);
  const ExperimentConfig b = parse_config(dumped);
  EXPECT_EQ(to_json(b), dumped);
  EXPECT_EQ(b.ensemble.strategy, EnsembleStrategy::kWae);
  EXPECT_EQ(b.ensemble.learner.cart_max_depth, 5);
  ASSERT_TRUE(b.sweep);
  EXPECT_EQ(b.sweep->values, (std::vector<std::size_t>{30, 100}));
}

TEST(Plan, BaselineAndCarPerSeed) {
  ExperimentConfig c = parse_config(small_config("/tmp/x"));
  const auto plans = plan_runs(c);
  ASSERT_EQ(plans.size(), 6u);
  EXPECT_EQ(plans[0].run_id, "tiny-baseline-s1");
  EXPECT_FALSE(plans[0].car);
  EXPECT_EQ(plans[1].run_id, "tiny-car-s1");
  EXPECT_TRUE(plans[1].car);

  c.sweep = SweepConfig{{1e-3, 1e-4}, "vsdm_window", {10, 30}};
  const auto swept = plan_runs(c);
  EXPECT_EQ(swept.size(), 3u * (1 + 4));
  EXPECT_EQ(swept[1].detector.vsdm_threshold, 1e-3);
  EXPECT_EQ(swept[1].detector.vsdm_window, 10u);
}

TEST(Experiment, TracesRoundTripAndMatchInMemoryRun) {
  const fs::path dir = test::scratch_dir("exp_roundtrip");
  const ExperimentConfig config = parse_config(small_config(dir / "out"));
  const auto result = run_experiment(config, 2);
  ASSERT_EQ(result.trace_files.size(), 6u);
  EXPECT_TRUE(fs::exists(result.summary_text));
  EXPECT_TRUE(fs::exists(result.summary_json));
  EXPECT_TRUE(fs::exists(dir / "out" / "config.json"));

  const auto plans = plan_runs(config);
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const RunRecord in_memory = execute_run(config, plans[i]);
    const RunRecord on_disk = read_trace_csv(result.trace_files[i]);
    EXPECT_EQ(on_disk.run_id, plans[i].run_id);
    EXPECT_EQ(on_disk.traces, in_memory.traces);
    const RunMeta meta = read_run_meta(dir / "out" / "traces" / (plans[i].run_id + ".meta.json"));
    EXPECT_EQ(meta.car, plans[i].car);
    EXPECT_EQ(meta.ground_truth_drifts, (std::vector<std::size_t>{8000, 16000}));
    // The embedded config reproduces the run.
    const RunRecord replay = execute_run(parse_config(meta.config), plans[i]);
    EXPECT_EQ(replay.traces, in_memory.traces);
  }
}

TEST(Experiment, ReportPairsRunsAndAppliesWilcoxon) {
  const fs::path dir = test::scratch_dir("exp_report");
  run_experiment(parse_config(small_config(dir / "out")), 1);
  const Report report = emit_report(dir / "out" / "traces");
  ASSERT_EQ(report.per_stream.size(), 3u);
  const ReportRow& row = report.per_stream[1];
  EXPECT_EQ(row.stream, "syn");
  EXPECT_EQ(row.model, "sea+gaussian_nb");
  EXPECT_EQ(row.p, 0.8);
  EXPECT_EQ(row.n_pairs, 6u);
  ASSERT_TRUE(row.wilcoxon) << row.wilcoxon_error;
  EXPECT_LT(row.car_mean, row.baseline_mean);

  const json j = report_to_json(report);
  EXPECT_EQ(j["per_stream"].size(), 3u);
  const std::string text = format_report_text(report);
  EXPECT_NE(text.find("sea+gaussian_nb"), std::string::npos);
}

TEST(Experiment, ReportRejectsUnpairedTraces) {
  const fs::path dir = test::scratch_dir("exp_unpaired");
  json doc = small_config(dir / "out");
  doc["car_enabled"] = false;
  run_experiment(parse_config(doc), 1);
  try {
    emit_report(dir / "out" / "traces");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("tiny-baseline-s1"), std::string::npos) << e.what();
  }
  EXPECT_NO_THROW(emit_report(dir / "out" / "traces", false));
}

TEST(Experiment, SweepProducesGrid) {
  const fs::path dir = test::scratch_dir("exp_sweep");
  json doc = small_config(dir / "out");
  doc["sweep"] = {{"vsdm_thresholds", {1e-3, 1e-4}}, {"axis", "drift_chunk_size"}, {"values", {30, 100}}};
  run_experiment(parse_config(doc), 2);
  const Report report = emit_report(dir / "out" / "traces");
  ASSERT_TRUE(report.grid);
  EXPECT_EQ(report.grid->axis, "drift_chunk_size");
  EXPECT_EQ(report.grid->thresholds, (std::vector<double>{1e-3, 1e-4}));
  EXPECT_EQ(report.grid->values, (std::vector<std::size_t>{30, 100}));
  for (const auto& row : report.grid->mean_car_sr) {
    for (const auto& v : row) EXPECT_TRUE(v.has_value());
  }
}

TEST(Cli, RunWritesOutputsAndIsReproducible) {
  const fs::path dir = test::scratch_dir("cli_run");
  write_json(dir / "c.json", small_config(dir / "a"));
  ASSERT_EQ(run_cli("run --config " + (dir / "c.json").string()), 0);
  ASSERT_EQ(run_cli("run --config " + (dir / "c.json").string() + " --out " + (dir / "b").string()), 0);
  for (const auto& entry : fs::directory_iterator(dir / "a" / "traces")) {
    if (entry.path().extension() != ".csv") continue;
    const fs::path twin = dir / "b" / "traces" / entry.path().filename();
    EXPECT_EQ(test::read_file(entry.path()), test::read_file(twin)) << entry.path();
  }
  EXPECT_EQ(test::read_file(dir / "a" / "summary.txt"), test::read_file(dir / "b" / "summary.txt"));

  ASSERT_EQ(run_cli("report --traces " + (dir / "a" / "traces").string() + " --out " +
                    (dir / "r.json").string()),
            0);
  std::ifstream in(dir / "r.json");
  const json report = json::parse(in);
  EXPECT_TRUE(report.contains("per_stream"));
}

TEST(Cli, ExitCodes) {
  const fs::path dir = test::scratch_dir("cli_codes");
  json bad = small_config(dir / "out");
  bad["ensemble"] = {{"strategy", "foo"}};
  write_json(dir / "bad.json", bad);
  EXPECT_EQ(run_cli("run --config " + (dir / "bad.json").string()), 1);
  EXPECT_EQ(run_cli("run"), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("run --config " + (dir / "missing.json").string()), 2);
  EXPECT_FALSE(fs::exists(dir / "out"));

  json base_only = small_config(dir / "unpaired");
  base_only["car_enabled"] = false;
  write_json(dir / "base.json", base_only);
  ASSERT_EQ(run_cli("run --config " + (dir / "base.json").string()), 0);
  EXPECT_EQ(run_cli("report --traces " + (dir / "unpaired" / "traces").string() + " --out " +
                    (dir / "r.txt").string()),
            1);
}

TEST(Cli, GenerateFeedsCsvSource) {
  const fs::path dir = test::scratch_dir("cli_generate");
  write_json(dir / "c.json", small_config(dir / "unused"));
  ASSERT_EQ(run_cli("generate --config " + (dir / "c.json").string() + " --seed 5 --out " +
                    (dir / "s.csv").string()),
            0);
  auto loaded = load_dataset_stream(dir / "s.csv", "class", dir / "s.csv.drifts.json");
  EXPECT_EQ(loaded->n_samples(), 24000u);
  EXPECT_EQ(loaded->ground_truth_drifts(), (std::vector<std::size_t>{8000, 16000}));

  SyntheticStreamSpec spec = parse_config(small_config("/tmp/x")).stream.synthetic;
  spec.seed = 5;
  auto original = generate_synthetic_stream(spec);
  const auto a = original->next_chunk(500);
  const auto b = loaded->next_chunk(500);
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->samples, b->samples);  // %.17g round-trips doubles exactly
}

}  // namespace
}  // namespace car
