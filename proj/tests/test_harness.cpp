#include "cbai/harness.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace cbai;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const fs::path p = fs::temp_directory_path() / "cbai_harness_test";
  fs::create_directories(p);
  return p;
}

std::string write_text(const std::string& leaf, const std::string& text) {
  const fs::path p = scratch_dir() / leaf;
  std::ofstream(p) << text;
  return p.string();
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json small_config() {
  return nlohmann::json::parse(R"({
    "name": "small",
    "instance": {"family": "irrelevant-dimensions", "d": 4, "eps": 0.2},
    "algorithms": ["acol", {"name": "g-acol-tuned", "label": "tuned"}],
    "seeds": [2, 0, 1]
  })");
}

std::string config_error(const nlohmann::json& j) {
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string csv_of(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  write_results_csv(out, rows);
  return out.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CBAI_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Independent nearest-rank percentile: smallest value with at least p% of the sample at or below it.
double percentile_oracle(const std::vector<double>& values, double p) {
  for (double candidate : values) {
    std::size_t at_or_below = 0;
    for (double v : values) at_or_below += v <= candidate;
    std::size_t below = 0;
    for (double v : values) below += v < candidate;
    const double n = static_cast<double>(values.size());
    if (100.0 * static_cast<double>(at_or_below) >= p * n - 1e-9 && 100.0 * static_cast<double>(below) < p * n - 1e-9)
      return candidate;
  }
  return std::nan("");
}

struct ThreadsEnv {
  explicit ThreadsEnv(const char* value) { setenv("CBAI_THREADS", value, 1); }
  ~ThreadsEnv() { unsetenv("CBAI_THREADS"); }
};

}  // namespace

TEST(Registry, KnownNamesParse) {
  for (const std::string& n : algorithm_names()) EXPECT_NO_THROW(parse_algorithm(n)) << n;
  EXPECT_EQ(parse_algorithm("maxrew-f-tuned").select, Selection::maxrew_feasible);
  EXPECT_EQ(parse_algorithm("maxrew-f-tuned").bounds, BoundsMode::tuned);
  EXPECT_EQ(parse_algorithm("oracle").flavor, RoundFlavor::oracle_design);
  EXPECT_THROW(parse_algorithm("simplex"), ConfigError);
  EXPECT_THROW(parse_algorithm("acol-tuned"), ConfigError);
}

TEST(Config, ParsesSeedsAndDefaults) {
  const ExperimentConfig c = config_from_json(small_config());
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{2, 0, 1}));
  EXPECT_EQ(c.algorithms[1].display(), "tuned");
  EXPECT_EQ(c.algorithms[0].delta, 0.05);
  nlohmann::json j = small_config();
  j["seeds"] = {{"start", 5}, {"count", 3}};
  EXPECT_EQ(config_from_json(j).seeds, (std::vector<std::uint64_t>{5, 6, 7}));
}

TEST(Config, ErrorsNameTheField) {
  nlohmann::json j = small_config();
  j["algorithms"][1]["delta"] = 1.5;
  EXPECT_NE(config_error(j).find("algorithms[1].delta"), std::string::npos);

  j = small_config();
  j["algorithms"][1]["betta"] = 1.0;
  EXPECT_NE(config_error(j).find("unknown key \"betta\""), std::string::npos);

  j = small_config();
  j["algorithms"][1]["name"] = "simplex";
  EXPECT_NE(config_error(j).find("algorithms[1].name"), std::string::npos);

  j = small_config();
  j["seeds"] = nlohmann::json::array();
  EXPECT_NE(config_error(j).find("seeds"), std::string::npos);

  j = small_config();
  j["algorithms"] = nlohmann::json::array();
  EXPECT_NE(config_error(j).find("algorithms"), std::string::npos);

  j = small_config();
  j["instance"]["family"] = "torus";
  EXPECT_NE(config_error(j).find("family"), std::string::npos);

  j = small_config();
  j["instance"]["d"] = -3;
  EXPECT_NE(config_error(j).find("instance.d"), std::string::npos);

  j = small_config();
  j["algorithms"][0] = {{"name", "acol"}, {"label", "tuned"}};
  EXPECT_NE(config_error(j).find("duplicate"), std::string::npos);
}

TEST(Config, UnreadableFileIsConfigError) {
  EXPECT_THROW(load_config((scratch_dir() / "missing.json").string()), ConfigError);
  EXPECT_THROW(load_config(write_text("bad.json", "{ not json")), ConfigError);
}

TEST(Experiment, OneRowPerAlgorithmAndSeedSorted) {
  const auto rows = run_experiment(config_from_json(small_config()));
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_TRUE(std::is_sorted(rows.begin(), rows.end(), row_less));
  EXPECT_EQ(rows[0].algorithm, "acol");
  EXPECT_EQ(rows[0].seed, 0u);
  for (const ResultRow& r : rows) {
    EXPECT_TRUE(r.correct);
    EXPECT_EQ(r.optimum, 3u);
  }
}

TEST(Experiment, RerunIsByteIdenticalAcrossThreadCounts) {
  nlohmann::json j = small_config();
  j["instances"] = {{{"family", "unit-sphere"}, {"d", 3}, {"n", 8}}, {{"family", "line-1d"}}};
  j.erase("instance");
  j["algorithms"] = {"uniform", "g-acol-tuned", "maxrew-u-tuned"};
  ExperimentConfig c = config_from_json(j);
  const std::string one = csv_of(run_experiment(c));
  c.threads = 3;
  EXPECT_EQ(csv_of(run_experiment(c)), one);
  {
    ThreadsEnv env("2");
    EXPECT_EQ(csv_of(run_experiment(c)), one);
  }
  EXPECT_EQ(one.substr(0, one.find('\n')), kResultHeader);
}

TEST(Experiment, SeedsChangeResultsButNotInstances) {
  // per-seed sphere instances are named by seed; a fixed seed pins one instance
  nlohmann::json j = small_config();
  j["instance"] = {{"family", "unit-sphere"}, {"d", 3}, {"n", 6}, {"seed", 4}};
  const auto rows = run_experiment(config_from_json(j));
  for (const ResultRow& r : rows) EXPECT_EQ(r.instance, rows[0].instance);
}

TEST(Threads, EnvironmentOverride) {
  EXPECT_EQ(resolve_threads(3), 3u);
  {
    ThreadsEnv env("5");
    EXPECT_EQ(resolve_threads(3), 5u);
  }
  {
    ThreadsEnv env("zero");
    EXPECT_THROW(resolve_threads(1), ConfigError);
  }
}

TEST(Csv, SeventeenDigitsAndQuoting) {
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
}

TEST(Summary, MedianOfThree) {
  EXPECT_EQ(percentile_nearest_rank({3, 1, 2}, 50), 2.0);
  EXPECT_EQ(percentile_nearest_rank({4, 1, 3, 2}, 50), 2.0);
  EXPECT_EQ(percentile_nearest_rank({5}, 25), 5.0);
  EXPECT_THROW(percentile_nearest_rank({}, 50), std::invalid_argument);
  EXPECT_THROW(percentile_nearest_rank({1}, 0), std::invalid_argument);
}

TEST(Summary, MatchesIndependentPercentiles) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    std::vector<double> values(n);
    for (double& v : values) v = static_cast<double>(rng() % 25);  // plenty of ties
    for (double p : {25.0, 50.0, 75.0, 90.0, 100.0})
      EXPECT_EQ(percentile_nearest_rank(values, p), percentile_oracle(values, p)) << "trial " << trial << " p " << p;
  }
}

TEST(Summary, RatesAndGrouping) {
  std::vector<ResultRow> rows;
  for (std::uint64_t s = 0; s < 4; ++s) {
    ResultRow r;
    r.experiment = "e";
    r.algorithm = s < 3 ? "a" : "b";
    r.seed = s;
    r.queries = 10 * (s + 1);
    r.correct = true;
    r.stopped_reason = s == 0 ? StopReason::exhausted_budget : StopReason::certified;
    rows.push_back(r);
  }
  const auto summary = summarize(rows);
  ASSERT_EQ(summary.size(), 2u);
  EXPECT_EQ(summary[0].runs, 3u);
  EXPECT_EQ(summary[0].median, 20.0);
  EXPECT_EQ(summary[0].p25, 10.0);
  EXPECT_EQ(summary[0].p75, 30.0);
  EXPECT_EQ(summary[0].correct_rate, 1.0);
  EXPECT_NEAR(summary[0].certified_rate, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(median_of(summary, "b"), 40.0);
  EXPECT_TRUE(std::isnan(median_of(summary, "c")));
  EXPECT_THROW(summarize({}), std::invalid_argument);
}

TEST(Diagnostics, TightInstanceCollapsesTheChain) {
  // only e_1 is feasible, so every arm is in the superlevel set and all three quantities equal 3 / 0.5^2
  const CbaiInstance inst = validate_instance(
      RawInstance{"tight", {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {1, 2, 3}, {0.5, 1.5, 1.5}, 1.0, 0.0});
  const Diagnostics dg = diagnostics(inst);
  EXPECT_NEAR(dg.hclb, 12.0, 12.0 * 1e-3);
  EXPECT_NEAR(dg.hclb_bar, 12.0, 12.0 * 1e-3);
  EXPECT_NEAR(dg.worst_case, 12.0, 1e-12);
  EXPECT_EQ(dg.superlevel, 3u);
}

TEST(Diagnostics, IrrelevantDimensionsChain) {
  const Diagnostics dg = diagnostics(gen_irrelevant_dimensions(3, 0.1));
  EXPECT_LE(dg.hclb, dg.hclb_bar * (1 + kDiagnosticsTolerance));
  EXPECT_LE(dg.hclb_bar, dg.worst_case * (1 + kDiagnosticsTolerance));
  EXPECT_NEAR(dg.worst_case, 300.0, 1e-9);
  EXPECT_EQ(dg.superlevel, 2u);
  EXPECT_TRUE(dg.converged);
}

TEST(Diagnostics, SingleArmClosedForm) {
  const Diagnostics dg = diagnostics(validate_instance(RawInstance{"one", {{2.0}}, {1.0}, {1.0}, 2.5, 0.0}));
  EXPECT_NEAR(dg.hclb_bar, 1.0 / 0.25, 1e-9);  // 1 / C^2 with C = 0.5
  EXPECT_NEAR(dg.hclb, dg.hclb_bar, 1e-9);
}

TEST(Diagnostics, BoundaryArmRejected) {
  EXPECT_THROW(diagnostics(validate_instance(RawInstance{"edge", {{1.0}, {0.5}}, {1.0}, {1.0}, 1.0, 0.0})),
               std::domain_error);
}

TEST(Presets, AllValidate) {
  for (const std::string& id : preset_names()) {
    if (id == "fig4") continue;
    EXPECT_NO_THROW(preset(id).validate()) << id;
  }
  EXPECT_THROW(preset("fig9"), ConfigError);
  EXPECT_EQ(preset("fig2a").seeds.size(), 30u);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch_dir();
  const std::string inst = (dir / "line.json").string();
  EXPECT_EQ(run_cli("gen --family line-1d --out " + inst), 0);
  EXPECT_TRUE(fs::exists(inst));
  EXPECT_EQ(run_cli("diag --instance " + inst), 0);
  EXPECT_EQ(run_cli("gen --family moebius --out " + inst), 2);
  EXPECT_EQ(run_cli("gen --family irrelevant-dimensions --eps 2 --out " + (dir / "x.json").string()), 2);
  EXPECT_EQ(run_cli("run"), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("run --config " + (dir / "nope.json").string()), 2);
  EXPECT_EQ(run_cli("sweep --preset fig9 --out " + dir.string()), 2);
  EXPECT_EQ(run_cli("driver-gen --scenario highway --k 10 --seed 0 --out " + (dir / "d.json").string()), 2);

  // invalid instance document -> 2; instance with an arm on the boundary -> runtime failure 3
  EXPECT_EQ(run_cli("diag --instance " + write_text("nofeas.json", R"({"name": "x", "dimension": 1, "arms": [[2.0]],
      "reward": [1.0], "constraint": [1.0], "threshold": 1.0, "noise_sigma": 0.0})")), 2);
  EXPECT_EQ(run_cli("diag --instance " + write_text("edge.json", R"({"name": "x", "dimension": 1, "arms": [[1.0], [0.5]],
      "reward": [1.0], "constraint": [1.0], "threshold": 1.0, "noise_sigma": 0.0})")), 3);
}

TEST(Cli, RunWritesDeterministicCsv) {
  const fs::path dir = scratch_dir();
  nlohmann::json j = small_config();
  j["output"] = (dir / "rows.csv").string();
  j["summary"] = (dir / "summary.csv").string();
  const std::string cfg = write_text("small.json", j.dump());
  ASSERT_EQ(run_cli("run --config " + cfg), 0);
  const std::string first = read_text((dir / "rows.csv").string());
  ASSERT_EQ(run_cli("run --config " + cfg + " --timing " + (dir / "timing.csv").string()), 0);
  EXPECT_EQ(read_text((dir / "rows.csv").string()), first);
  EXPECT_EQ(std::count(first.begin(), first.end(), '\n'), 7);
  EXPECT_TRUE(fs::exists(dir / "summary.csv"));
  EXPECT_TRUE(fs::exists(dir / "timing.csv"));
}

TEST(Cli, DriverGenExportsBinaryInstance) {
  const fs::path out = scratch_dir() / "drv.json";
  ASSERT_EQ(run_cli("driver-gen --scenario " + std::string(CBAI_SOURCE_DIR) +
                    "/data/scenarios/different-environment.json --k 10 --seed 1 --out " + out.string()),
            0);
  const CbaiInstance inst = load_instance(out.string());
  EXPECT_EQ(inst.feedback(), Feedback::binary);
  EXPECT_EQ(inst.num_arms(), 10u);
  EXPECT_EQ(read_json_file(out.string()).at("feedback"), "binary");
}
