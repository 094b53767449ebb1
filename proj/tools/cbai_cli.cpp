// cbai command line: experiments, diagnostics, instance generation, driver
// policy sets and the figure presets.
//
// Exit codes: 0 ok, 2 configuration / input error, 3 runtime failure.

#include "cbai/cbai.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

void write_file(const std::string& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  body(out);
  if (!out) throw std::runtime_error("write failed: " + path);
}

int cmd_run(const std::string& config_path, const std::string& out_override, const std::string& summary_override,
            const std::string& timing_path) {
  cbai::ExperimentConfig config = cbai::load_config(config_path);
  if (!out_override.empty()) config.output = out_override;
  if (!summary_override.empty()) config.summary_output = summary_override;
  const auto rows = cbai::run_experiment(config);
  if (config.output.empty()) {
    cbai::write_results_csv(std::cout, rows);
  } else {
    write_file(config.output, [&](std::ostream& o) { cbai::write_results_csv(o, rows); });
  }
  if (!config.summary_output.empty())
    write_file(config.summary_output, [&](std::ostream& o) { cbai::write_summary_csv(o, cbai::summarize(rows)); });
  if (!timing_path.empty()) write_file(timing_path, [&](std::ostream& o) { cbai::write_timing_csv(o, rows); });
  return 0;
}

int cmd_diag(const std::string& path) {
  const cbai::CbaiInstance inst = cbai::load_instance(path);
  nlohmann::json j = cbai::to_json(cbai::diagnostics(inst));
  j["instance"] = inst.name();
  j["arms"] = inst.num_arms();
  j["optimum"] = cbai::true_optimum(inst);
  std::cout << j.dump(2) << '\n';
  return 0;
}

struct GenArgs {
  std::string family;
  std::size_t d = 10;
  double eps = 0.05;
  std::size_t n = 20;
  std::uint64_t seed = 0;
  double sigma = 0.05;
  std::string out;
};

int cmd_gen(const GenArgs& a) {
  cbai::InstanceSpec s;
  s.family = a.family;
  s.d = a.d;
  s.eps = a.eps;
  s.n = a.n;
  s.seed = a.seed;
  s.noise_sigma = a.sigma;
  if (s.family != "irrelevant-dimensions" && s.family != "unit-sphere" && s.family != "line-1d")
    throw cbai::ConfigError("--family: expected irrelevant-dimensions, unit-sphere or line-1d, got \"" + a.family + "\"");
  cbai::CbaiInstance inst = [&] {
    try {
      return cbai::materialize(s);
    } catch (const std::invalid_argument& e) {
      throw cbai::ConfigError(e.what());
    }
  }();
  cbai::save_instance(inst, a.out);
  return 0;
}

int cmd_driver_gen(const std::string& scenario, std::size_t k, std::uint64_t seed, const std::string& out) {
  cbai::driver::Scenario sc;
  try {
    sc = scenario.ends_with(".json") ? cbai::driver::load_scenario(scenario) : cbai::driver::make_scenario(scenario);
  } catch (const std::invalid_argument& e) {
    throw cbai::ConfigError(e.what());
  }
  if (k < 2) throw cbai::ConfigError("--k: need at least 2 policies");
  const auto set = cbai::driver::build_policy_set(sc, k, seed);
  cbai::save_instance(set.instance, out);
  std::cerr << "wrote " << k << " policies (scale " << set.scale << ", optimum " << cbai::true_optimum(set.instance)
            << ") to " << out << '\n';
  return 0;
}

int cmd_sweep(const std::string& id, const std::string& dir) {
  if (id != "fig4") cbai::preset(id);  // reject unknown ids before touching the filesystem
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  if (id == "fig4") {
    const auto rows = cbai::run_penalty_preset();
    write_file((base / "fig4.csv").string(), [&](std::ostream& o) { cbai::write_sweep_csv(o, rows); });
    return 0;
  }
  cbai::ExperimentConfig config = cbai::preset(id);
  const auto rows = cbai::run_experiment(config);
  write_file((base / (id + ".csv")).string(), [&](std::ostream& o) { cbai::write_results_csv(o, rows); });
  write_file((base / (id + "_summary.csv")).string(),
             [&](std::ostream& o) { cbai::write_summary_csv(o, cbai::summarize(rows)); });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained linear best-arm identification toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_override, summary_override, timing_path;
  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("--config", config_path, "experiment JSON")->required();
  run->add_option("--out", out_override, "result CSV (overrides the config)");
  run->add_option("--summary", summary_override, "summary CSV (overrides the config)");
  run->add_option("--timing", timing_path, "per-run wall times CSV");

  std::string diag_path;
  auto* diag = app.add_subcommand("diag", "sample-complexity diagnostics of an instance");
  diag->add_option("--instance", diag_path, "instance JSON")->required();

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen", "generate a synthetic instance");
  gen->add_option("--family", gen_args.family, "irrelevant-dimensions | unit-sphere | line-1d")->required();
  gen->add_option("--d", gen_args.d, "dimension");
  gen->add_option("--eps", gen_args.eps, "boundary offset (irrelevant-dimensions)");
  gen->add_option("--n", gen_args.n, "number of arms (unit-sphere)");
  gen->add_option("--seed", gen_args.seed, "seed (unit-sphere)");
  gen->add_option("--sigma", gen_args.sigma, "noise standard deviation");
  gen->add_option("--out", gen_args.out, "output JSON")->required();

  std::string scenario, drv_out;
  std::size_t k = 100;
  std::uint64_t drv_seed = 0;
  auto* drv = app.add_subcommand("driver-gen", "build a driver policy set as a binary-feedback instance");
  drv->add_option("--scenario", scenario, "base | different-reward | different-environment | fixture.json")->required();
  drv->add_option("--k", k, "number of policies")->required();
  drv->add_option("--seed", drv_seed, "seed")->required();
  drv->add_option("--out", drv_out, "output JSON")->required();

  std::string preset_id, sweep_dir;
  auto* sweep = app.add_subcommand("sweep", "run a figure preset");
  sweep->add_option("--preset", preset_id, "fig2a | fig2b | fig3 | fig4 | fig5")->required();
  sweep->add_option("--out", sweep_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config_path, out_override, summary_override, timing_path);
    if (*diag) return cmd_diag(diag_path);
    if (*gen) return cmd_gen(gen_args);
    if (*drv) return cmd_driver_gen(scenario, k, drv_seed, drv_out);
    if (*sweep) return cmd_sweep(preset_id, sweep_dir);
  } catch (const cbai::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const cbai::ParseError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const cbai::ValidationError& e) {
    std::cerr << "invalid instance: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
