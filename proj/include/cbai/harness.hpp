#pragma once
// Experiment harness: JSON configs, the algorithm registry, parallel runs with
// per-run RNG streams, CSV output, percentile summaries, sample-complexity
// diagnostics and the figure presets.

#include "cbai/algorithms.hpp"
#include "cbai/design.hpp"
#include "cbai/driver.hpp"
#include "cbai/instance.hpp"
#include "cbai/instances.hpp"
#include "cbai/oracle.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace cbai {

/// Invalid experiment configuration; the message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Algorithm registry

enum class AlgorithmFamily { acol, round_based, greedy };

struct AlgorithmKind {
  AlgorithmFamily family = AlgorithmFamily::acol;
  RoundFlavor flavor = RoundFlavor::uniform;
  Selection select = Selection::maxvar_uncertain;
  BoundsMode bounds = BoundsMode::adaptive;
};

namespace detail {
inline const std::vector<std::pair<std::string, Selection>>& greedy_names() {
  static const std::vector<std::pair<std::string, Selection>> names{
      {"g-acol", Selection::maxvar_uncertain},       {"g-acol-uniform", Selection::uniform_uncertain},
      {"greedy-maxvar", Selection::maxvar_all},      {"adaptive-uniform", Selection::uniform_all},
      {"maxrew-u", Selection::maxrew_uncertain},     {"maxrew-f", Selection::maxrew_feasible}};
  return names;
}
}  // namespace detail

/// Every registered algorithm name.
inline std::vector<std::string> algorithm_names() {
  std::vector<std::string> out{"acol", "oracle", "g-allocation", "uniform"};
  for (const auto& [name, sel] : detail::greedy_names()) {
    out.push_back(name);
    out.push_back(name + "-tuned");
  }
  return out;
}

inline AlgorithmKind parse_algorithm(const std::string& name) {
  AlgorithmKind k;
  if (name == "acol") return k;
  k.family = AlgorithmFamily::round_based;
  static const std::map<std::string, RoundFlavor> flavors{
      {"oracle", RoundFlavor::oracle_design}, {"g-allocation", RoundFlavor::g_allocation}, {"uniform", RoundFlavor::uniform}};
  if (auto it = flavors.find(name); it != flavors.end()) {
    k.flavor = it->second;
    return k;
  }
  k.family = AlgorithmFamily::greedy;
  std::string base = name;
  const std::string suffix = "-tuned";
  if (base.size() > suffix.size() && base.compare(base.size() - suffix.size(), suffix.size(), suffix) == 0) {
    base.resize(base.size() - suffix.size());
    k.bounds = BoundsMode::tuned;
  }
  for (const auto& [n, sel] : detail::greedy_names()) {
    if (n != base) continue;
    k.select = sel;
    return k;
  }
  std::string known;
  for (const auto& n : algorithm_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("unknown algorithm \"" + name + "\" (known: " + known + ")");
}

struct AlgorithmSpec {
  std::string name;   // registry key
  std::string label;  // name in the output; defaults to name
  double delta = 0.05;
  double epsilon = 0.1;
  double v = 1.9;
  double beta = 0.25;
  std::optional<double> ridge;  // greedy only; 1 for theory bounds, 0.01 for tuned bounds
  std::optional<double> S;      // adaptive bounds; defaults to ||phi|| of the instance
  std::optional<double> L;      // adaptive bounds; defaults to max ||x||
  double noise_scale = 1.0;
  std::uint64_t budget = kDefaultBudget;

  const std::string& display() const { return label.empty() ? name : label; }
};

inline constexpr double kTunedRidge = 0.01;

inline double default_ridge(const AlgorithmKind& k) { return k.bounds == BoundsMode::tuned ? kTunedRidge : 1.0; }

// ---------------------------------------------------------------------------
// Instances

struct InstanceSpec {
  std::string family;  // irrelevant-dimensions | unit-sphere | line-1d | file | driver
  std::string group;   // summary group label; defaults to family
  std::string param;   // swept parameter name for plot data (may be empty)
  double value = 0.0;  // its value
  std::size_t d = 10;
  double eps = 0.05;
  std::size_t n = 20;
  std::optional<std::uint64_t> seed;  // unit-sphere: unset means one instance per run seed
  double noise_sigma = 0.05;
  std::string path;                   // file, or a scenario fixture for driver
  std::string scenario = "base";
  std::size_t k = 100;

  bool per_seed() const { return family == "unit-sphere" && !seed; }
  const std::string& group_label() const { return group.empty() ? family : group; }
};

inline CbaiInstance materialize(const InstanceSpec& s, std::uint64_t run_seed = 0) {
  if (s.family == "irrelevant-dimensions") return gen_irrelevant_dimensions(s.d, s.eps, s.noise_sigma);
  if (s.family == "unit-sphere") return gen_unit_sphere(s.d, s.n, s.seed.value_or(run_seed), s.noise_sigma);
  if (s.family == "line-1d") return gen_line_1d(s.noise_sigma);
  if (s.family == "file") return load_instance(s.path);
  if (s.family == "driver") {
    const driver::Scenario sc = s.path.empty() ? driver::make_scenario(s.scenario) : driver::load_scenario(s.path);
    return driver::build_policy_set(sc, s.k, s.seed.value_or(0)).instance;
  }
  throw ConfigError("unknown instance family \"" + s.family +
                    "\" (irrelevant-dimensions, unit-sphere, line-1d, file, driver)");
}

// ---------------------------------------------------------------------------
// Single runs

struct ResultRow {
  std::string experiment;
  std::string group;
  std::string instance;
  std::string param;
  double value = 0.0;
  std::string algorithm;
  std::uint64_t seed = 0;
  std::uint64_t queries = 0;
  bool correct = false;
  std::optional<ArmIndex> recommended;
  ArmIndex optimum = 0;
  StopReason stopped_reason = StopReason::exhausted_budget;
  double wall_time = 0.0;  // seconds; kept out of the main CSV so it stays deterministic
};

inline double max_arm_norm(const CbaiInstance& inst) { return inst.arms().rowwise().norm().maxCoeff(); }

/// Runs one algorithm on one instance. The RNG stream depends only on
/// (seed, algorithm label, instance name).
inline RunResult run_algorithm(const CbaiInstance& inst, const AlgorithmSpec& spec, std::uint64_t seed) {
  const AlgorithmKind kind = parse_algorithm(spec.name);
  ConstraintOracle oracle(inst, OracleRng(seed, hash_label(spec.display() + '\x1f' + inst.name())));
  const AlgorithmView view = inst.view();
  RunResult r;
  switch (kind.family) {
    case AlgorithmFamily::acol: {
      AcolOptions o;
      o.delta = spec.delta;
      o.epsilon = spec.epsilon;
      o.budget = spec.budget;
      o.noise_scale = spec.noise_scale;
      r = run_acol(view, oracle, o);
      break;
    }
    case AlgorithmFamily::round_based: {
      RoundBasedOptions o;
      o.v = spec.v;
      o.delta = spec.delta;
      o.epsilon = spec.epsilon;
      o.budget = spec.budget;
      o.noise_scale = spec.noise_scale;
      r = run_round_based(inst, oracle, kind.flavor, o);
      break;
    }
    case AlgorithmFamily::greedy: {
      GreedyOptions o;
      o.select = kind.select;
      o.bounds = kind.bounds;
      o.beta = spec.beta;
      o.ridge = spec.ridge.value_or(default_ridge(kind));
      o.norm_bound_S = spec.S.value_or(inst.constraint().norm());
      o.arm_bound_L = spec.L.value_or(max_arm_norm(inst));
      o.delta = spec.delta;
      o.noise_scale = spec.noise_scale;
      o.budget = spec.budget;
      r = run_greedy(view, oracle, o);
      break;
    }
  }
  const ArmIndex best = true_optimum(inst);
  r.correct = r.recommended && inst.feasible(*r.recommended) && inst.reward_of(*r.recommended) == inst.reward_of(best);
  return r;
}

// ---------------------------------------------------------------------------
// Experiment configs

struct ExperimentConfig {
  std::string name = "experiment";
  std::vector<InstanceSpec> instances;
  std::vector<AlgorithmSpec> algorithms;
  std::vector<std::uint64_t> seeds;
  std::string output;          // CSV path; empty writes nowhere (the caller decides)
  std::string summary_output;  // optional summary CSV path
  std::size_t threads = 1;

  void validate() const {
    if (instances.empty()) throw ConfigError("instances: need at least one instance");
    if (algorithms.empty()) throw ConfigError("algorithms: need at least one algorithm");
    if (seeds.empty()) throw ConfigError("seeds: need at least one seed");
    if (threads < 1) throw ConfigError("threads: must be >= 1");
    std::set<std::string> labels;
    for (std::size_t i = 0; i < algorithms.size(); ++i) {
      const auto& a = algorithms[i];
      const std::string at = "algorithms[" + std::to_string(i) + "]";
      parse_algorithm(a.name);
      if (!labels.insert(a.display()).second) throw ConfigError(at + ".label: duplicate \"" + a.display() + "\"");
      if (!(a.delta > 0.0 && a.delta < 1.0)) throw ConfigError(at + ".delta: must lie in (0, 1)");
      if (!(a.epsilon > 0.0)) throw ConfigError(at + ".epsilon: must be > 0");
      if (!(a.v > 1.0 && a.v < 2.0)) throw ConfigError(at + ".v: must lie in (1, 2)");
      if (!(a.beta > 0.0)) throw ConfigError(at + ".beta: must be > 0");
      if (a.ridge && !(*a.ridge > 0.0)) throw ConfigError(at + ".ridge: must be > 0");
      if (a.S && !(*a.S > 0.0)) throw ConfigError(at + ".S: must be > 0");
      if (a.L && !(*a.L > 0.0)) throw ConfigError(at + ".L: must be > 0");
      if (!(a.noise_scale >= 0.0)) throw ConfigError(at + ".noise_scale: must be >= 0");
      if (a.budget < 1) throw ConfigError(at + ".budget: must be >= 1");
    }
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const auto& s = instances[i];
      const std::string at = "instances[" + std::to_string(i) + "]";
      static const std::set<std::string> families{"irrelevant-dimensions", "unit-sphere", "line-1d", "file", "driver"};
      if (!families.count(s.family)) throw ConfigError(at + ".family: unknown family \"" + s.family + "\"");
      if (s.family == "file" && s.path.empty()) throw ConfigError(at + ".path: required for family \"file\"");
      if (!(s.noise_sigma >= 0.0)) throw ConfigError(at + ".noise_sigma: must be >= 0");
    }
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": must be a JSON object");
  for (const auto& [key, val] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown key \"" + key + "\"");
  }
}

inline double get_number(const nlohmann::json& j, const char* key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + ": must be a number");
  return v.get<double>();
}

inline std::uint64_t get_count(const nlohmann::json& j, const char* key, const std::string& where) {
  const auto& v = j.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
  if (v.is_number_float()) {
    const double x = v.get<double>();
    if (x >= 0.0 && x < 1.8e19 && std::floor(x) == x) return static_cast<std::uint64_t>(x);
  }
  throw ConfigError(where + "." + key + ": must be a nonnegative integer");
}

inline std::string get_string(const nlohmann::json& j, const char* key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_string()) throw ConfigError(where + "." + key + ": must be a string");
  return v.get<std::string>();
}

}  // namespace detail

inline AlgorithmSpec algorithm_from_json(const nlohmann::json& j, const std::string& where) {
  AlgorithmSpec a;
  if (j.is_string()) {
    a.name = j.get<std::string>();
    parse_algorithm(a.name);
    return a;
  }
  detail::check_keys(j, where, {"name", "label", "delta", "epsilon", "v", "beta", "ridge", "S", "L", "noise_scale", "budget"});
  if (!j.contains("name")) throw ConfigError(where + ".name: missing");
  a.name = detail::get_string(j, "name", where);
  try {
    parse_algorithm(a.name);
  } catch (const ConfigError& e) {
    throw ConfigError(where + ".name: " + e.what());
  }
  if (j.contains("label")) a.label = detail::get_string(j, "label", where);
  if (j.contains("delta")) a.delta = detail::get_number(j, "delta", where);
  if (j.contains("epsilon")) a.epsilon = detail::get_number(j, "epsilon", where);
  if (j.contains("v")) a.v = detail::get_number(j, "v", where);
  if (j.contains("beta")) a.beta = detail::get_number(j, "beta", where);
  if (j.contains("ridge")) a.ridge = detail::get_number(j, "ridge", where);
  if (j.contains("S")) a.S = detail::get_number(j, "S", where);
  if (j.contains("L")) a.L = detail::get_number(j, "L", where);
  if (j.contains("noise_scale")) a.noise_scale = detail::get_number(j, "noise_scale", where);
  if (j.contains("budget")) a.budget = detail::get_count(j, "budget", where);
  return a;
}

inline InstanceSpec instance_spec_from_json(const nlohmann::json& j, const std::string& where) {
  detail::check_keys(j, where,
                     {"family", "group", "param", "value", "d", "eps", "n", "seed", "noise_sigma", "path", "scenario", "k"});
  InstanceSpec s;
  if (!j.contains("family")) throw ConfigError(where + ".family: missing");
  s.family = detail::get_string(j, "family", where);
  if (j.contains("group")) s.group = detail::get_string(j, "group", where);
  if (j.contains("param")) s.param = detail::get_string(j, "param", where);
  if (j.contains("value")) s.value = detail::get_number(j, "value", where);
  if (j.contains("d")) s.d = detail::get_count(j, "d", where);
  if (j.contains("eps")) s.eps = detail::get_number(j, "eps", where);
  if (j.contains("n")) s.n = detail::get_count(j, "n", where);
  if (j.contains("seed")) s.seed = detail::get_count(j, "seed", where);
  if (j.contains("noise_sigma")) s.noise_sigma = detail::get_number(j, "noise_sigma", where);
  if (j.contains("path")) s.path = detail::get_string(j, "path", where);
  if (j.contains("scenario")) s.scenario = detail::get_string(j, "scenario", where);
  if (j.contains("k")) s.k = detail::get_count(j, "k", where);
  return s;
}

/// Config document:
///   { "name": "...", "instance": {...} | "instances": [...], "algorithms": [...],
///     "seeds": [0, 1, ...] | {"start": 0, "count": 30}, "output": "rows.csv",
///     "summary": "summary.csv", "threads": 4 }
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  detail::check_keys(j, "config", {"name", "instance", "instances", "algorithms", "seeds", "output", "summary", "threads"});
  ExperimentConfig c;
  if (j.contains("name")) c.name = detail::get_string(j, "name", "config");
  if (j.contains("instance") == j.contains("instances"))
    throw ConfigError("config: give exactly one of \"instance\" or \"instances\"");
  if (j.contains("instance")) {
    c.instances.push_back(instance_spec_from_json(j["instance"], "instance"));
  } else {
    if (!j["instances"].is_array()) throw ConfigError("instances: must be an array");
    for (std::size_t i = 0; i < j["instances"].size(); ++i)
      c.instances.push_back(instance_spec_from_json(j["instances"][i], "instances[" + std::to_string(i) + "]"));
  }
  if (!j.contains("algorithms") || !j["algorithms"].is_array()) throw ConfigError("algorithms: missing or not an array");
  for (std::size_t i = 0; i < j["algorithms"].size(); ++i)
    c.algorithms.push_back(algorithm_from_json(j["algorithms"][i], "algorithms[" + std::to_string(i) + "]"));
  if (!j.contains("seeds")) throw ConfigError("seeds: missing");
  const auto& seeds = j["seeds"];
  if (seeds.is_array()) {
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      if (!seeds[i].is_number_integer() || seeds[i].get<long long>() < 0)
        throw ConfigError("seeds[" + std::to_string(i) + "]: must be a nonnegative integer");
      c.seeds.push_back(seeds[i].get<std::uint64_t>());
    }
  } else if (seeds.is_object()) {
    detail::check_keys(seeds, "seeds", {"start", "count"});
    const std::uint64_t start = seeds.contains("start") ? detail::get_count(seeds, "start", "seeds") : 0;
    if (!seeds.contains("count")) throw ConfigError("seeds.count: missing");
    const std::uint64_t count = detail::get_count(seeds, "count", "seeds");
    for (std::uint64_t s = 0; s < count; ++s) c.seeds.push_back(start + s);
  } else {
    throw ConfigError("seeds: must be an array or {\"start\", \"count\"}");
  }
  if (j.contains("output")) c.output = detail::get_string(j, "output", "config");
  if (j.contains("summary")) c.summary_output = detail::get_string(j, "summary", "config");
  if (j.contains("threads")) c.threads = detail::get_count(j, "threads", "config");
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = read_json_file(path);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j);
}

/// CBAI_THREADS, when set, overrides the configured degree.
inline std::size_t resolve_threads(std::size_t configured) {
  const char* env = std::getenv("CBAI_THREADS");
  if (!env || !*env) return std::max<std::size_t>(configured, 1);
  char* end = nullptr;
  const long long v = std::strtoll(env, &end, 10);
  if (*end != '\0' || v < 1) throw ConfigError(std::string("CBAI_THREADS: expected a positive integer, got \"") + env + "\"");
  return static_cast<std::size_t>(v);
}

// ---------------------------------------------------------------------------
// Execution

inline bool row_less(const ResultRow& a, const ResultRow& b) {
  // the trailing keys only separate the same instance listed under two sweep groups
  return std::tie(a.instance, a.algorithm, a.seed, a.experiment, a.group, a.param, a.value) <
         std::tie(b.instance, b.algorithm, b.seed, b.experiment, b.group, b.param, b.value);
}

/// Runs every (instance, algorithm, seed) combination; rows come back sorted.
inline std::vector<ResultRow> run_experiment(const ExperimentConfig& config) {
  config.validate();
  const std::size_t threads = resolve_threads(config.threads);

  // instances are materialised up front and shared read-only by the workers
  struct Job {
    std::shared_ptr<const CbaiInstance> inst;
    const InstanceSpec* spec;
    const AlgorithmSpec* algo;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const InstanceSpec& spec : config.instances) {
    std::shared_ptr<const CbaiInstance> shared;
    if (!spec.per_seed()) shared = std::make_shared<const CbaiInstance>(materialize(spec));
    for (std::uint64_t seed : config.seeds) {
      auto inst = shared ? shared : std::make_shared<const CbaiInstance>(materialize(spec, seed));
      for (const AlgorithmSpec& a : config.algorithms) jobs.push_back({inst, &spec, &a, seed});
    }
  }

  std::vector<ResultRow> rows(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        const Job& job = jobs[i];
        const auto start = std::chrono::steady_clock::now();
        const RunResult r = run_algorithm(*job.inst, *job.algo, job.seed);
        const auto stop = std::chrono::steady_clock::now();
        ResultRow& row = rows[i];
        row.experiment = config.name;
        row.group = job.spec->group_label();
        row.instance = job.inst->name();
        row.param = job.spec->param;
        row.value = job.spec->value;
        row.algorithm = job.algo->display();
        row.seed = job.seed;
        row.queries = r.queries;
        row.correct = r.correct;
        row.recommended = r.recommended;
        row.optimum = true_optimum(*job.inst);
        row.stopped_reason = r.stopped_reason;
        row.wall_time = std::chrono::duration<double>(stop - start).count();
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = jobs.size();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(threads, jobs.size()); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  std::sort(rows.begin(), rows.end(), row_less);
  return rows;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

inline constexpr const char* kResultHeader =
    "experiment,group,instance,param,value,algorithm,seed,queries,correct,recommended,optimum,stopped_reason";

inline void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kResultHeader << '\n';
  for (const ResultRow& r : rows) {
    out << csv_field(r.experiment) << ',' << csv_field(r.group) << ',' << csv_field(r.instance) << ','
        << csv_field(r.param) << ',' << format_double(r.value) << ',' << csv_field(r.algorithm) << ',' << r.seed << ','
        << r.queries << ',' << (r.correct ? 1 : 0) << ','
        << (r.recommended ? std::to_string(*r.recommended) : std::string("")) << ',' << r.optimum << ','
        << to_string(r.stopped_reason) << '\n';
  }
}

inline void write_timing_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << "instance,algorithm,seed,wall_time_s\n";
  for (const ResultRow& r : rows)
    out << csv_field(r.instance) << ',' << csv_field(r.algorithm) << ',' << r.seed << ',' << format_double(r.wall_time)
        << '\n';
}

// ---------------------------------------------------------------------------
// Summaries

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value.
inline double percentile_nearest_rank(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
  if (!(p > 0.0 && p <= 100.0)) throw std::invalid_argument("percentile must lie in (0, 100]");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  std::size_t rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n - 1e-12));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

struct SummaryRow {
  std::string experiment;
  std::string group;
  std::string param;
  double value = 0.0;
  std::string algorithm;
  std::size_t runs = 0;
  double median = 0.0;
  double p25 = 0.0;
  double p75 = 0.0;
  double correct_rate = 0.0;
  double certified_rate = 0.0;
};

/// Groups rows by (experiment, group, param, value, algorithm).
inline std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("summarize needs at least one row");
  using Key = std::tuple<std::string, std::string, std::string, double, std::string>;
  std::map<Key, std::vector<const ResultRow*>> groups;
  for (const ResultRow& r : rows) groups[{r.experiment, r.group, r.param, r.value, r.algorithm}].push_back(&r);
  std::vector<SummaryRow> out;
  for (const auto& [key, members] : groups) {
    SummaryRow s;
    std::tie(s.experiment, s.group, s.param, s.value, s.algorithm) = key;
    s.runs = members.size();
    std::vector<double> q;
    std::size_t correct = 0, certified = 0;
    for (const ResultRow* r : members) {
      q.push_back(static_cast<double>(r->queries));
      correct += r->correct;
      certified += r->stopped_reason == StopReason::certified;
    }
    s.median = percentile_nearest_rank(q, 50);
    s.p25 = percentile_nearest_rank(q, 25);
    s.p75 = percentile_nearest_rank(q, 75);
    s.correct_rate = static_cast<double>(correct) / static_cast<double>(s.runs);
    s.certified_rate = static_cast<double>(certified) / static_cast<double>(s.runs);
    out.push_back(s);
  }
  return out;
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "experiment,group,param,value,algorithm,runs,median,p25,p75,correct_rate,certified_rate\n";
  for (const SummaryRow& s : rows)
    out << csv_field(s.experiment) << ',' << csv_field(s.group) << ',' << csv_field(s.param) << ','
        << format_double(s.value) << ',' << csv_field(s.algorithm) << ',' << s.runs << ',' << format_double(s.median)
        << ',' << format_double(s.p25) << ',' << format_double(s.p75) << ',' << format_double(s.correct_rate) << ','
        << format_double(s.certified_rate) << '\n';
}

/// Median queries of one algorithm in a summary (NaN when absent).
inline double median_of(const std::vector<SummaryRow>& summary, const std::string& algorithm, double value = 0.0) {
  for (const SummaryRow& s : summary)
    if (s.algorithm == algorithm && s.value == value) return s.median;
  return std::nan("");
}

// ---------------------------------------------------------------------------
// Diagnostics

struct Diagnostics {
  double hclb = 0.0;        // restricted to arms at least as rewarding as the optimum
  double hclb_bar = 0.0;    // over all arms
  double worst_case = 0.0;  // d / C_min^2
  double c_min = 0.0;
  std::size_t superlevel = 0;
  std::size_t dimension = 0;
  bool converged = true;
};

inline constexpr double kDiagnosticsTolerance = 1e-3;

/// Computes H_CLB <= H_bar_CLB <= d / C_min^2 and throws if the chain breaks
/// by more than the relative tolerance.
inline Diagnostics diagnostics(const CbaiInstance& inst, const DesignOptions& opt = {}) {
  Diagnostics dg;
  dg.dimension = inst.dimension();
  dg.c_min = min_constraint_gap(inst);
  if (dg.c_min == 0.0) throw std::domain_error("an arm lies exactly on the constraint boundary");
  dg.superlevel = superlevel_arms(inst, true_optimum(inst)).size();
  const DesignResult restricted = hclb_design(inst, true, opt);
  const DesignResult full = hclb_design(inst, false, opt);
  dg.hclb = restricted.objective;
  dg.hclb_bar = full.objective;
  dg.converged = restricted.converged && full.converged;
  dg.worst_case = static_cast<double>(dg.dimension) / (dg.c_min * dg.c_min);
  const double tol = 1.0 + kDiagnosticsTolerance;
  if (!(dg.hclb <= dg.hclb_bar * tol) || !(dg.hclb_bar <= dg.worst_case * tol)) {
    std::ostringstream msg;
    msg << "diagnostics chain violated: H_CLB=" << dg.hclb << " H_bar=" << dg.hclb_bar << " d/C^2=" << dg.worst_case;
    throw std::logic_error(msg.str());
  }
  return dg;
}

inline nlohmann::json to_json(const Diagnostics& dg) {
  return {{"H_CLB", dg.hclb},       {"H_bar_CLB", dg.hclb_bar}, {"d_over_Cmin2", dg.worst_case},
          {"C_min", dg.c_min},      {"superlevel_arms", dg.superlevel}, {"dimension", dg.dimension},
          {"converged", dg.converged}};
}

// ---------------------------------------------------------------------------
// Figure presets (desk scale)

inline std::vector<std::string> preset_names() { return {"fig2a", "fig2b", "fig3", "fig4", "fig5"}; }

namespace detail {
inline AlgorithmSpec algo(std::string name, std::uint64_t budget = kDefaultBudget) {
  AlgorithmSpec a;
  a.name = std::move(name);
  a.budget = budget;
  return a;
}

inline std::vector<AlgorithmSpec> synthetic_suite() {
  std::vector<AlgorithmSpec> out;
  for (const char* n : {"oracle", "acol", "g-allocation", "uniform", "g-acol", "g-acol-tuned", "g-acol-uniform-tuned",
                        "greedy-maxvar-tuned", "adaptive-uniform-tuned", "maxrew-u-tuned"})
    out.push_back(algo(n));
  return out;
}
}  // namespace detail

inline constexpr std::uint64_t kDriverTheoryBudget = 1'000'000;
inline constexpr double kDriverSafeBeta = 9.0;  // sqrt(beta) = 3, the smallest safe value on the desk grid (README)

/// fig4 is a penalty sweep, not an experiment config; see run_penalty_preset.
inline ExperimentConfig preset(const std::string& id) {
  ExperimentConfig c;
  c.name = id;
  for (std::uint64_t s = 0; s < 30; ++s) c.seeds.push_back(s);
  if (id == "fig2a") {
    for (double eps : {0.05, 0.1, 0.2, 0.3}) {
      InstanceSpec s;
      s.family = "irrelevant-dimensions";
      s.group = "vary-eps";
      s.param = "eps";
      s.value = eps;
      s.d = 10;
      s.eps = eps;
      c.instances.push_back(s);
    }
    for (std::size_t d : {5, 10, 15, 20}) {
      InstanceSpec s;
      s.family = "irrelevant-dimensions";
      s.group = "vary-d";
      s.param = "d";
      s.value = static_cast<double>(d);
      s.d = d;
      s.eps = 0.05;
      c.instances.push_back(s);
    }
    c.algorithms = detail::synthetic_suite();
  } else if (id == "fig2b") {
    // d reduced from 30 to 10 for the n sweep so the theory runs stay at desk scale
    for (std::size_t n : {10, 20, 30, 40}) {
      InstanceSpec s;
      s.family = "unit-sphere";
      s.group = "vary-n";
      s.param = "n";
      s.value = static_cast<double>(n);
      s.d = 10;
      s.n = n;
      c.instances.push_back(s);
    }
    for (std::size_t d : {3, 5, 10, 15}) {
      InstanceSpec s;
      s.family = "unit-sphere";
      s.group = "vary-d";
      s.param = "d";
      s.value = static_cast<double>(d);
      s.d = d;
      s.n = 30;
      c.instances.push_back(s);
    }
    c.algorithms = detail::synthetic_suite();
    for (auto& a : c.algorithms) a.budget = 2'000'000;
  } else if (id == "fig3") {
    InstanceSpec s;
    s.family = "line-1d";
    c.instances.push_back(s);
    for (const char* n : {"g-acol-tuned", "maxrew-u-tuned", "maxrew-f-tuned", "g-acol", "maxrew-u", "maxrew-f"})
      c.algorithms.push_back(detail::algo(n));
  } else if (id == "fig5") {
    InstanceSpec s;
    s.family = "driver";
    s.scenario = "base";
    s.k = 100;
    s.seed = 0;
    c.instances.push_back(s);
    for (const char* n : {"acol", "oracle", "g-allocation", "uniform", "g-acol"})
      c.algorithms.push_back(detail::algo(n, kDriverTheoryBudget));
    for (const char* n : {"g-acol-tuned", "g-acol-uniform-tuned", "greedy-maxvar-tuned", "adaptive-uniform-tuned",
                          "maxrew-u-tuned"})
      c.algorithms.push_back(detail::algo(n, kDriverTheoryBudget));
    AlgorithmSpec safe = detail::algo("g-acol-tuned", kDriverTheoryBudget);
    safe.label = "g-acol-tuned-safe";
    safe.beta = kDriverSafeBeta;
    c.algorithms.push_back(safe);
    c.seeds.resize(10);
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset \"" + id + "\" (known: " + known + ")");
  }
  return c;
}

/// CEM settings used by the penalty sweep preset and the policy sets.
inline driver::CemOptions desk_cem() {
  driver::CemOptions c;
  c.n_iter = 100;
  c.n_samp = 200;
  c.n_elite = 20;
  return c;
}

inline const std::vector<double>& sweep_penalties() {
  static const std::vector<double> p{0.0, 0.01, 0.1, 0.3, 1.0, 3.0, 10.0, 100.0, 1000.0};
  return p;
}

struct PenaltySweepRow {
  std::string scenario;
  driver::SweepRow row;
};

inline std::vector<PenaltySweepRow> run_penalty_preset(std::uint64_t seed = 0) {
  std::vector<PenaltySweepRow> out;
  for (const char* id : {"base", "different-reward", "different-environment"})
    for (const auto& r : driver::penalty_sweep(driver::make_scenario(id), sweep_penalties(), desk_cem(), seed))
      out.push_back({id, r});
  return out;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<PenaltySweepRow>& rows) {
  out << "scenario,kind,penalty,reward,constraint,feasible\n";
  for (const auto& r : rows)
    out << r.scenario << ',' << r.row.kind << ',' << format_double(r.row.penalty) << ',' << format_double(r.row.reward)
        << ',' << format_double(r.row.constraint) << ',' << (r.row.feasible ? 1 : 0) << '\n';
}

}  // namespace cbai
