#pragma once
// Point-mass driving environment, constrained cross-entropy policy search and
// export of a policy set as a CBAI instance with binary feedback.
//
// State s = (x, y, heading, v); the street runs along +y. One step:
//   (dx, dy, dheading, dv) = (v cos h, v sin h, v a1, a2 - v),  v clipped to [-1, 1].
// Features (the constant 1 last):
//   f1 -(v - 0.4)^2           f5 |cos h|
//   f2 -(x - x_r)^2           f6 [v < 0]
//   f3 [off street]           f7 [v > 0.6]
//   f4 sigmoid(b d - a)       f8 sum_cars exp(-b (c1 dx^2 + c2 dy^2) + b a)
// with d the distance to the closest lane centre.

#include "cbai/instance.hpp"
#include "cbai/instances.hpp"
#include "cbai/oracle.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbai::driver {

inline constexpr std::size_t kHorizon = 20;
inline constexpr std::size_t kNumFeatures = 9;
inline constexpr std::size_t kPolicyDim = 2 * kHorizon;
inline constexpr double kFriction = 1.0;

// street geometry: three lanes on x in [-0.3, 0.3]
inline constexpr std::array<double, 3> kLaneCenters{-0.2, 0.0, 0.2};
inline constexpr double kStreetHalfWidth = 0.3;
inline constexpr double kRightLane = 0.2;

inline constexpr double kTargetVelocity = 0.4;
inline constexpr double kSpeedLimit = 0.6;
inline constexpr double kLaneSigmoidB = 10000.0, kLaneSigmoidA = 10.0;
inline constexpr double kCarB = 30.0, kCarA = 0.01, kCarC1 = 4.0, kCarC2 = 1.0;

/// Constraint weights on the nine features and the threshold.
inline const std::array<double, kNumFeatures> kConstraintWeights{0, 0, 0.3, 0.05, 0.02, 0.5, 0.3, 0.8, 0};
inline constexpr double kConstraintThreshold = 1.0;

struct CarState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double v = 0.0;
  bool operator==(const CarState&) const = default;
};

struct Action {
  double steer = 0.0;
  double accel = 0.0;
};

using Features = std::array<double, kNumFeatures>;

/// Open-loop policy: 20 (steer, accel) pairs stored flat as a 40-vector.
struct Policy {
  std::vector<double> params = std::vector<double>(kPolicyDim, 0.0);

  Action action(std::size_t t) const { return {params.at(2 * t), params.at(2 * t + 1)}; }
  void validate() const {
    if (params.size() != kPolicyDim) throw std::invalid_argument("policy must have exactly 40 action values");
  }
};

inline CarState step(const CarState& s, const Action& a) {
  CarState n;
  n.x = s.x + s.v * std::cos(s.heading);
  n.y = s.y + s.v * std::sin(s.heading);
  n.heading = s.heading + s.v * a.steer;
  n.v = std::clamp(s.v + a.accel - kFriction * s.v, -1.0, 1.0);
  return n;
}

inline double lane_distance(double x) {
  double best = std::abs(x - kLaneCenters[0]);
  for (double c : kLaneCenters) best = std::min(best, std::abs(x - c));
  return best;
}

inline Features features(const CarState& s, const std::vector<CarState>& others) {
  Features f{};
  f[0] = -(s.v - kTargetVelocity) * (s.v - kTargetVelocity);
  f[1] = -(s.x - kRightLane) * (s.x - kRightLane);
  f[2] = std::abs(s.x) > kStreetHalfWidth ? 1.0 : 0.0;
  f[3] = 1.0 / (1.0 + std::exp(-kLaneSigmoidB * lane_distance(s.x) + kLaneSigmoidA));
  f[4] = std::abs(std::cos(s.heading));
  f[5] = s.v < 0.0 ? 1.0 : 0.0;
  f[6] = s.v > kSpeedLimit ? 1.0 : 0.0;
  double close = 0.0;
  for (const CarState& o : others) {
    const double dx = s.x - o.x, dy = s.y - o.y;
    close += std::exp(-kCarB * (kCarC1 * dx * dx + kCarC2 * dy * dy) + kCarB * kCarA);
  }
  f[7] = close;
  f[8] = 1.0;
  return f;
}

// ---------------------------------------------------------------------------
// Scenarios

struct Scenario {
  std::string id;
  CarState initial_state;
  std::vector<std::vector<CarState>> other_cars;  // one trajectory of kHorizon + 1 states per car
  std::array<double, kNumFeatures> reward_weights{};

  void validate() const {
    for (const auto& traj : other_cars)
      if (traj.size() != kHorizon + 1) throw std::invalid_argument("other-car trajectories need exactly 21 states");
  }

  std::vector<CarState> others_at(std::size_t t) const {
    std::vector<CarState> out;
    out.reserve(other_cars.size());
    for (const auto& traj : other_cars) out.push_back(traj[t]);
    return out;
  }
};

inline std::vector<CarState> constant_velocity_path(CarState start) {
  std::vector<CarState> path{start};
  for (std::size_t t = 0; t < kHorizon; ++t) {
    CarState n = path.back();
    n.x += n.v * std::cos(n.heading);
    n.y += n.v * std::sin(n.heading);
    path.push_back(n);
  }
  return path;
}

inline constexpr double kOtherCarSpeed = 0.2;
inline constexpr double kOtherCarGap = 0.6;

/// Built-in scenarios: "base", "different-reward", "different-environment".
inline Scenario make_scenario(const std::string& id) {
  const double up = std::numbers::pi / 2.0;
  Scenario s;
  s.id = id;
  s.initial_state = {0.0, 0.0, up, kTargetVelocity};
  if (id == "base" || id == "different-reward") {
    s.other_cars.push_back(constant_velocity_path({0.0, kOtherCarGap, up, kOtherCarSpeed}));
  } else if (id == "different-environment") {
    for (double lane : kLaneCenters) s.other_cars.push_back(constant_velocity_path({lane, kOtherCarGap, up, kOtherCarSpeed}));
  } else {
    throw std::invalid_argument("unknown scenario \"" + id + "\" (base, different-reward, different-environment)");
  }
  s.reward_weights.fill(0.0);
  s.reward_weights[id == "different-reward" ? 1 : 0] = 1.0;
  return s;
}

inline nlohmann::json to_json(const CarState& c) {
  return {{"x", c.x}, {"y", c.y}, {"heading", c.heading}, {"v", c.v}};
}

inline CarState car_from_json(const nlohmann::json& j, const std::string& where) {
  CarState c;
  for (const char* k : {"x", "y", "heading", "v"})
    if (!j.contains(k) || !j[k].is_number()) throw ParseError(where + ": missing numeric \"" + k + "\"");
  c.x = j["x"].get<double>();
  c.y = j["y"].get<double>();
  c.heading = j["heading"].get<double>();
  c.v = j["v"].get<double>();
  return c;
}

inline nlohmann::json to_json(const Scenario& s) {
  nlohmann::json j;
  j["id"] = s.id;
  j["initial_state"] = to_json(s.initial_state);
  j["other_cars"] = nlohmann::json::array();
  for (const auto& traj : s.other_cars) {
    nlohmann::json t = nlohmann::json::array();
    for (const auto& c : traj) t.push_back(to_json(c));
    j["other_cars"].push_back(t);
  }
  j["reward_weights"] = s.reward_weights;
  return j;
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario s;
  if (!j.is_object()) throw ParseError("scenario must be a JSON object");
  if (!j.contains("id") || !j["id"].is_string()) throw ParseError("missing key \"id\"");
  s.id = j["id"].get<std::string>();
  if (!j.contains("initial_state")) throw ParseError("missing key \"initial_state\"");
  s.initial_state = car_from_json(j["initial_state"], "initial_state");
  if (!j.contains("other_cars") || !j["other_cars"].is_array()) throw ParseError("missing key \"other_cars\"");
  for (std::size_t c = 0; c < j["other_cars"].size(); ++c) {
    const auto& traj = j["other_cars"][c];
    if (!traj.is_array()) throw ParseError("other_cars[" + std::to_string(c) + "] must be an array of states");
    std::vector<CarState> path;
    for (std::size_t t = 0; t < traj.size(); ++t)
      path.push_back(car_from_json(traj[t], "other_cars[" + std::to_string(c) + "][" + std::to_string(t) + "]"));
    s.other_cars.push_back(std::move(path));
  }
  if (!j.contains("reward_weights")) throw ParseError("missing key \"reward_weights\"");
  const auto w = detail::as_vector(j["reward_weights"], "reward_weights");
  if (w.size() != kNumFeatures) throw ParseError("\"reward_weights\" must have 9 entries");
  std::copy(w.begin(), w.end(), s.reward_weights.begin());
  s.validate();
  return s;
}

inline Scenario load_scenario(const std::string& path) { return scenario_from_json(read_json_file(path)); }

// ---------------------------------------------------------------------------
// Rollouts

struct Rollout {
  Features counts{};
  std::vector<CarState> trajectory;  // kHorizon + 1 states
  double reward = 0.0;      // G = counts . theta
  double constraint = 0.0;  // J = counts . phi
};

inline double dot(const Features& a, const std::array<double, kNumFeatures>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

/// Feature counts summed over the states reached after each of the T steps.
inline Rollout rollout(const Policy& policy, const Scenario& scenario, bool keep_trajectory = true) {
  policy.validate();
  Rollout r;
  CarState s = scenario.initial_state;
  if (keep_trajectory) r.trajectory.push_back(s);
  std::vector<CarState> others;
  for (std::size_t t = 0; t < kHorizon; ++t) {
    s = step(s, policy.action(t));
    if (keep_trajectory) r.trajectory.push_back(s);
    others.clear();
    for (const auto& traj : scenario.other_cars) others.push_back(traj[t + 1]);
    const Features f = features(s, others);
    for (std::size_t k = 0; k < kNumFeatures; ++k) r.counts[k] += f[k];
  }
  r.reward = dot(r.counts, scenario.reward_weights);
  r.constraint = dot(r.counts, kConstraintWeights);
  return r;
}

// ---------------------------------------------------------------------------
// Cross-entropy method

enum class Objective { reward_only, constrained, penalized };

struct CemOptions {
  Objective objective = Objective::constrained;
  double penalty = 0.0;                       // penalized mode: maximise G - penalty * J
  double threshold = kConstraintThreshold;    // constrained mode: feasible iff J <= threshold
  std::size_t n_iter = 50;
  std::size_t n_samp = 100;
  std::size_t n_elite = 10;
};

struct CemResult {
  Policy policy;  // final mean
  Rollout outcome;
  double best_feasible_sampled = -std::numeric_limits<double>::infinity();  // max G over sampled J <= threshold
  double best_sampled_score = -std::numeric_limits<double>::infinity();     // max of the sort key over all samples
};

inline CemResult cem_optimize(const Scenario& scenario, const CemOptions& opt, OracleRng& rng) {
  if (opt.n_iter < 1) throw std::invalid_argument("cem needs n_iter >= 1");
  if (opt.n_elite < 1 || opt.n_elite > opt.n_samp) throw std::invalid_argument("cem needs 1 <= n_elite <= n_samp");
  if (opt.objective == Objective::penalized && !(opt.penalty >= 0.0)) throw std::invalid_argument("penalty must be >= 0");

  std::vector<double> mu(kPolicyDim, 0.0), sigma(kPolicyDim, 1.0);
  std::vector<Policy> samples(opt.n_samp);
  std::vector<Rollout> outcomes(opt.n_samp);
  std::vector<std::size_t> order(opt.n_samp);
  CemResult result;

  for (std::size_t it = 0; it < opt.n_iter; ++it) {
    for (std::size_t i = 0; i < opt.n_samp; ++i) {
      for (std::size_t k = 0; k < kPolicyDim; ++k) samples[i].params[k] = mu[k] + sigma[k] * rng.normal();
      outcomes[i] = rollout(samples[i], scenario, false);
      const Rollout& o = outcomes[i];
      if (o.constraint <= opt.threshold) result.best_feasible_sampled = std::max(result.best_feasible_sampled, o.reward);
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto by_reward = [&](std::size_t a, std::size_t b) { return outcomes[a].reward > outcomes[b].reward; };
    std::size_t elite_count = opt.n_elite;
    switch (opt.objective) {
      case Objective::reward_only:
        std::stable_sort(order.begin(), order.end(), by_reward);
        result.best_sampled_score = std::max(result.best_sampled_score, outcomes[order[0]].reward);
        break;
      case Objective::penalized: {
        auto score = [&](std::size_t a) { return outcomes[a].reward - opt.penalty * outcomes[a].constraint; };
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score(a) > score(b); });
        result.best_sampled_score = std::max(result.best_sampled_score, score(order[0]));
        break;
      }
      case Objective::constrained: {
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return outcomes[a].constraint < outcomes[b].constraint; });
        if (outcomes[order[opt.n_elite - 1]].constraint <= opt.threshold) {
          const auto feasible_end = std::partition_point(order.begin(), order.end(), [&](std::size_t a) {
            return outcomes[a].constraint <= opt.threshold;
          });
          std::stable_sort(order.begin(), feasible_end, by_reward);
          elite_count = std::min<std::size_t>(opt.n_elite, static_cast<std::size_t>(feasible_end - order.begin()));
        }
        break;
      }
    }
    for (std::size_t k = 0; k < kPolicyDim; ++k) {
      double mean = 0.0;
      for (std::size_t e = 0; e < elite_count; ++e) mean += samples[order[e]].params[k];
      mean /= static_cast<double>(elite_count);
      double var = 0.0;
      for (std::size_t e = 0; e < elite_count; ++e) {
        const double dlt = samples[order[e]].params[k] - mean;
        var += dlt * dlt;
      }
      mu[k] = mean;
      sigma[k] = std::sqrt(var / static_cast<double>(elite_count));
    }
  }
  result.policy.params = mu;
  result.outcome = rollout(result.policy, scenario);
  return result;
}

// ---------------------------------------------------------------------------
// Policy sets

enum class PolicyKind { constrained, penalized, reward_only, random };

inline const char* to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::constrained: return "cem-constrained";
    case PolicyKind::penalized: return "cem-penalized";
    case PolicyKind::reward_only: return "cem-reward";
    case PolicyKind::random: return "random";
  }
  return "?";
}

struct PolicySetOptions {
  CemOptions cem{Objective::constrained, 0.0, kConstraintThreshold, 100, 200, 20};
  std::array<double, 3> penalties{0.1, 1.0, 10.0};
  double random_scale = 0.3;  // std of the random policies' action values
  /// Constrained runs aim at tau * (1 - margin), margins spread over [min_margin, max_margin].
  double min_margin = 0.1;
  double max_margin = 0.5;
};

struct PolicySet {
  std::vector<Policy> policies;
  std::vector<PolicyKind> kinds;
  std::vector<Rollout> outcomes;
  double scale = 1.0;  // arms = counts / scale
  CbaiInstance instance;
};

/// k policies as arms: 20% constrained CEM (at spread-out tightened
/// thresholds), 20% penalised CEM, 20% reward-only CEM and the rest random.
/// Arms are the feature counts divided by max |J| so constraint values lie in
/// [-1, 1]; the threshold is divided by the same factor.
inline PolicySet build_policy_set(const Scenario& scenario, std::size_t k, std::uint64_t seed,
                                  const PolicySetOptions& opt = {}) {
  if (k < 2) throw std::invalid_argument("policy set needs k >= 2");
  scenario.validate();
  const std::size_t n_con = (k + 2) / 5, n_pen = k / 5, n_rew = k / 5;
  const std::size_t n_rand = k - n_con - n_pen - n_rew;

  std::vector<Policy> policies;
  std::vector<PolicyKind> kinds;
  std::uint64_t stream = 0;
  auto next_rng = [&]() { return OracleRng(seed, mix_stream(hash_label("policy-set/" + scenario.id), stream++)); };

  for (std::size_t i = 0; i < n_con; ++i) {
    CemOptions c = opt.cem;
    c.objective = Objective::constrained;
    const double margin =
        opt.min_margin + (n_con > 1 ? (opt.max_margin - opt.min_margin) * static_cast<double>(i) / static_cast<double>(n_con - 1) : 0.0);
    c.threshold = kConstraintThreshold * (1.0 - margin);
    OracleRng rng = next_rng();
    policies.push_back(cem_optimize(scenario, c, rng).policy);
    kinds.push_back(PolicyKind::constrained);
  }
  for (std::size_t i = 0; i < n_pen; ++i) {
    CemOptions c = opt.cem;
    c.objective = Objective::penalized;
    c.penalty = opt.penalties[i % opt.penalties.size()];
    OracleRng rng = next_rng();
    policies.push_back(cem_optimize(scenario, c, rng).policy);
    kinds.push_back(PolicyKind::penalized);
  }
  for (std::size_t i = 0; i < n_rew; ++i) {
    CemOptions c = opt.cem;
    c.objective = Objective::reward_only;
    OracleRng rng = next_rng();
    policies.push_back(cem_optimize(scenario, c, rng).policy);
    kinds.push_back(PolicyKind::reward_only);
  }
  OracleRng rng = next_rng();
  for (std::size_t i = 0; i < n_rand; ++i) {
    Policy p;
    for (double& a : p.params) a = opt.random_scale * rng.normal();
    policies.push_back(p);
    kinds.push_back(PolicyKind::random);
  }

  std::vector<Rollout> outcomes;
  double scale = 0.0;
  bool any_feasible = false;
  for (const Policy& p : policies) {
    outcomes.push_back(rollout(p, scenario, false));
    scale = std::max(scale, std::abs(outcomes.back().constraint));
    any_feasible = any_feasible || outcomes.back().constraint <= kConstraintThreshold;
  }
  if (!any_feasible) throw std::runtime_error("policy set has no feasible policy; regenerate with another seed");
  if (!(scale > 0.0)) scale = 1.0;

  RawInstance raw;
  raw.name = "driver-" + scenario.id + "-k" + std::to_string(k) + "-seed" + std::to_string(seed);
  for (const Rollout& o : outcomes) {
    std::vector<double> arm(o.counts.begin(), o.counts.end());
    for (double& a : arm) a /= scale;
    raw.arms.push_back(arm);
  }
  raw.reward.assign(scenario.reward_weights.begin(), scenario.reward_weights.end());
  raw.constraint.assign(kConstraintWeights.begin(), kConstraintWeights.end());
  raw.threshold = kConstraintThreshold / scale;
  raw.noise_sigma = 1.0;
  raw.feedback = Feedback::binary;
  PolicySet set{std::move(policies), std::move(kinds), std::move(outcomes), scale, validate_instance(raw)};
  return set;
}

// ---------------------------------------------------------------------------
// Penalty sweep

struct SweepRow {
  std::string kind;  // "penalized" or "constrained-baseline"
  double penalty = 0.0;
  double reward = 0.0;
  double constraint = 0.0;
  bool feasible = false;
};

/// One penalised CEM solve per penalty plus the constrained-CEM baseline (last row).
inline std::vector<SweepRow> penalty_sweep(const Scenario& scenario, const std::vector<double>& penalties,
                                           const CemOptions& cem, std::uint64_t seed) {
  if (penalties.empty()) throw std::invalid_argument("penalty sweep needs at least one penalty");
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < penalties.size(); ++i) {
    CemOptions c = cem;
    c.objective = penalties[i] == 0.0 ? Objective::reward_only : Objective::penalized;
    c.penalty = penalties[i];
    OracleRng rng(seed, mix_stream(hash_label("sweep/" + scenario.id), i));
    const CemResult r = cem_optimize(scenario, c, rng);
    rows.push_back({"penalized", penalties[i], r.outcome.reward, r.outcome.constraint,
                    r.outcome.constraint <= kConstraintThreshold});
  }
  CemOptions c = cem;
  c.objective = Objective::constrained;
  c.threshold = kConstraintThreshold;
  OracleRng rng(seed, mix_stream(hash_label("sweep-baseline/" + scenario.id), 0));
  const CemResult r = cem_optimize(scenario, c, rng);
  rows.push_back({"constrained-baseline", 0.0, r.outcome.reward, r.outcome.constraint,
                  r.outcome.constraint <= kConstraintThreshold});
  return rows;
}

}  // namespace cbai::driver
