#include "cbai/driver.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>

using namespace cbai;
using namespace cbai::driver;

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;

CemOptions desk_cem(Objective obj) {
  CemOptions o;
  o.objective = obj;
  o.n_iter = 100;
  o.n_samp = 200;
  o.n_elite = 20;
  return o;
}

}  // namespace

TEST(Step, CoastingStops) {
  const CarState n = step({0.0, 0.0, kHalfPi, 0.5}, {0.0, 0.0});
  EXPECT_NEAR(n.x, 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(n.y, 0.5);
  EXPECT_DOUBLE_EQ(n.heading, kHalfPi);
  EXPECT_DOUBLE_EQ(n.v, 0.0);
}

TEST(Step, VelocityIsClipped) {
  EXPECT_DOUBLE_EQ(step({0, 0, 0, 1.0}, {0.0, 5.0}).v, 1.0);
  EXPECT_DOUBLE_EQ(step({0, 0, 0, -1.0}, {0.0, -5.0}).v, -1.0);
}

TEST(Step, NoTurningAtStandstill) { EXPECT_DOUBLE_EQ(step({0, 0, 0.3, 0.0}, {7.0, 0.0}).heading, 0.3); }

TEST(Features, Indicators) {
  EXPECT_DOUBLE_EQ(features({0, 0, kHalfPi, 0.4}, {})[0], 0.0);
  const Features slow = features({0, 0, kHalfPi, -0.1}, {});
  EXPECT_EQ(slow[5], 1.0);
  EXPECT_EQ(slow[6], 0.0);
  const Features fast = features({0, 0, kHalfPi, 0.7}, {});
  EXPECT_EQ(fast[5], 0.0);
  EXPECT_EQ(fast[6], 1.0);
  EXPECT_EQ(features({0.5, 0, kHalfPi, 0.4}, {})[2], 1.0);
  EXPECT_EQ(features({0.25, 0, kHalfPi, 0.4}, {})[2], 0.0);
  EXPECT_EQ(fast[8], 1.0);
}

TEST(Features, RangesAndLaneSigmoid) {
  for (double x : {-0.4, -0.2, -0.1, 0.0, 0.05, 0.2, 0.31})
    for (double h : {0.0, 0.7, kHalfPi, 3.0}) {
      const Features f = features({x, 1.0, h, 0.3}, {});
      EXPECT_GT(f[3], 0.0);
      EXPECT_LE(f[3], 1.0);  // saturates to 1.0 in double precision away from lane centres
      EXPECT_GE(f[4], 0.0);
      EXPECT_LE(f[4], 1.0);
    }
  EXPECT_LT(features({0.2, 0, kHalfPi, 0.4}, {})[3], 1e-4);  // on a lane centre
  EXPECT_GT(features({0.1, 0, kHalfPi, 0.4}, {})[3], 0.999);  // between lanes
}

TEST(Features, FarCarIsInvisible) {
  const std::vector<CarState> far{{0.0, 5.0, kHalfPi, 0.2}};
  EXPECT_LT(features({0, 0, kHalfPi, 0.4}, far)[7], 1e-6);
  const std::vector<CarState> on_top{{0.0, 0.0, kHalfPi, 0.2}};
  EXPECT_NEAR(features({0, 0, kHalfPi, 0.4}, on_top)[7], std::exp(30.0 * 0.01), 1e-12);
}

TEST(Rollout, StandstillKeepsPositionalFeatures) {
  Scenario s = make_scenario("base");
  s.initial_state.v = 0.0;
  const Rollout r = rollout(Policy{}, s);
  const Features f0 = features(s.initial_state, {});
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    if (k == 7) continue;  // the other car keeps moving
    EXPECT_NEAR(r.counts[k], static_cast<double>(kHorizon) * f0[k], 1e-12) << "feature " << k;
  }
  ASSERT_EQ(r.trajectory.size(), kHorizon + 1);
  for (const CarState& c : r.trajectory) EXPECT_EQ(c.y, 0.0);
}

TEST(Rollout, DeterministicAndVelocityBounded) {
  const Scenario s = make_scenario("different-environment");
  OracleRng rng(3, 3);
  Policy p;
  for (double& a : p.params) a = 2.0 * rng.normal();
  const Rollout a = rollout(p, s), b = rollout(p, s);
  EXPECT_EQ(a.counts, b.counts);
  for (const CarState& c : a.trajectory) {
    EXPECT_GE(c.v, -1.0);
    EXPECT_LE(c.v, 1.0);
  }
}

TEST(Rollout, GoldenCounts) {
  const Scenario s = make_scenario("base");
  OracleRng rng(0, hash_label("golden"));
  Policy p;
  for (double& a : p.params) a = 0.5 * rng.normal();
  const Features expect{-6.9879943516347014, -53.432960723378052, 16, 19.000045397868703, 15.440239901588841,
                        8, 3, 1.1512214609382885, 20};
  const Rollout r = rollout(p, s);
  for (std::size_t k = 0; k < kNumFeatures; ++k)
    EXPECT_NEAR(r.counts[k], expect[k], 1e-12 * std::max(1.0, std::abs(expect[k]))) << "feature " << k;
}

TEST(Rollout, ReturnsAreLinearInCounts) {
  for (const char* id : {"base", "different-reward", "different-environment"}) {
    const Scenario s = make_scenario(id);
    OracleRng rng(1, hash_label(id));
    Policy p;
    for (double& a : p.params) a = rng.normal();
    const Rollout r = rollout(p, s);
    double g = 0.0, j = 0.0;
    for (std::size_t t = 1; t <= kHorizon; ++t) {
      const Features f = features(r.trajectory[t], s.others_at(t));
      g += dot(f, s.reward_weights);
      j += dot(f, kConstraintWeights);
    }
    EXPECT_NEAR(r.reward, g, 1e-9);
    EXPECT_NEAR(r.constraint, j, 1e-9);
  }
}

TEST(Rollout, RejectsShortPolicy) {
  Policy p;
  p.params.resize(10);
  EXPECT_THROW(rollout(p, make_scenario("base")), std::invalid_argument);
}

TEST(Cem, ConstrainedMeetsThresholdNearBestSample) {
  const Scenario s = make_scenario("base");
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    OracleRng rng(seed, hash_label("cem-example"));
    const CemResult r = cem_optimize(s, desk_cem(Objective::constrained), rng);
    EXPECT_LE(r.outcome.constraint, kConstraintThreshold) << "seed " << seed;
    ASSERT_TRUE(std::isfinite(r.best_feasible_sampled)) << "seed " << seed;
    EXPECT_GE(r.outcome.reward, r.best_feasible_sampled - 0.1 * std::abs(r.best_feasible_sampled)) << "seed " << seed;
  }
}

TEST(Cem, AllFeasibleConstrainedEqualsRewardSort) {
  // with a threshold nothing can exceed, the constrained rule sorts by reward only
  const Scenario s = make_scenario("base");
  CemOptions c = desk_cem(Objective::constrained);
  c.n_iter = 5;
  c.threshold = 1e300;
  CemOptions r = c;
  r.objective = Objective::reward_only;
  OracleRng a(2, 2), b(2, 2);
  EXPECT_EQ(cem_optimize(s, c, a).policy.params, cem_optimize(s, r, b).policy.params);
}

TEST(Cem, ParameterContract) {
  const Scenario s = make_scenario("base");
  OracleRng rng(0, 0);
  CemOptions o;
  o.n_iter = 0;
  EXPECT_THROW(cem_optimize(s, o, rng), std::invalid_argument);
  o.n_iter = 1;
  o.n_elite = o.n_samp + 1;
  EXPECT_THROW(cem_optimize(s, o, rng), std::invalid_argument);
  o.n_elite = 10;
  const CemResult one = cem_optimize(s, o, rng);
  EXPECT_NE(one.policy.params, std::vector<double>(kPolicyDim, 0.0));  // one fit moved the mean
}

TEST(Scenarios, BuiltInsAndUnknown) {
  EXPECT_EQ(make_scenario("base").other_cars.size(), 1u);
  EXPECT_EQ(make_scenario("different-environment").other_cars.size(), 3u);
  EXPECT_EQ(make_scenario("different-reward").reward_weights[1], 1.0);
  EXPECT_THROW(make_scenario("highway"), std::invalid_argument);
}

TEST(Scenarios, FixtureFilesMatchBuiltIns) {
  for (const char* id : {"base", "different-reward", "different-environment"}) {
    const Scenario file = load_scenario(std::string(CBAI_SOURCE_DIR) + "/data/scenarios/" + id + ".json");
    EXPECT_EQ(to_json(file), to_json(make_scenario(id))) << id;
  }
}

TEST(Scenarios, ShortTrajectoryRejected) {
  nlohmann::json j = to_json(make_scenario("base"));
  j["other_cars"][0].erase(0);
  EXPECT_THROW(scenario_from_json(j), std::invalid_argument);
  j.erase("reward_weights");
  EXPECT_THROW(scenario_from_json(j), ParseError);
}

TEST(PolicySet, NormalizedValidatedAndOptimumIsCem) {
  const PolicySet set = build_policy_set(make_scenario("base"), 100, 0);
  const CbaiInstance& inst = set.instance;
  EXPECT_EQ(inst.num_arms(), 100u);
  EXPECT_EQ(inst.feedback(), Feedback::binary);
  for (ArmIndex i = 0; i < inst.num_arms(); ++i) EXPECT_LE(std::abs(inst.constraint_of(i)), 1.0 + 1e-12);
  EXPECT_NO_THROW(validate_instance(inst.to_raw()));
  EXPECT_EQ(std::count(set.kinds.begin(), set.kinds.end(), PolicyKind::constrained), 20);
  EXPECT_EQ(std::count(set.kinds.begin(), set.kinds.end(), PolicyKind::penalized), 20);
  EXPECT_EQ(std::count(set.kinds.begin(), set.kinds.end(), PolicyKind::reward_only), 20);
  EXPECT_EQ(std::count(set.kinds.begin(), set.kinds.end(), PolicyKind::random), 40);
  const ArmIndex best = true_optimum(inst);
  EXPECT_NE(set.kinds[best], PolicyKind::random);
  // feasibility after scaling agrees with J <= tau before it
  for (ArmIndex i = 0; i < inst.num_arms(); ++i)
    EXPECT_EQ(inst.feasible(i), set.outcomes[i].constraint <= kConstraintThreshold) << i;
}

TEST(PolicySet, Reproducible) {
  const PolicySet a = build_policy_set(make_scenario("different-reward"), 10, 4);
  const PolicySet b = build_policy_set(make_scenario("different-reward"), 10, 4);
  EXPECT_TRUE((a.instance.arms().array() == b.instance.arms().array()).all());
  EXPECT_THROW(build_policy_set(make_scenario("base"), 1, 0), std::invalid_argument);
}

TEST(Sweep, ZeroPenaltyIsRewardOnly) {
  const Scenario s = make_scenario("base");
  CemOptions c = desk_cem(Objective::penalized);
  c.n_iter = 10;
  const auto rows = penalty_sweep(s, {0.0}, c, 5);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows.back().kind, "constrained-baseline");
  CemOptions r = c;
  r.objective = Objective::reward_only;
  OracleRng rng(5, mix_stream(hash_label("sweep/base"), 0));
  EXPECT_EQ(rows[0].reward, cem_optimize(s, r, rng).outcome.reward);
  EXPECT_THROW(penalty_sweep(s, {}, c, 0), std::invalid_argument);
}

TEST(Sweep, LargePenaltyIsFeasible) {
  const auto rows = penalty_sweep(make_scenario("base"), {1000.0}, desk_cem(Objective::penalized), 0);
  EXPECT_TRUE(rows[0].feasible);
  EXPECT_LE(rows[0].constraint, kConstraintThreshold);
}
