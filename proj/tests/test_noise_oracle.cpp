#include "cbai/instances.hpp"
#include "cbai/oracle.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace cbai;

namespace {

CbaiInstance binary_instance(double value) {
  RawInstance raw{"binary", {{value}, {-1.0}}, {1.0}, {1.0}, 0.5, 1.0, Feedback::binary};
  return validate_instance(raw);
}

double sample_mean(const std::function<double()>& draw, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += draw();
  return s / n;
}

}  // namespace

TEST(Gaussian, ZeroNoiseIsExact) {
  const CbaiInstance inst = gen_irrelevant_dimensions(3, 0.1, 0.0);
  OracleRng rng(1, 2);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(observe_gaussian(inst, 3, rng), inst.constraint_of(3));
}

TEST(Gaussian, MonteCarloMean) {
  const CbaiInstance inst = gen_irrelevant_dimensions(3, 0.1, 0.05);
  OracleRng rng(7, 0);
  const double m = sample_mean([&] { return observe_gaussian(inst, 3, rng); }, 10000);
  EXPECT_NEAR(m, 1.1, 0.002);
}

TEST(Gaussian, Reproducible) {
  const CbaiInstance inst = gen_irrelevant_dimensions(4, 0.2, 0.3);
  OracleRng a(5, 9), b(5, 9), c(5, 10);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = observe_gaussian(inst, i % 5, a);
    EXPECT_EQ(x, observe_gaussian(inst, i % 5, b));
    differs = differs || x != observe_gaussian(inst, i % 5, c);
  }
  EXPECT_TRUE(differs);
}

TEST(Gaussian, OutOfRange) {
  OracleRng rng(0, 0);
  EXPECT_THROW(observe_gaussian(gen_line_1d(), 10, rng), std::out_of_range);
}

TEST(Binary, SymmetricAtZero) {
  const CbaiInstance inst = binary_instance(0.0);
  OracleRng rng(3, 3);
  int ones = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ones += observe_binary(inst, 0, rng) > 0;
  EXPECT_NEAR(static_cast<double>(ones) / n, 0.5, 3.0 * 0.5 / std::sqrt(n));
}

TEST(Binary, AlwaysPlusOneAtOne) {
  const CbaiInstance inst = binary_instance(1.0);
  OracleRng rng(3, 4);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(observe_binary(inst, 0, rng), 1.0);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(observe_binary(inst, 1, rng), -1.0);
}

TEST(Binary, MeanEqualsConstraintValue) {
  const CbaiInstance inst = binary_instance(0.4);
  OracleRng rng(8, 1);
  const int n = 100000;
  EXPECT_NEAR(sample_mean([&] { return observe_binary(inst, 0, rng); }, n), 0.4, 0.01);
}

TEST(Binary, RejectsValuesOutsideUnitInterval) {
  const CbaiInstance inst = binary_instance(1.5);
  OracleRng rng(0, 0);
  EXPECT_THROW(observe_binary(inst, 0, rng), std::domain_error);
  EXPECT_THROW(ConstraintOracle(inst, OracleRng(0, 0)), std::domain_error);
}

TEST(Unbiased, BothOraclesWithinThreeOverRootN) {
  const CbaiInstance g = gen_irrelevant_dimensions(5, 0.3, 0.5);
  const CbaiInstance b = binary_instance(-0.35);
  const int n = 40000;
  for (ArmIndex arm = 0; arm < g.num_arms(); ++arm) {
    ConstraintOracle o(g, OracleRng(arm, 77));
    EXPECT_NEAR(sample_mean([&] { return o.observe(arm); }, n), g.constraint_of(arm), 3.0 * 0.5 / std::sqrt(n));
  }
  ConstraintOracle o(b, OracleRng(1, 77));
  EXPECT_NEAR(sample_mean([&] { return o.observe(0); }, n), -0.35, 3.0 / std::sqrt(n));
}

TEST(Oracle, CountsQueriesIncludingBatches) {
  const CbaiInstance inst = gen_line_1d(0.05);
  ConstraintOracle o(inst, OracleRng(0, 0));
  o.observe(1);
  o.observe(2);
  o.observe_sum(3, 40);
  EXPECT_EQ(o.queries(), 42u);
}

TEST(Oracle, BatchedSumHasExactMoments) {
  // the batched draw must match the mean and variance of `count` single draws
  const CbaiInstance g = gen_line_1d(0.2);
  const CbaiInstance b = binary_instance(0.3);
  const std::uint64_t count = 25;
  const int reps = 20000;
  for (const CbaiInstance* inst : {&g, &b}) {
    ConstraintOracle o(*inst, OracleRng(4, 4));
    const double mean = inst->constraint_of(0);
    const double var1 = inst->feedback() == Feedback::binary ? 1.0 - mean * mean : 0.04;
    double s = 0.0, s2 = 0.0;
    for (int r = 0; r < reps; ++r) {
      const double x = o.observe_sum(0, count);
      s += x;
      s2 += x * x;
    }
    const double m = s / reps, v = s2 / reps - m * m;
    EXPECT_NEAR(m, count * mean, 4.0 * std::sqrt(count * var1 / reps));
    EXPECT_NEAR(v / (count * var1), 1.0, 0.05);
  }
}

TEST(Streams, MixIsDeterministicAndSpreads) {
  EXPECT_EQ(mix_stream(1, 2), mix_stream(1, 2));
  EXPECT_NE(mix_stream(1, 2), mix_stream(2, 1));
  EXPECT_NE(hash_label("acol"), hash_label("oracle"));
}
