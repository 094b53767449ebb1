#pragma once
// Identification algorithms.
//
//  * run_acol         round-based, restricted design over U_t, data discarded
//                     between rounds, static bounds at delta_t = delta^2 / t^2.
//  * run_round_based  the same loop with a fixed allocation (oracle design,
//                     G-allocation or uniform) and round lengths v^t ln(|X|/delta_t).
//  * run_greedy       one query per step with adaptive or tuned bounds; the
//                     selection rule picks G-ACOL, its uniform variant, the
//                     "all arms" baselines or the reward-greedy MaxRew rules.
//
// Every runner stops when U is empty or the query budget would be exceeded,
// and then recommends the best certainly-feasible arm.

#include "cbai/design.hpp"
#include "cbai/elimination.hpp"
#include "cbai/estimation.hpp"
#include "cbai/instance.hpp"
#include "cbai/oracle.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbai {

enum class StopReason { certified, exhausted_budget };

inline const char* to_string(StopReason r) { return r == StopReason::certified ? "certified" : "exhausted-budget"; }

struct TraceRow {
  std::uint64_t round = 0;  // round index, or step index for greedy runs
  std::uint64_t queries = 0;
  std::size_t uncertain = 0;
  std::size_t feasible = 0;
  double max_width = 0.0;   // widest bound among the arms that were uncertain going in
  std::uint64_t round_length = 0;
  std::optional<ArmIndex> recommended;
};

struct RunResult {
  std::optional<ArmIndex> recommended;
  std::uint64_t queries = 0;
  std::vector<TraceRow> trace;
  bool correct = false;  // filled in by whoever knows the ground truth
  StopReason stopped_reason = StopReason::exhausted_budget;
};

inline constexpr std::uint64_t kDefaultBudget = 10'000'000;

namespace detail {

inline double max_width_over(const EliminationState& state, const ConfidenceBounds& b) {
  double w = 0.0;
  for (ArmIndex i = 0; i < state.num_arms(); ++i)
    if (state.is_uncertain(i)) w = std::max(w, b.width(i));
  return w;
}

inline void check_delta_epsilon(double delta, double epsilon) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
}

/// Pulls a rounded design into a fresh log and returns static bounds at delta_t.
inline ConfidenceBounds pull_round(const AlgorithmView& view, ConstraintOracle& oracle, const RoundedDesign& design,
                                   double delta_t, double noise_scale) {
  ObservationLog log(view.dimension(), 0.0, false);
  for (ArmIndex i = 0; i < design.counts.size(); ++i) {
    if (design.counts[i] == 0) continue;
    const double sum = oracle.observe_sum(i, design.counts[i]);
    log.record_batch(view.arm(i).transpose(), design.counts[i], sum);
  }
  return static_bounds(log, view.arms(), delta_t, noise_scale, SpanPolicy::allow_unspanned);
}

inline void finish(RunResult& r, const EliminationState& s, const AlgorithmView& view, bool certified) {
  r.recommended = recommend_anytime(s, view);
  r.stopped_reason = certified ? StopReason::certified : StopReason::exhausted_budget;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ACOL

struct AcolOptions {
  double delta = 0.05;
  double epsilon = 0.1;
  std::uint64_t budget = kDefaultBudget;
  double noise_scale = 1.0;  // sub-Gaussian scale R in the bounds
  DesignOptions design{};
};

/// Length of ACOL round t: max(ceil(2^(2t+3) ln(|X|/delta_t) (1+eps) rho), r_eps).
inline std::uint64_t acol_round_length(std::uint64_t t, std::size_t num_arms, double delta, double epsilon, double rho,
                                       std::uint64_t min_length) {
  const double td = static_cast<double>(t);
  const double delta_t = delta * delta / (td * td);
  const double raw = std::ldexp(1.0, static_cast<int>(2 * t + 3)) * std::log(static_cast<double>(num_arms) / delta_t) *
                     (1.0 + epsilon) * rho;
  const double n = std::ceil(raw - 1e-9);
  if (!(n < 1.8e19)) return UINT64_MAX;
  return std::max(static_cast<std::uint64_t>(n), min_length);
}

inline RunResult run_acol(const AlgorithmView& view, ConstraintOracle& oracle, const AcolOptions& opt = {}) {
  detail::check_delta_epsilon(opt.delta, opt.epsilon);
  const std::size_t n = view.num_arms();
  EliminationState state(n);
  RunResult result;
  std::optional<Vector> warm;

  for (std::uint64_t t = 1;; ++t) {
    if (state.num_uncertain() == 0) {
      detail::finish(result, state, view, true);
      break;
    }
    const double delta_t = opt.delta * opt.delta / static_cast<double>(t * t);
    DesignProblem problem = DesignProblem::unscaled(view.arms(), state.uncertain());
    DesignOptions dopt = opt.design;
    if (warm) dopt.warm_start = warm;
    const DesignResult design = solve_minmax_design(problem, dopt);
    warm = design.allocation.weights;

    const Vector w = pruned_weights(design.allocation.weights);
    const auto support = static_cast<std::size_t>((w.array() > 0.0).count());
    const std::uint64_t length =
        acol_round_length(t, n, opt.delta, opt.epsilon, design.objective, min_rounding_length(support, opt.epsilon));
    if (length > opt.budget - result.queries) {
      detail::finish(result, state, view, false);
      break;
    }
    const RoundedDesign rounded = round_allocation(w, length, opt.epsilon);
    const ConfidenceBounds bounds = detail::pull_round(view, oracle, rounded, delta_t, opt.noise_scale);
    result.queries += length;

    TraceRow row;
    row.round = t;
    row.round_length = length;
    row.max_width = detail::max_width_over(state, bounds);
    state.apply(bounds.lower, bounds.upper, view);
    state.round = t;
    state.queries_used = result.queries;
    row.queries = result.queries;
    row.uncertain = state.num_uncertain();
    row.feasible = state.num_feasible();
    row.recommended = recommend_anytime(state, view);
    result.trace.push_back(row);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Round-based algorithms with a fixed allocation

enum class RoundFlavor { oracle_design, g_allocation, uniform };

inline const char* to_string(RoundFlavor f) {
  switch (f) {
    case RoundFlavor::oracle_design: return "oracle";
    case RoundFlavor::g_allocation: return "g-allocation";
    case RoundFlavor::uniform: return "uniform";
  }
  return "?";
}

struct RoundBasedOptions {
  double v = 1.9;
  double delta = 0.05;
  double epsilon = 0.1;
  std::uint64_t budget = kDefaultBudget;
  double noise_scale = 1.0;
  DesignOptions design{};
};

/// Oracle design: min_lambda max_{x in X>=(x*)} ||x||^2 / (phi^T x - tau)^2. Reads phi.
inline Vector oracle_allocation(const CbaiInstance& inst, const DesignOptions& opt = {}) {
  return hclb_design(inst, true, opt).allocation.weights;
}

inline Vector g_allocation(const AlgorithmView& view, const DesignOptions& opt = {}) {
  return solve_minmax_design(DesignProblem::all_arms(view.arms()), opt).allocation.weights;
}

inline Vector uniform_allocation(const AlgorithmView& view) {
  return Vector::Constant(static_cast<Eigen::Index>(view.num_arms()), 1.0 / static_cast<double>(view.num_arms()));
}

inline std::uint64_t round_based_length(std::uint64_t t, std::size_t num_arms, double v, double delta,
                                        std::uint64_t min_length) {
  const double td = static_cast<double>(t);
  const double delta_t = delta * delta / (td * td);
  const double raw = std::ceil(std::pow(v, td) * std::log(static_cast<double>(num_arms) / delta_t) - 1e-9);
  if (!(raw < 1.8e19)) return UINT64_MAX;
  return std::max(static_cast<std::uint64_t>(raw), min_length);
}

inline RunResult run_round_based(const AlgorithmView& view, ConstraintOracle& oracle, const Vector& allocation,
                                 const RoundBasedOptions& opt = {}) {
  detail::check_delta_epsilon(opt.delta, opt.epsilon);
  if (!(opt.v > 1.0 && opt.v < 2.0)) throw std::invalid_argument("v must lie in (1, 2)");
  if (allocation.size() != static_cast<Eigen::Index>(view.num_arms()))
    throw std::invalid_argument("allocation needs one weight per arm");
  const std::size_t n = view.num_arms();
  const Vector w = pruned_weights(allocation);
  const auto support = static_cast<std::size_t>((w.array() > 0.0).count());
  const std::uint64_t min_length = min_rounding_length(support, opt.epsilon);

  EliminationState state(n);
  RunResult result;
  for (std::uint64_t t = 1;; ++t) {
    if (state.num_uncertain() == 0) {
      detail::finish(result, state, view, true);
      break;
    }
    const double delta_t = opt.delta * opt.delta / static_cast<double>(t * t);
    const std::uint64_t length = round_based_length(t, n, opt.v, opt.delta, min_length);
    if (length > opt.budget - result.queries) {
      detail::finish(result, state, view, false);
      break;
    }
    const RoundedDesign rounded = round_allocation(w, length, opt.epsilon);
    const ConfidenceBounds bounds = detail::pull_round(view, oracle, rounded, delta_t, opt.noise_scale);
    result.queries += length;

    TraceRow row;
    row.round = t;
    row.round_length = length;
    row.max_width = detail::max_width_over(state, bounds);
    state.apply(bounds.lower, bounds.upper, view);
    state.round = t;
    state.queries_used = result.queries;
    row.queries = result.queries;
    row.uncertain = state.num_uncertain();
    row.feasible = state.num_feasible();
    row.recommended = recommend_anytime(state, view);
    result.trace.push_back(row);
  }
  return result;
}

/// Convenience entry point; the oracle flavor needs the full instance.
inline RunResult run_round_based(const CbaiInstance& inst, ConstraintOracle& oracle, RoundFlavor flavor,
                                 const RoundBasedOptions& opt = {}) {
  const AlgorithmView view = inst.view();
  Vector allocation;
  switch (flavor) {
    case RoundFlavor::oracle_design: allocation = oracle_allocation(inst, opt.design); break;
    case RoundFlavor::g_allocation: allocation = g_allocation(view, opt.design); break;
    case RoundFlavor::uniform: allocation = uniform_allocation(view); break;
  }
  return run_round_based(view, oracle, allocation, opt);
}

// ---------------------------------------------------------------------------
// Greedy adaptive algorithms

enum class Selection { maxvar_uncertain, uniform_uncertain, maxvar_all, uniform_all, maxrew_uncertain, maxrew_feasible };
enum class BoundsMode { adaptive, tuned };

inline const char* to_string(Selection s) {
  switch (s) {
    case Selection::maxvar_uncertain: return "maxvar-uncertain";
    case Selection::uniform_uncertain: return "uniform-uncertain";
    case Selection::maxvar_all: return "maxvar-all";
    case Selection::uniform_all: return "uniform-all";
    case Selection::maxrew_uncertain: return "maxrew-uncertain";
    case Selection::maxrew_feasible: return "maxrew-feasible";
  }
  return "?";
}

inline const char* to_string(BoundsMode m) { return m == BoundsMode::adaptive ? "adaptive" : "tuned"; }

struct GreedyOptions {
  Selection select = Selection::maxvar_uncertain;
  BoundsMode bounds = BoundsMode::adaptive;
  double beta = 0.25;        // tuned mode
  double norm_bound_S = 1.0; // adaptive mode: ||phi|| <= S
  double arm_bound_L = 1.0;  // adaptive mode: ||x|| <= L
  double ridge = 1.0;
  double delta = 0.05;
  double noise_scale = 1.0;
  std::uint64_t budget = kDefaultBudget;
  std::uint64_t refresh_interval = 4096;  // exact recomputation of A^-1 every so often
};

namespace detail {

/// Ridge regression state with Sherman-Morrison updates of A^-1 and of the
/// per-arm quantities ||x||^2_{A^-1} and phi_hat^T x.
class IncrementalFit {
 public:
  IncrementalFit(const Matrix& arms, double ridge) : arms_(arms), ridge_(ridge) {
    const auto d = arms.cols();
    gram_ = ridge * Matrix::Identity(d, d);
    moment_ = Vector::Zero(d);
    refresh();
  }

  void add(ArmIndex a, double y) {
    const auto k = static_cast<Eigen::Index>(a);
    const Vector x = arms_.row(k).transpose();
    gram_.noalias() += x * x.transpose();
    moment_.noalias() += y * x;
    ++count_;
    if (count_ % refresh_every_ == 0) {
      refresh();
      return;
    }
    const Vector u = inv_ * x;
    const double denom = 1.0 + x.dot(u);
    const double resid = y - estimate_(k);
    inv_.noalias() -= (u * u.transpose()) / denom;
    const Vector proj = arms_ * u;
    norm2_.array() -= proj.array().square() / denom;
    estimate_.noalias() += proj * (resid / denom);
  }

  void set_refresh(std::uint64_t every) { refresh_every_ = std::max<std::uint64_t>(every, 1); }

  void refresh() {
    inv_ = gram_.ldlt().solve(Matrix::Identity(gram_.rows(), gram_.cols()));
    const Vector phi_hat = inv_ * moment_;
    estimate_ = arms_ * phi_hat;
    norm2_ = (arms_ * inv_).cwiseProduct(arms_).rowwise().sum();
  }

  const Vector& estimate() const { return estimate_; }
  const Vector& norm2() const { return norm2_; }
  const Matrix& gram() const { return gram_; }
  const Vector& moment() const { return moment_; }
  std::uint64_t count() const { return count_; }

 private:
  const Matrix& arms_;
  double ridge_;
  Matrix gram_;
  Vector moment_;
  Matrix inv_;
  Vector estimate_;
  Vector norm2_;
  std::uint64_t count_ = 0;
  std::uint64_t refresh_every_ = 4096;
};

}  // namespace detail

inline RunResult run_greedy(const AlgorithmView& view, ConstraintOracle& oracle, const GreedyOptions& opt = {}) {
  if (!(opt.ridge > 0.0)) throw std::invalid_argument("greedy algorithms need ridge > 0");
  if (!(opt.delta > 0.0 && opt.delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  if (opt.bounds == BoundsMode::tuned) tuned_multiplier(opt.beta);  // validates beta

  const std::size_t n = view.num_arms();
  const std::size_t d = view.dimension();
  EliminationState state(n);
  detail::IncrementalFit fit(view.arms(), opt.ridge);
  fit.set_refresh(opt.refresh_interval);
  RunResult result;
  Vector lower(static_cast<Eigen::Index>(n));
  Vector upper(static_cast<Eigen::Index>(n));
  std::vector<ArmIndex> pool;
  pool.reserve(n);
  OracleRng& rng = oracle.rng();

  auto select = [&]() -> ArmIndex {
    const Vector& norm2 = fit.norm2();
    auto best_of = [&](bool uncertain_only, bool feasible_only, bool by_reward) {
      std::optional<ArmIndex> best;
      double best_score = 0.0;
      for (ArmIndex i = 0; i < n; ++i) {
        if (uncertain_only && !state.is_uncertain(i)) continue;
        if (feasible_only && !state.is_feasible(i)) continue;
        const double score = by_reward ? view.reward_of(i) : norm2(static_cast<Eigen::Index>(i));
        if (!best || score > best_score) {
          best = i;
          best_score = score;
        }
      }
      return *best;
    };
    auto uniform_over_uncertain = [&]() {
      pool.clear();
      for (ArmIndex i = 0; i < n; ++i)
        if (state.is_uncertain(i)) pool.push_back(i);
      return pool[rng.index(pool.size())];
    };
    switch (opt.select) {
      case Selection::maxvar_uncertain: return best_of(true, false, false);
      case Selection::uniform_uncertain: return uniform_over_uncertain();
      case Selection::maxvar_all: return best_of(false, false, false);
      case Selection::uniform_all: return rng.index(n);
      case Selection::maxrew_uncertain: return best_of(true, false, true);
      case Selection::maxrew_feasible:
        if (state.num_feasible() == 0) return rng.index(n);  // warmup
        return best_of(false, true, true);
    }
    return 0;
  };

  auto multiplier = [&](std::uint64_t t) {
    if (opt.bounds == BoundsMode::tuned) return tuned_multiplier(opt.beta);
    return adaptive_multiplier(d, static_cast<double>(t), opt.arm_bound_L, opt.ridge, opt.norm_bound_S, opt.delta,
                               opt.noise_scale);
  };

  std::size_t last_u = n + 1;
  std::size_t last_f = n + 1;
  TraceRow pending;
  bool certified = false;
  while (result.queries < opt.budget) {
    const ArmIndex a = select();
    const double y = oracle.observe(a);
    ++result.queries;
    fit.add(a, y);

    const double m = multiplier(result.queries);
    const Vector& est = fit.estimate();
    const Vector& norm2 = fit.norm2();
    double max_width = 0.0;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
      const double half = m * std::sqrt(std::max(norm2(i), 0.0));
      lower(i) = est(i) - half;
      upper(i) = est(i) + half;
      if (state.is_uncertain(static_cast<ArmIndex>(i))) max_width = std::max(max_width, 2.0 * half);
    }
    state.apply(lower, upper, view);
    state.round = result.queries;
    state.queries_used = result.queries;

    pending.round = result.queries;
    pending.queries = result.queries;
    pending.uncertain = state.num_uncertain();
    pending.feasible = state.num_feasible();
    pending.max_width = max_width;
    pending.round_length = 1;
    if (pending.uncertain != last_u || pending.feasible != last_f) {
      pending.recommended = recommend_anytime(state, view);
      result.trace.push_back(pending);
      last_u = pending.uncertain;
      last_f = pending.feasible;
    }
    if (state.num_uncertain() == 0) {
      certified = true;
      break;
    }
  }
  if (result.trace.empty() || result.trace.back().queries != result.queries) {
    pending.recommended = recommend_anytime(state, view);
    result.trace.push_back(pending);
  }
  detail::finish(result, state, view, certified);
  return result;
}

}  // namespace cbai
