#pragma once
// Min-max experimental design over a finite arm set:
//
//   rho* = min_{lambda in simplex} max_{x in targets} ||x||^2_{A_lambda^-1} / c_x^2,
//   A_lambda = sum_j lambda_j a_j a_j^T.
//
// Covers G-allocation (targets = all arms, c = 1), the restricted allocation
// over the uncertain set, the oracle design and the H_CLB quantities
// (c_x = |phi^T x - tau|).
//
// The solver is a log-barrier interior-point method on the epigraph form
// (min t s.t. every scaled norm <= t), with Newton centering steps. Each
// centred point yields a lower bound through
//   LB(lambda, mu) = 2 G_mu(lambda) - max_j sum_x mu_x (x^T A^-1 a_j)^2 / c_x^2,
// where G_mu = sum_x mu_x ||x||^2 / c_x^2 (a Frank-Wolfe gap of the convex
// function G_mu, which lower-bounds the min-max value for any mu). The
// relative gap between the best primal value and the best lower bound
// certifies convergence.

#include "cbai/estimation.hpp"
#include "cbai/instance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbai {

/// Probability weights over arms and the induced design matrix.
struct Allocation {
  Vector weights;
  Matrix design_matrix;

  static Allocation from_weights(const Matrix& arms, Vector weights) {
    Allocation a;
    a.design_matrix = arms.transpose() * weights.asDiagonal() * arms;
    a.weights = std::move(weights);
    return a;
  }
  static Allocation uniform(const Matrix& arms) {
    const auto n = arms.rows();
    return from_weights(arms, Vector::Constant(n, 1.0 / static_cast<double>(n)));
  }
  std::size_t support_size(double cutoff = 0.0) const {
    return static_cast<std::size_t>((weights.array() > cutoff).count());
  }
};

struct DesignProblem {
  Matrix arms;      // rows a_j, define A_lambda
  IndexSet targets; // rows of `arms` the max runs over
  Vector scales;    // c_x per target, > 0

  static DesignProblem unscaled(const Matrix& arms, IndexSet targets) {
    DesignProblem p{arms, std::move(targets), Vector()};
    p.scales = Vector::Ones(static_cast<Eigen::Index>(p.targets.size()));
    return p;
  }
  static DesignProblem all_arms(const Matrix& arms) {
    IndexSet all(static_cast<std::size_t>(arms.rows()));
    std::iota(all.begin(), all.end(), ArmIndex{0});
    return unscaled(arms, std::move(all));
  }

  void validate() const {
    if (arms.rows() == 0) throw std::invalid_argument("design problem has no arms");
    if (targets.empty()) throw std::invalid_argument("design problem has no targets");
    if (static_cast<std::size_t>(scales.size()) != targets.size())
      throw std::invalid_argument("one scale per target required");
    for (Eigen::Index i = 0; i < scales.size(); ++i)
      if (!(scales(i) > 0.0) || !std::isfinite(scales(i))) throw std::invalid_argument("design scales must be finite and > 0");
    for (ArmIndex t : targets)
      if (t >= static_cast<std::size_t>(arms.rows())) throw std::out_of_range("design target index out of range");
  }
};

struct DesignResult {
  Allocation allocation;
  double objective = 0.0;    // max scaled norm at the returned allocation (rho*)
  double lower_bound = 0.0;  // certified lower bound on the optimum
  std::size_t iterations = 0;
  bool converged = false;

  double relative_gap() const { return objective > 0 ? (objective - lower_bound) / objective : 0.0; }
};

struct DesignOptions {
  double tolerance = 1e-4;
  std::size_t max_iterations = 100000;
  /// Optional starting weights (e.g. the previous round's design).
  std::optional<Vector> warm_start;
};

/// Scaled max norm at weights `w`, with pseudo-inverse semantics: targets
/// outside the span of the support score +infinity.
inline double design_objective(const DesignProblem& problem, const Vector& w) {
  const Matrix a = problem.arms.transpose() * w.asDiagonal() * problem.arms;
  GramInverse inv(a);
  double best = 0.0;
  for (std::size_t k = 0; k < problem.targets.size(); ++k) {
    const double nrm = inv.norm(problem.arms.row(static_cast<Eigen::Index>(problem.targets[k])).transpose());
    const double c = problem.scales(static_cast<Eigen::Index>(k));
    best = std::max(best, nrm * nrm / (c * c));
  }
  return best;
}

namespace detail {

/// Evaluation of the scaled norms at a strictly positive weight vector, in
/// coordinates of the span of the arms (where A_lambda is positive definite).
struct DesignEval {
  bool ok = false;
  Vector norms;    // g_x per target (scaled squared norms)
  Matrix cross;    // P(j, x) = a_j^T A^-1 x / c_x
  double max_norm = 0.0;
};

class ReducedDesign {
 public:
  explicit ReducedDesign(const DesignProblem& p) {
    // orthonormal basis of the row space of the arms
    Eigen::JacobiSVD<Matrix> svd(p.arms, Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    const double top = sv.size() ? sv(0) : 0.0;
    if (!(top > 0.0)) throw std::invalid_argument("degenerate design problem: all arms are zero");
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      if (sv(i) > 1e-12 * top) ++rank;
    const Matrix basis = svd.matrixV().leftCols(rank);
    arms_ = p.arms * basis;
    targets_.resize(static_cast<Eigen::Index>(p.targets.size()), rank);
    for (std::size_t k = 0; k < p.targets.size(); ++k)
      targets_.row(static_cast<Eigen::Index>(k)) =
          arms_.row(static_cast<Eigen::Index>(p.targets[k])) / p.scales(static_cast<Eigen::Index>(k));
    if (targets_.rowwise().squaredNorm().maxCoeff() == 0.0)
      throw std::invalid_argument("degenerate design problem: all targets are zero vectors");
  }

  DesignEval evaluate(const Vector& w) const {
    DesignEval e;
    const Matrix a = arms_.transpose() * w.asDiagonal() * arms_;
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) return e;
    const Matrix solved = llt.solve(targets_.transpose());  // r x m
    if (!solved.allFinite()) return e;
    e.norms = (targets_.transpose().array() * solved.array()).colwise().sum().transpose();
    e.cross = arms_ * solved;  // n x m
    e.max_norm = e.norms.maxCoeff();
    e.ok = std::isfinite(e.max_norm) && e.max_norm > 0.0;
    return e;
  }

  /// K = A_red A^-1 A_red^T, the arm-by-arm kernel under weights w.
  Matrix kernel(const Vector& w) const {
    const Matrix a = arms_.transpose() * w.asDiagonal() * arms_;
    Eigen::LLT<Matrix> llt(a);
    return arms_ * llt.solve(arms_.transpose());
  }

  void rescale_targets(double factor) { targets_ /= factor; }

  std::size_t num_arms() const { return static_cast<std::size_t>(arms_.rows()); }
  std::size_t num_targets() const { return static_cast<std::size_t>(targets_.rows()); }

 private:
  Matrix arms_;
  Matrix targets_;
};

}  // namespace detail

/// Solves the min-max design problem to the requested relative gap; the
/// result carries a certified lower bound and a convergence flag (best
/// iterate is returned when max_iterations Newton steps are used up).
inline DesignResult solve_minmax_design(const DesignProblem& problem, const DesignOptions& options = {}) {
  problem.validate();
  detail::ReducedDesign reduced(problem);
  const std::size_t n = reduced.num_arms();
  const std::size_t m = reduced.num_targets();
  const auto ni = static_cast<Eigen::Index>(n);

  Vector w = Vector::Constant(ni, 1.0 / static_cast<double>(n));
  if (options.warm_start && options.warm_start->size() == ni) {
    Vector ws = options.warm_start->cwiseMax(0.0);
    if (ws.sum() > 0) w = 0.5 * ws / ws.sum() + 0.5 * w;
  }
  detail::DesignEval eval = reduced.evaluate(w);
  if (!eval.ok) {
    w = Vector::Constant(ni, 1.0 / static_cast<double>(n));
    eval = reduced.evaluate(w);
    if (!eval.ok) throw std::runtime_error("design problem is numerically singular");
  }

  DesignResult result;
  auto finish = [&](const Vector& weights, double value, double lb, std::size_t iters, bool conv) {
    result.allocation = Allocation::from_weights(problem.arms, weights);
    result.objective = value;
    result.lower_bound = std::min(lb, value);
    result.iterations = iters;
    result.converged = conv;
    return result;
  };
  if (n == 1) return finish(w, eval.max_norm, eval.max_norm, 0, true);

  // normalise so the starting objective is 1
  const double unit = eval.max_norm;
  reduced.rescale_targets(std::sqrt(unit));
  eval = reduced.evaluate(w);

  // Log-barrier method on  min t  s.t.  g_x(lambda) <= t,  lambda > 0,  sum lambda = 1.
  double t = 1.05 * eval.max_norm + 1e-3;
  double barrier = static_cast<double>(m + n);
  Vector best_w = w;
  double best_value = eval.max_norm;
  double best_lb = 0.0;
  std::size_t steps = 0;
  bool converged = false;

  auto phi = [&](const detail::DesignEval& e, const Vector& lam, double tt) {
    double v = barrier * tt;
    for (Eigen::Index x = 0; x < e.norms.size(); ++x) v -= std::log(tt - e.norms(x));
    v -= lam.array().log().sum();
    return v;
  };

  while (steps < options.max_iterations) {
    // centering by equality-constrained Newton
    for (int inner = 0; inner < 200 && steps < options.max_iterations; ++inner, ++steps) {
      const Vector h = (t - eval.norms.array()).matrix();
      const Vector inv_h = h.cwiseInverse();
      const Matrix q2 = eval.cross.array().square().matrix();  // n x m
      Vector grad(ni + 1);
      grad.head(ni) = -(q2 * inv_h) - w.cwiseInverse();
      grad(ni) = barrier - inv_h.sum();

      Matrix hess = Matrix::Zero(ni + 1, ni + 1);
      const Vector inv_h2 = inv_h.cwiseAbs2();
      hess.topLeftCorner(ni, ni).noalias() = q2 * inv_h2.asDiagonal() * q2.transpose();
      const Vector cross_t = q2 * inv_h2;
      hess.block(0, ni, ni, 1) = cross_t;
      hess.block(ni, 0, 1, ni) = cross_t.transpose();
      hess(ni, ni) = inv_h2.sum();
      const Matrix kernel = reduced.kernel(w);
      const Matrix qh = eval.cross * inv_h.cwiseSqrt().asDiagonal();
      hess.topLeftCorner(ni, ni).array() += 2.0 * ((qh * qh.transpose()).array() * kernel.array());
      hess.topLeftCorner(ni, ni).diagonal() += w.cwiseInverse().cwiseAbs2();

      Matrix kkt = Matrix::Zero(ni + 2, ni + 2);
      kkt.topLeftCorner(ni + 1, ni + 1) = hess;
      kkt.block(0, ni + 1, ni, 1).setOnes();
      kkt.block(ni + 1, 0, 1, ni).setOnes();
      Vector rhs = Vector::Zero(ni + 2);
      rhs.head(ni + 1) = -grad;
      const Vector sol = kkt.partialPivLu().solve(rhs);
      const Vector dir_w = sol.head(ni);
      const double dir_t = sol(ni);
      const double decrement = -(grad.head(ni).dot(dir_w) + grad(ni) * dir_t);
      if (!std::isfinite(decrement) || decrement / 2.0 <= 1e-10) break;

      const double phi0 = phi(eval, w, t);
      double alpha = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
        const Vector cand = w + alpha * dir_w;
        const double cand_t = t + alpha * dir_t;
        if (cand.minCoeff() <= 0.0) continue;
        const detail::DesignEval ce = reduced.evaluate(cand);
        if (!ce.ok || ce.max_norm >= cand_t) continue;
        if (phi(ce, cand, cand_t) <= phi0 - 0.25 * alpha * decrement) {
          w = cand / cand.sum();
          t = cand_t;
          eval = reduced.evaluate(w);
          moved = true;
          break;
        }
      }
      if (!moved || t <= eval.max_norm) {
        t = std::max(t, eval.max_norm * (1.0 + 1e-12) + 1e-300);
        break;
      }
    }

    // certificate from the barrier's dual weights mu_x = 1 / (barrier * (t - g_x))
    Vector mu = (t - eval.norms.array()).inverse().matrix();
    mu /= mu.sum();
    const Vector pull = eval.cross.array().square().matrix() * mu;
    best_lb = std::max(best_lb, 2.0 * eval.norms.dot(mu) - pull.maxCoeff());
    if (eval.max_norm < best_value) {
      best_value = eval.max_norm;
      best_w = w;
    }
    if (best_value - best_lb <= options.tolerance * best_value) {
      converged = true;
      break;
    }
    if (barrier > 1e14) break;
    barrier *= 8.0;
  }
  // Interior points keep every weight positive; drop the negligible ones when
  // the certified gap survives, so rounding sees the true support.
  for (double cut : {1e-2, 1e-3, 1e-4}) {
    Vector trial = best_w;
    const double floor = cut / static_cast<double>(n);
    for (Eigen::Index i = 0; i < trial.size(); ++i)
      if (trial(i) < floor) trial(i) = 0.0;
    if (trial.sum() <= 0.0 || (trial.array() == best_w.array()).all()) continue;
    trial /= trial.sum();
    const double value = design_objective(problem, trial) / unit;
    if (std::isfinite(value) && value - best_lb <= options.tolerance * value) {
      best_w = trial;
      best_value = value;
      break;
    }
  }
  return finish(best_w, best_value * unit, best_lb * unit, steps, converged);
}

struct GridDesignResult {
  Allocation allocation;
  double objective = std::numeric_limits<double>::infinity();
};

/// Exhaustive search over the simplex grid {k * resolution}. Test oracle for
/// small problems (at most 4 arms).
inline GridDesignResult grid_oracle_design(const DesignProblem& problem, double resolution) {
  problem.validate();
  const auto n = static_cast<std::size_t>(problem.arms.rows());
  if (n > 4) throw std::invalid_argument("grid oracle supports at most 4 arms, got " + std::to_string(n));
  if (!(resolution > 0.0 && resolution <= 1.0)) throw std::invalid_argument("grid resolution must lie in (0, 1]");
  const auto steps = static_cast<long>(std::llround(1.0 / resolution));

  GridDesignResult best;
  Vector w(static_cast<Eigen::Index>(n));
  std::vector<long> k(n, 0);
  // enumerate compositions of `steps` into n nonnegative parts
  auto visit = [&]() {
    for (std::size_t i = 0; i < n; ++i) w(static_cast<Eigen::Index>(i)) = static_cast<double>(k[i]) / static_cast<double>(steps);
    const double value = design_objective(problem, w);
    if (value < best.objective) {
      best.objective = value;
      best.allocation = Allocation::from_weights(problem.arms, w);
    }
  };
  auto recurse = [&](auto&& self, std::size_t pos, long remaining) -> void {
    if (pos + 1 == n) {
      k[pos] = remaining;
      visit();
      return;
    }
    for (long v = 0; v <= remaining; ++v) {
      k[pos] = v;
      self(self, pos + 1, remaining - v);
    }
  };
  recurse(recurse, 0, steps);
  return best;
}

/// Integer pull counts from a continuous allocation.
struct RoundedDesign {
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;
  double epsilon = 0.0;
};

inline constexpr double kSupportCutoff = 1e-7;

/// Minimum number of pulls for which rounding keeps the (1+eps) guarantee.
inline std::uint64_t min_rounding_length(std::size_t support, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  const double p = static_cast<double>(support);
  return static_cast<std::uint64_t>(std::ceil(p * (1.0 + epsilon) / epsilon - 1e-9));
}

inline Vector pruned_weights(const Vector& weights) {
  Vector w = weights;
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (!(w(i) >= kSupportCutoff)) w(i) = 0.0;
  const double s = w.sum();
  if (!(s > 0.0)) throw std::invalid_argument("allocation has no weight above the support cutoff");
  return w / s;
}

/// Efficient apportionment: every arm ends with n_i >= (n - p) lambda_i, so
/// for n >= r(eps) each ||x||^2 under the integer design is at most
/// (1 + eps) / n times its value under lambda.
inline RoundedDesign round_allocation(const Vector& weights, std::uint64_t n, double epsilon) {
  const Vector w = pruned_weights(weights);
  std::vector<std::size_t> support;
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w(i) > 0.0) support.push_back(static_cast<std::size_t>(i));
  const std::size_t p = support.size();
  const std::uint64_t needed = min_rounding_length(p, epsilon);
  if (n < needed)
    throw std::invalid_argument("rounding needs n >= " + std::to_string(needed) + " for support " + std::to_string(p) +
                                ", got " + std::to_string(n));

  RoundedDesign out;
  out.counts.assign(static_cast<std::size_t>(w.size()), 0);
  out.total = n;
  out.epsilon = epsilon;
  const double base = static_cast<double>(n) - static_cast<double>(p) / 2.0;
  std::uint64_t sum = 0;
  for (std::size_t i : support) {
    auto c = static_cast<std::uint64_t>(std::ceil(base * w(static_cast<Eigen::Index>(i))));
    out.counts[i] = std::max<std::uint64_t>(c, 1);
    sum += out.counts[i];
  }
  auto ratio = [&](std::size_t i, double offset) {
    return (static_cast<double>(out.counts[i]) + offset) / w(static_cast<Eigen::Index>(i));
  };
  while (sum < n) {
    std::size_t pick = support.front();
    for (std::size_t i : support)
      if (ratio(i, 0.0) < ratio(pick, 0.0)) pick = i;
    ++out.counts[pick];
    ++sum;
  }
  while (sum > n) {
    std::size_t pick = support.front();
    for (std::size_t i : support)
      if (ratio(i, -1.0) > ratio(pick, -1.0)) pick = i;
    --out.counts[pick];
    --sum;
  }
  return out;
}

/// Sample-complexity quantity min_lambda max_x ||x||^2 / (phi^T x - tau)^2.
/// restricted = true maximises over arms at least as rewarding as the
/// optimum (H_CLB); otherwise over all arms.
inline DesignResult hclb_design(const CbaiInstance& inst, bool restricted, const DesignOptions& options = {}) {
  IndexSet targets;
  if (restricted) {
    targets = superlevel_arms(inst, true_optimum(inst));
  } else {
    targets.resize(inst.num_arms());
    std::iota(targets.begin(), targets.end(), ArmIndex{0});
  }
  DesignProblem p{inst.arms(), targets, Vector(static_cast<Eigen::Index>(targets.size()))};
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const double gap = std::abs(inst.constraint_of(targets[k]) - inst.threshold());
    if (gap == 0.0)
      throw std::domain_error("arm " + std::to_string(targets[k]) + " lies exactly on the constraint boundary");
    p.scales(static_cast<Eigen::Index>(k)) = gap;
  }
  return solve_minmax_design(p, options);
}

inline double compute_hclb(const CbaiInstance& inst, bool restricted, const DesignOptions& options = {}) {
  return hclb_design(inst, restricted, options).objective;
}

}  // namespace cbai
