#pragma once
// Least-squares estimation of the constraint vector and confidence intervals
// l(x) = phi_hat^T x - m ||x||_{A^-1}, u(x) = phi_hat^T x + m ||x||_{A^-1}.
//
// Three multipliers m are provided:
//   static    m = R sqrt(2 ln(|X| / delta))                       (fixed allocations)
//   adaptive  m = R sqrt(d ln((1 + t L^2 / ridge) / delta)) + sqrt(ridge) S
//   tuned     m = sqrt(beta)                                      (no guarantee)
// R is the sub-Gaussian scale of the observation noise. All logs are natural.

#include "cbai/instance.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbai {

class RankDeficientError : public std::runtime_error {
 public:
  RankDeficientError(std::size_t unspanned, std::size_t dimension)
      : std::runtime_error("gram matrix is singular: " + std::to_string(unspanned) + " of " +
                           std::to_string(dimension) + " dimensions are not spanned by the observations"),
        unspanned_(unspanned) {}
  std::size_t unspanned_dimensions() const { return unspanned_; }

 private:
  std::size_t unspanned_;
};

/// Running least-squares statistics: gram = sum x x^T + ridge I, moment = sum y x.
/// A record may aggregate `count` pulls of the same arm with `value` their sum.
class ObservationLog {
 public:
  struct Entry {
    Vector arm;
    double value;
    std::uint64_t count;
  };

  explicit ObservationLog(std::size_t dimension, double ridge = 0.0, bool retain_entries = true)
      : ridge_(ridge), retain_(retain_entries) {
    if (dimension == 0) throw std::invalid_argument("dimension must be >= 1");
    if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw std::invalid_argument("ridge must be finite and >= 0");
    const auto d = static_cast<Eigen::Index>(dimension);
    gram_ = ridge * Matrix::Identity(d, d);
    moment_ = Vector::Zero(d);
  }

  void record(const Eigen::Ref<const Vector>& arm, double value) { record_batch(arm, 1, value); }

  void record_batch(const Eigen::Ref<const Vector>& arm, std::uint64_t count, double value_sum) {
    if (arm.size() != gram_.rows())
      throw std::invalid_argument("dimension mismatch: arm has " + std::to_string(arm.size()) + " entries, log expects " +
                                  std::to_string(gram_.rows()));
    if (count == 0) return;
    gram_.noalias() += static_cast<double>(count) * arm * arm.transpose();
    moment_.noalias() += value_sum * arm;
    observations_ += count;
    if (retain_) entries_.push_back({arm, value_sum, count});
  }

  const Matrix& gram() const { return gram_; }
  const Vector& moment() const { return moment_; }
  double ridge() const { return ridge_; }
  std::size_t dimension() const { return static_cast<std::size_t>(gram_.rows()); }
  std::uint64_t observations() const { return observations_; }
  const std::vector<Entry>& entries() const { return entries_; }
  bool retains_entries() const { return retain_; }

 private:
  double ridge_;
  bool retain_;
  Matrix gram_;
  Vector moment_;
  std::uint64_t observations_ = 0;
  std::vector<Entry> entries_;
};

/// Functional form of ObservationLog::record.
inline ObservationLog record(ObservationLog log, const Eigen::Ref<const Vector>& arm, double value) {
  log.record(arm, value);
  return log;
}

/// Eigen-decomposed gram with a pseudo-inverse on the spanned subspace.
class GramInverse {
 public:
  explicit GramInverse(const Matrix& gram, double rel_tol = 1e-10) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    const Vector& values = eig.eigenvalues();
    const double top = std::max(values.size() > 0 ? values.maxCoeff() : 0.0, 0.0);
    const double cut = std::max(rel_tol * top, 1e-300);
    const auto d = gram.rows();
    Matrix basis(d, 0);
    Vector inv_values(0);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < values.size(); ++i)
      if (values(i) > cut) keep.push_back(i);
    basis.resize(d, static_cast<Eigen::Index>(keep.size()));
    inv_values.resize(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
      basis.col(static_cast<Eigen::Index>(k)) = eig.eigenvectors().col(keep[k]);
      inv_values(static_cast<Eigen::Index>(k)) = 1.0 / values(keep[k]);
    }
    rank_ = keep.size();
    dimension_ = static_cast<std::size_t>(d);
    basis_ = std::move(basis);
    inv_values_ = std::move(inv_values);
    pinv_ = basis_ * inv_values_.asDiagonal() * basis_.transpose();
  }

  std::size_t rank() const { return rank_; }
  bool full_rank() const { return rank_ == dimension_; }
  const Matrix& pseudo_inverse() const { return pinv_; }

  /// ||x||_{A^+}; +infinity when x leaves the spanned subspace.
  double norm(const Eigen::Ref<const Vector>& x) const {
    const Vector coords = basis_.transpose() * x;
    const double in_span = coords.squaredNorm();
    const double total = x.squaredNorm();
    if (total - in_span > 1e-9 * total) return std::numeric_limits<double>::infinity();
    return std::sqrt(std::max(0.0, coords.cwiseAbs2().dot(inv_values_)));
  }

 private:
  std::size_t rank_ = 0;
  std::size_t dimension_ = 0;
  Matrix basis_;
  Vector inv_values_;
  Matrix pinv_;
};

/// phi_hat = gram^-1 moment. With ridge 0 the observations must span R^d.
inline Vector least_squares(const ObservationLog& log) {
  GramInverse inv(log.gram());
  if (!inv.full_rank()) throw RankDeficientError(log.dimension() - inv.rank(), log.dimension());
  return inv.pseudo_inverse() * log.moment();
}

/// Minimum-norm least squares; estimates phi^T x exactly on the spanned subspace.
inline Vector least_squares_in_span(const ObservationLog& log) {
  GramInverse inv(log.gram());
  return inv.pseudo_inverse() * log.moment();
}

struct ConfidenceBounds {
  Vector estimate;  // phi_hat^T x per arm
  Vector norm;      // ||x||_{A^-1} per arm (may be +inf outside the span)
  Vector lower;
  Vector upper;
  double multiplier = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(lower.size()); }
  double width(ArmIndex i) const { return upper(static_cast<Eigen::Index>(i)) - lower(static_cast<Eigen::Index>(i)); }
};

/// Whether arms outside the span of the data are an error or get infinite width.
enum class SpanPolicy { require_full_rank, allow_unspanned };

inline ConfidenceBounds make_bounds(Vector estimate, Vector norm, double multiplier) {
  ConfidenceBounds b;
  const auto n = estimate.size();
  b.lower.resize(n);
  b.upper.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isinf(norm(i))) {
      b.lower(i) = -std::numeric_limits<double>::infinity();
      b.upper(i) = std::numeric_limits<double>::infinity();
    } else {
      const double half = multiplier * norm(i);
      b.lower(i) = estimate(i) - half;
      b.upper(i) = estimate(i) + half;
    }
  }
  b.estimate = std::move(estimate);
  b.norm = std::move(norm);
  b.multiplier = multiplier;
  return b;
}

inline ConfidenceBounds bounds_with_multiplier(const ObservationLog& log, const Matrix& arms, double multiplier,
                                               SpanPolicy policy) {
  if (static_cast<std::size_t>(arms.cols()) != log.dimension()) throw std::invalid_argument("arm dimension does not match log");
  GramInverse inv(log.gram());
  if (policy == SpanPolicy::require_full_rank && !inv.full_rank())
    throw RankDeficientError(log.dimension() - inv.rank(), log.dimension());
  const Vector phi_hat = inv.pseudo_inverse() * log.moment();
  Vector estimate = arms * phi_hat;
  Vector norm(arms.rows());
  for (Eigen::Index i = 0; i < arms.rows(); ++i) norm(i) = inv.norm(arms.row(i).transpose());
  return make_bounds(std::move(estimate), std::move(norm), multiplier);
}

namespace detail {
inline void check_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
}
inline void check_scale(double scale) {
  if (!(scale >= 0.0) || !std::isfinite(scale)) throw std::invalid_argument("noise scale must be finite and >= 0");
}
}  // namespace detail

inline double static_multiplier(std::size_t num_arms, double delta, double noise_scale = 1.0) {
  detail::check_delta(delta);
  detail::check_scale(noise_scale);
  return noise_scale * std::sqrt(2.0 * std::log(static_cast<double>(num_arms) / delta));
}

inline double adaptive_multiplier(std::size_t dimension, double t, double arm_bound, double ridge, double norm_bound,
                                  double delta, double noise_scale = 1.0) {
  detail::check_delta(delta);
  detail::check_scale(noise_scale);
  if (!(ridge > 0.0)) throw std::invalid_argument("adaptive bounds need ridge > 0");
  const double inner = (1.0 + t * arm_bound * arm_bound / ridge) / delta;
  return noise_scale * std::sqrt(static_cast<double>(dimension) * std::log(inner)) + std::sqrt(ridge) * norm_bound;
}

inline double tuned_multiplier(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be > 0");
  return std::sqrt(beta);
}

/// Bounds valid for data from a fixed (non-adaptive) allocation.
inline ConfidenceBounds static_bounds(const ObservationLog& log, const Matrix& arms, double delta, double noise_scale = 1.0,
                                      SpanPolicy policy = SpanPolicy::require_full_rank) {
  const double m = static_multiplier(static_cast<std::size_t>(arms.rows()), delta, noise_scale);
  return bounds_with_multiplier(log, arms, m, policy);
}

/// Self-normalised bounds valid for adaptively chosen queries; t is the number of observations.
inline ConfidenceBounds adaptive_bounds(const ObservationLog& log, const Matrix& arms, double delta, double norm_bound_S,
                                        double arm_bound_L, std::uint64_t t, double noise_scale = 1.0) {
  const double m = adaptive_multiplier(log.dimension(), static_cast<double>(t), arm_bound_L, log.ridge(), norm_bound_S,
                                       delta, noise_scale);
  return bounds_with_multiplier(log, arms, m, SpanPolicy::require_full_rank);
}

/// Heuristic bounds with a hand-picked beta. Carries no coverage guarantee.
inline ConfidenceBounds tuned_bounds(const ObservationLog& log, const Matrix& arms, double beta,
                                     SpanPolicy policy = SpanPolicy::require_full_rank) {
  return bounds_with_multiplier(log, arms, tuned_multiplier(beta), policy);
}

}  // namespace cbai
