#pragma once
// Problem definition for constrained linear best-arm identification.
//
// An instance is a finite arm set X (rows of `arms`), a known reward vector
// theta, a hidden constraint vector phi and a threshold tau. An arm x is
// feasible iff phi^T x <= tau; the goal is the feasible arm of largest
// theta^T x. Algorithms only ever see an AlgorithmView, which drops phi.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cbai {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ArmIndex = std::size_t;
using IndexSet = std::vector<ArmIndex>;

/// Raised when instance data violates the model invariants.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Feedback { gaussian, binary };

inline const char* to_string(Feedback f) { return f == Feedback::binary ? "binary" : "gaussian"; }

/// Unvalidated instance data, e.g. straight from a file or a generator.
struct RawInstance {
  std::string name;
  std::vector<std::vector<double>> arms;
  std::vector<double> reward;
  std::vector<double> constraint;
  double threshold = 0.0;
  double noise_sigma = 0.0;
  Feedback feedback = Feedback::gaussian;
};

class AlgorithmView;

/// Ground-truth problem. Immutable once built; construct through validate_instance.
class CbaiInstance {
 public:
  const std::string& name() const { return name_; }
  const Matrix& arms() const { return arms_; }
  const Vector& reward() const { return reward_; }
  const Vector& constraint() const { return constraint_; }
  double threshold() const { return threshold_; }
  double noise_sigma() const { return noise_sigma_; }
  Feedback feedback() const { return feedback_; }

  std::size_t num_arms() const { return static_cast<std::size_t>(arms_.rows()); }
  std::size_t dimension() const { return static_cast<std::size_t>(arms_.cols()); }

  auto arm(ArmIndex i) const { return arms_.row(static_cast<Eigen::Index>(i)); }
  double reward_of(ArmIndex i) const { return arm(i).dot(reward_); }
  double constraint_of(ArmIndex i) const { return arm(i).dot(constraint_); }
  bool feasible(ArmIndex i) const { return constraint_of(i) <= threshold_; }

  AlgorithmView view() const;

  /// Copy with a different noise level; everything else unchanged.
  CbaiInstance with_noise(double sigma) const {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ValidationError("noise_sigma must be finite and >= 0");
    CbaiInstance copy = *this;
    copy.noise_sigma_ = sigma;
    return copy;
  }

  CbaiInstance renamed(std::string name) const {
    CbaiInstance copy = *this;
    copy.name_ = std::move(name);
    return copy;
  }

  RawInstance to_raw() const {
    RawInstance raw;
    raw.name = name_;
    raw.arms.resize(num_arms());
    for (std::size_t i = 0; i < num_arms(); ++i) {
      raw.arms[i].resize(dimension());
      for (std::size_t j = 0; j < dimension(); ++j) raw.arms[i][j] = arms_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    raw.reward.assign(reward_.data(), reward_.data() + reward_.size());
    raw.constraint.assign(constraint_.data(), constraint_.data() + constraint_.size());
    raw.threshold = threshold_;
    raw.noise_sigma = noise_sigma_;
    raw.feedback = feedback_;
    return raw;
  }

 private:
  friend CbaiInstance validate_instance(const RawInstance& raw);
  CbaiInstance() = default;

  std::string name_;
  Matrix arms_;
  Vector reward_;
  Vector constraint_;
  double threshold_ = 0.0;
  double noise_sigma_ = 0.0;
  Feedback feedback_ = Feedback::gaussian;
};

/// What an algorithm is allowed to know: the instance minus phi.
class AlgorithmView {
 public:
  const std::string& name() const { return name_; }
  const Matrix& arms() const { return arms_; }
  const Vector& reward() const { return reward_; }
  double threshold() const { return threshold_; }
  double noise_sigma() const { return noise_sigma_; }
  Feedback feedback() const { return feedback_; }

  std::size_t num_arms() const { return static_cast<std::size_t>(arms_.rows()); }
  std::size_t dimension() const { return static_cast<std::size_t>(arms_.cols()); }
  auto arm(ArmIndex i) const { return arms_.row(static_cast<Eigen::Index>(i)); }
  double reward_of(ArmIndex i) const { return arm(i).dot(reward_); }

 private:
  friend class CbaiInstance;
  AlgorithmView() = default;

  std::string name_;
  Matrix arms_;
  Vector reward_;
  double threshold_ = 0.0;
  double noise_sigma_ = 0.0;
  Feedback feedback_ = Feedback::gaussian;
};

inline AlgorithmView CbaiInstance::view() const {
  AlgorithmView v;
  v.name_ = name_;
  v.arms_ = arms_;
  v.reward_ = reward_;
  v.threshold_ = threshold_;
  v.noise_sigma_ = noise_sigma_;
  v.feedback_ = feedback_;
  return v;
}

namespace detail {
inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}
}  // namespace detail

/// Checks every model invariant and builds the immutable instance.
/// Throws ValidationError naming the first violated invariant.
inline CbaiInstance validate_instance(const RawInstance& raw) {
  if (raw.arms.empty()) throw ValidationError("empty arm set");
  const std::size_t d = raw.arms.front().size();
  if (d == 0) throw ValidationError("arm dimension must be >= 1");
  for (std::size_t i = 0; i < raw.arms.size(); ++i) {
    if (raw.arms[i].size() != d)
      throw ValidationError("dimension mismatch: arm " + std::to_string(i) + " has " +
                            std::to_string(raw.arms[i].size()) + " entries, expected " + std::to_string(d));
    if (!detail::all_finite(raw.arms[i])) throw ValidationError("non-finite entry in arm " + std::to_string(i));
  }
  if (raw.reward.size() != d)
    throw ValidationError("dimension mismatch: reward has " + std::to_string(raw.reward.size()) + " entries, expected " +
                          std::to_string(d));
  if (raw.constraint.size() != d)
    throw ValidationError("dimension mismatch: constraint has " + std::to_string(raw.constraint.size()) +
                          " entries, expected " + std::to_string(d));
  if (!detail::all_finite(raw.reward)) throw ValidationError("non-finite entry in reward");
  if (!detail::all_finite(raw.constraint)) throw ValidationError("non-finite entry in constraint");
  if (!std::isfinite(raw.threshold)) throw ValidationError("non-finite threshold");
  if (!std::isfinite(raw.noise_sigma) || raw.noise_sigma < 0.0) throw ValidationError("noise_sigma must be finite and >= 0");

  CbaiInstance inst;
  inst.name_ = raw.name;
  const auto n = static_cast<Eigen::Index>(raw.arms.size());
  const auto dim = static_cast<Eigen::Index>(d);
  inst.arms_.resize(n, dim);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) inst.arms_(i, j) = raw.arms[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  inst.reward_ = Eigen::Map<const Vector>(raw.reward.data(), dim);
  inst.constraint_ = Eigen::Map<const Vector>(raw.constraint.data(), dim);
  inst.threshold_ = raw.threshold;
  inst.noise_sigma_ = raw.noise_sigma;
  inst.feedback_ = raw.feedback;

  bool any_feasible = false;
  for (std::size_t i = 0; i < inst.num_arms() && !any_feasible; ++i) any_feasible = inst.feasible(i);
  if (!any_feasible) throw ValidationError("no feasible arm");
  return inst;
}

/// Exhaustive scan for the best feasible arm; ties go to the lowest index.
inline ArmIndex true_optimum(const CbaiInstance& inst) {
  std::optional<ArmIndex> best;
  for (ArmIndex i = 0; i < inst.num_arms(); ++i) {
    if (!inst.feasible(i)) continue;
    if (!best || inst.reward_of(i) > inst.reward_of(*best)) best = i;
  }
  return *best;  // validation guarantees a feasible arm
}

/// Arms whose reward is at least that of `pivot` (always contains pivot).
template <typename Problem>
IndexSet superlevel_arms(const Problem& inst, ArmIndex pivot) {
  if (pivot >= inst.num_arms()) throw std::out_of_range("pivot arm index out of range");
  const double floor = inst.reward_of(pivot);
  IndexSet out;
  for (ArmIndex i = 0; i < inst.num_arms(); ++i)
    if (inst.reward_of(i) >= floor) out.push_back(i);
  return out;
}

/// Smallest distance of any arm's constraint value to the threshold.
inline double min_constraint_gap(const CbaiInstance& inst) {
  double gap = std::numeric_limits<double>::infinity();
  for (ArmIndex i = 0; i < inst.num_arms(); ++i) gap = std::min(gap, std::abs(inst.constraint_of(i) - inst.threshold()));
  return gap;
}

}  // namespace cbai
