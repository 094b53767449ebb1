#pragma once
// Uncertain / certainly-feasible bookkeeping shared by every algorithm.
//
//   F  <- F  u {x : u(x) <= tau}
//   rb <- max_{x in F} theta^T x
//   U  <- U \ {l(x) > tau} \ {u(x) <= tau} \ {theta^T x < rb}

#include "cbai/estimation.hpp"
#include "cbai/instance.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace cbai {

class EliminationState {
 public:
  explicit EliminationState(std::size_t num_arms)
      : in_uncertain_(num_arms, 1), in_feasible_(num_arms, 0), num_uncertain_(num_arms) {}

  IndexSet uncertain() const { return collect(in_uncertain_); }
  IndexSet feasible() const { return collect(in_feasible_); }
  bool is_uncertain(ArmIndex i) const { return in_uncertain_[i] != 0; }
  bool is_feasible(ArmIndex i) const { return in_feasible_[i] != 0; }
  std::size_t num_uncertain() const { return num_uncertain_; }
  std::size_t num_feasible() const { return num_feasible_; }
  std::size_t num_arms() const { return in_uncertain_.size(); }
  double reward_floor() const { return reward_floor_; }

  std::uint64_t round = 0;
  std::uint64_t queries_used = 0;

  /// In-place update from per-arm lower/upper constraint bounds.
  template <typename Problem, typename Lower, typename Upper>
  void apply(const Lower& lower, const Upper& upper, const Problem& view) {
    const double tau = view.threshold();
    const std::size_t n = in_uncertain_.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_feasible_[i] && upper(static_cast<Eigen::Index>(i)) <= tau) {
        in_feasible_[i] = 1;
        ++num_feasible_;
        reward_floor_ = std::max(reward_floor_, view.reward_of(i));
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_uncertain_[i]) continue;
      const auto k = static_cast<Eigen::Index>(i);
      if (lower(k) > tau || upper(k) <= tau || view.reward_of(i) < reward_floor_) {
        in_uncertain_[i] = 0;
        --num_uncertain_;
      }
    }
  }

 private:
  static IndexSet collect(const std::vector<char>& mask) {
    IndexSet out;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) out.push_back(i);
    return out;
  }

  std::vector<char> in_uncertain_;
  std::vector<char> in_feasible_;
  std::size_t num_uncertain_;
  std::size_t num_feasible_ = 0;
  double reward_floor_ = -std::numeric_limits<double>::infinity();
};

template <typename Problem>
EliminationState update_elimination(EliminationState state, const ConfidenceBounds& bounds, const Problem& view) {
  if (bounds.size() != view.num_arms()) throw std::invalid_argument("bounds must cover every arm");
  state.apply(bounds.lower, bounds.upper, view);
  return state;
}

/// Best certainly-feasible arm, lowest index on ties; none while F is empty.
template <typename Problem>
std::optional<ArmIndex> recommend_anytime(const EliminationState& state, const Problem& view) {
  std::optional<ArmIndex> best;
  for (ArmIndex i = 0; i < state.num_arms(); ++i) {
    if (!state.is_feasible(i)) continue;
    if (!best || view.reward_of(i) > view.reward_of(*best)) best = i;
  }
  return best;
}

}  // namespace cbai
