#pragma once
// Simulated constraint feedback. Gaussian observations phi^T x + eta, and the
// binary model P(y = +1) = (phi^T x + 1) / 2 used for preference feedback.

#include "cbai/instance.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>

namespace cbai {

/// Seeded random stream. Identical (seed, stream_id) give identical draws.
class OracleRng {
 public:
  OracleRng(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_id_(stream_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::mt19937_64& engine() { return engine_; }

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
};

/// FNV-1a over bytes; used to derive stream ids from labels.
inline std::uint64_t hash_label(std::string_view text, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t mix_stream(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finaliser on the combined words
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace detail {
inline void check_arm(const CbaiInstance& inst, ArmIndex arm) {
  if (arm >= inst.num_arms()) throw std::out_of_range("arm index out of range");
}
inline double binary_mean(const CbaiInstance& inst, ArmIndex arm) {
  const double c = inst.constraint_of(arm);
  if (!(c >= -1.0 && c <= 1.0))
    throw std::domain_error("binary feedback requires constraint values in [-1, 1], arm " + std::to_string(arm) +
                            " has " + std::to_string(c));
  return c;
}
}  // namespace detail

inline double observe_gaussian(const CbaiInstance& inst, ArmIndex arm, OracleRng& rng) {
  detail::check_arm(inst, arm);
  const double mean = inst.constraint_of(arm);
  if (inst.noise_sigma() == 0.0) return mean;
  return mean + inst.noise_sigma() * rng.normal();
}

inline double observe_binary(const CbaiInstance& inst, ArmIndex arm, OracleRng& rng) {
  detail::check_arm(inst, arm);
  const double p = (detail::binary_mean(inst, arm) + 1.0) / 2.0;
  return rng.uniform() < p ? 1.0 : -1.0;
}

/// Answers constraint queries for one run and counts them. The only object
/// in a run that touches phi.
class ConstraintOracle {
 public:
  ConstraintOracle(const CbaiInstance& inst, OracleRng rng) : inst_(&inst), rng_(std::move(rng)) {
    if (inst.feedback() == Feedback::binary)
      for (ArmIndex i = 0; i < inst.num_arms(); ++i) detail::binary_mean(inst, i);
  }

  double observe(ArmIndex arm) {
    ++queries_;
    return inst_->feedback() == Feedback::binary ? observe_binary(*inst_, arm, rng_) : observe_gaussian(*inst_, arm, rng_);
  }

  /// Sum of `count` independent observations of one arm, drawn in one shot
  /// from the exact distribution of the sum.
  double observe_sum(ArmIndex arm, std::uint64_t count) {
    detail::check_arm(*inst_, arm);
    queries_ += count;
    if (count == 0) return 0.0;
    const double n = static_cast<double>(count);
    if (inst_->feedback() == Feedback::binary) {
      const double p = (detail::binary_mean(*inst_, arm) + 1.0) / 2.0;
      const auto ones = std::binomial_distribution<std::uint64_t>(count, p)(rng_.engine());
      return 2.0 * static_cast<double>(ones) - n;
    }
    const double mean = inst_->constraint_of(arm);
    if (inst_->noise_sigma() == 0.0) return n * mean;
    return n * mean + inst_->noise_sigma() * std::sqrt(n) * rng_.normal();
  }

  std::uint64_t queries() const { return queries_; }
  std::size_t num_arms() const { return inst_->num_arms(); }
  OracleRng& rng() { return rng_; }

 private:
  const CbaiInstance* inst_;
  OracleRng rng_;
  std::uint64_t queries_ = 0;
};

}  // namespace cbai
