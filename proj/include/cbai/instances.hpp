#pragma once
// Synthetic instance families and the JSON instance format.

#include "cbai/instance.hpp"
#include "cbai/oracle.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cbai {

/// Raised for malformed instance documents (as opposed to invalid instances).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Arms e_1..e_{d-1}, (1-eps) e_d, (1+eps) e_d; theta = phi = e_d; tau = 1.
/// The optimum is (1-eps) e_d at index d-1.
inline CbaiInstance gen_irrelevant_dimensions(std::size_t d, double eps, double noise_sigma = 0.0) {
  if (d < 2) throw std::invalid_argument("irrelevant-dimensions needs d >= 2");
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("irrelevant-dimensions needs eps in (0, 1)");
  RawInstance raw;
  std::ostringstream name;
  name << "irrelevant-dims-d" << d << "-eps" << eps;
  raw.name = name.str();
  for (std::size_t i = 0; i + 1 < d; ++i) {
    std::vector<double> e(d, 0.0);
    e[i] = 1.0;
    raw.arms.push_back(e);
  }
  std::vector<double> lo(d, 0.0), hi(d, 0.0);
  lo[d - 1] = 1.0 - eps;
  hi[d - 1] = 1.0 + eps;
  raw.arms.push_back(lo);
  raw.arms.push_back(hi);
  raw.reward.assign(d, 0.0);
  raw.reward[d - 1] = 1.0;
  raw.constraint = raw.reward;
  raw.threshold = 1.0;
  raw.noise_sigma = noise_sigma;
  return validate_instance(raw);
}

namespace detail {
inline std::vector<double> random_unit(std::size_t d, OracleRng& rng) {
  std::vector<double> v(d);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (double& x : v) {
      x = rng.normal();
      norm2 += x * x;
    }
  } while (norm2 == 0.0);
  const double s = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= s;
  return v;
}
}  // namespace detail

inline constexpr int kSphereRetries = 100;

/// n arms uniform on the unit sphere, theta uniform, phi = x_i - x_j for the
/// closest pair, tau = 0. Redraws when no arm is feasible.
inline CbaiInstance gen_unit_sphere(std::size_t d, std::size_t n, std::uint64_t seed, double noise_sigma = 0.0) {
  if (d < 1) throw std::invalid_argument("unit-sphere needs d >= 1");
  if (n < 2) throw std::invalid_argument("unit-sphere needs n >= 2");
  for (int attempt = 0; attempt < kSphereRetries; ++attempt) {
    OracleRng rng(seed, mix_stream(hash_label("unit-sphere"), static_cast<std::uint64_t>(attempt)));
    RawInstance raw;
    raw.name = "unit-sphere-d" + std::to_string(d) + "-n" + std::to_string(n) + "-seed" + std::to_string(seed);
    for (std::size_t i = 0; i < n; ++i) raw.arms.push_back(detail::random_unit(d, rng));
    raw.reward = detail::random_unit(d, rng);
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 1;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        double dist = 0.0;
        for (std::size_t k = 0; k < d; ++k) dist += (raw.arms[i][k] - raw.arms[j][k]) * (raw.arms[i][k] - raw.arms[j][k]);
        if (dist < best) {
          best = dist;
          bi = i;
          bj = j;
        }
      }
    raw.constraint.resize(d);
    for (std::size_t k = 0; k < d; ++k) raw.constraint[k] = raw.arms[bi][k] - raw.arms[bj][k];
    raw.threshold = 0.0;
    raw.noise_sigma = noise_sigma;
    try {
      return validate_instance(raw);
    } catch (const ValidationError&) {
      // no feasible arm in this draw; try the next sub-seed
    }
  }
  throw std::runtime_error("unit-sphere generator found no feasible instance in " + std::to_string(kSphereRetries) +
                           " draws");
}

/// Ten arms i/10, theta = phi = 1, tau = 0.25.
inline CbaiInstance gen_line_1d(double noise_sigma = 0.0) {
  RawInstance raw;
  raw.name = "line-1d";
  for (int i = 1; i <= 10; ++i) raw.arms.push_back({i / 10.0});
  raw.reward = {1.0};
  raw.constraint = {1.0};
  raw.threshold = 0.25;
  raw.noise_sigma = noise_sigma;
  return validate_instance(raw);
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const CbaiInstance& inst) {
  const RawInstance raw = inst.to_raw();
  nlohmann::json j;
  j["name"] = raw.name;
  j["dimension"] = inst.dimension();
  j["arms"] = raw.arms;
  j["reward"] = raw.reward;
  j["constraint"] = raw.constraint;
  j["threshold"] = raw.threshold;
  j["noise_sigma"] = raw.noise_sigma;
  if (raw.feedback == Feedback::binary) j["feedback"] = "binary";
  return j;
}

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const char* key) {
  if (!j.is_object()) throw ParseError("instance document must be a JSON object");
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(std::string("missing key \"") + key + "\"");
  return *it;
}

inline double as_number(const nlohmann::json& v, const std::string& where) {
  if (v.is_number()) return v.get<double>();
  // NaN / Infinity are not JSON; accept them as strings so validation can reject them by name
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "NaN" || s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "Infinity" || s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-Infinity" || s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  throw ParseError("\"" + where + "\" must be a number");
}

inline std::vector<double> as_vector(const nlohmann::json& v, const std::string& where) {
  if (!v.is_array()) throw ParseError("\"" + where + "\" must be an array of numbers");
  std::vector<double> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace detail

inline CbaiInstance instance_from_json(const nlohmann::json& j) {
  RawInstance raw;
  const auto& name = detail::require(j, "name");
  if (!name.is_string()) throw ParseError("\"name\" must be a string");
  raw.name = name.get<std::string>();
  const auto& arms = detail::require(j, "arms");
  if (!arms.is_array()) throw ParseError("\"arms\" must be an array of arrays");
  for (std::size_t i = 0; i < arms.size(); ++i) raw.arms.push_back(detail::as_vector(arms[i], "arms[" + std::to_string(i) + "]"));
  raw.reward = detail::as_vector(detail::require(j, "reward"), "reward");
  raw.constraint = detail::as_vector(detail::require(j, "constraint"), "constraint");
  raw.threshold = detail::as_number(detail::require(j, "threshold"), "threshold");
  raw.noise_sigma = detail::as_number(detail::require(j, "noise_sigma"), "noise_sigma");
  const auto& dim = detail::require(j, "dimension");
  if (!dim.is_number_integer() || dim.get<long long>() < 1) throw ParseError("\"dimension\" must be a positive integer");
  if (auto it = j.find("feedback"); it != j.end()) {
    if (*it == "binary") raw.feedback = Feedback::binary;
    else if (*it == "gaussian") raw.feedback = Feedback::gaussian;
    else throw ParseError("\"feedback\" must be \"binary\" or \"gaussian\"");
  }
  const auto d = static_cast<std::size_t>(dim.get<long long>());
  for (std::size_t i = 0; i < raw.arms.size(); ++i)
    if (raw.arms[i].size() != d)
      throw ValidationError("dimension mismatch: arm " + std::to_string(i) + " has " + std::to_string(raw.arms[i].size()) +
                            " entries, \"dimension\" says " + std::to_string(d));
  return validate_instance(raw);
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline CbaiInstance load_instance(const std::string& path) {
  const nlohmann::json j = read_json_file(path);
  try {
    return instance_from_json(j);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  // doubles are printed shortest-round-trip, so load(save(x)) is bit-exact
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline void save_instance(const CbaiInstance& inst, const std::string& path) { write_json_file(to_json(inst), path); }

}  // namespace cbai
