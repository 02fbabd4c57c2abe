#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "rock/errors.hpp"
#include "rock/mlp.hpp"
#include "rock/observation.hpp"

namespace rock {

/// Float actor: widths [45, hidden..., 1], ELU hidden layers, tanh output.
using PolicyNet = Mlp<float>;

inline const std::vector<int> kFullPolicyWidths = {45, 512, 256, 128, 1};

inline constexpr double kMaxMotorSpeed = 21.0;

inline std::vector<int> policy_widths(const std::vector<int>& hidden) {
  std::vector<int> w{static_cast<int>(obs::kSize)};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(1);
  return w;
}

inline PolicyNet make_policy(const std::vector<int>& hidden, std::uint64_t seed,
                             double output_gain = 0.01) {
  return PolicyNet::random(policy_widths(hidden), Activation::kElu,
                           Activation::kTanh, seed, output_gain);
}

inline void check_observation(std::span<const float> o, std::size_t expected) {
  if (o.size() != expected) {
    throw InputDomainError("policy: expected " + std::to_string(expected) +
                           " observation entries, got " + std::to_string(o.size()));
  }
  for (float v : o) {
    if (!(v >= -1.0f && v <= 1.0f)) {
      throw InputDomainError("policy: observation entry outside [-1, 1]");
    }
  }
}

/// Deterministic action in [-1, 1].
inline double forward(const PolicyNet& policy, std::span<const float> o) {
  check_observation(o, static_cast<std::size_t>(policy.input_size()));
  if (policy.output_size() != 1) throw CorruptedModel("policy: output width must be 1");
  const float a = policy.forward(o)[0];
  return std::clamp(static_cast<double>(a), -1.0, 1.0);
}

inline double forward(const PolicyNet& policy, const Observation& o) {
  return forward(policy, std::span<const float>(o));
}

inline double action_to_setpoint(double a, double max_speed = kMaxMotorSpeed) {
  if (!std::isfinite(a)) throw InputDomainError("action_to_setpoint: non-finite action");
  return max_speed * std::clamp(a, -1.0, 1.0);
}

}  // namespace rock
