#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>

#include "rock/dynamics.hpp"
#include "rock/projection.hpp"

namespace rock {

/// Index of each channel inside one 15-entry observation frame.
namespace obs {
enum Index : std::size_t {
  kLastAction = 0,
  kCommandX = 1,
  kCommandY = 2,
  kQuatW = 3,
  kQuatX = 4,
  kQuatY = 5,
  kQuatZ = 6,
  kAngVelW = 7,
  kAngVelU = 8,
  kAngVelV = 9,
  kMotorVelocity = 10,
  kMotorSin = 11,
  kMotorCos = 12,
  kTargetSin = 13,
  kTargetCos = 14,
};
inline constexpr std::size_t kFrameSize = 15;
inline constexpr std::size_t kStackDepth = 3;
inline constexpr std::size_t kSize = kFrameSize * kStackDepth;

/// Position of `channel` from the frame `age` steps back (0 = current).
constexpr std::size_t index(std::size_t age, Index channel) {
  return age * kFrameSize + channel;
}
}  // namespace obs

using ObservationFrame = std::array<float, obs::kFrameSize>;

/// Stacked policy input: [current, t-1, t-2], each in frame channel order.
using Observation = std::array<float, obs::kSize>;

struct ObservationScales {
  double angular_velocity_w = 1.0 / 24.0;
  double angular_velocity_uv = 1.0 / 12.0;
  double motor_velocity = 1.0 / 37.5;
};

struct ObservationOptions {
  ObservationScales scales;
  /// Express the command in a frame yawed with the motor axis instead of
  /// the world frame.
  bool heading_relative = false;
};

/// Up to two previous frames plus the last valid projection target.
class ObservationHistory {
 public:
  void reset() {
    count_ = 0;
    last_target_ = 0.0;
  }
  std::size_t size() const noexcept { return count_; }
  const ObservationFrame& frame(std::size_t age) const { return frames_[age]; }
  double last_target() const noexcept { return last_target_; }
  void set_last_target(double t) { last_target_ = t; }

  void push(const ObservationFrame& f) {
    frames_[1] = frames_[0];
    frames_[0] = f;
    count_ = std::min<std::size_t>(count_ + 1, 2);
  }

 private:
  std::array<ObservationFrame, 2> frames_{};
  std::size_t count_ = 0;
  double last_target_ = 0.0;
};

inline Vec2 command_in_observation_frame(const RobotState& s, const Command& cmd,
                                         bool heading_relative) {
  if (!heading_relative) return cmd.d;
  const Vec3 w = s.rotation().col(2);
  const double heading = std::hypot(w.x(), w.y()) > 1e-9 ? std::atan2(w.y(), w.x()) : 0.0;
  const double c = std::cos(heading), sn = std::sin(heading);
  return {c * cmd.d.x() + sn * cmd.d.y(), -sn * cmd.d.x() + c * cmd.d.y()};
}

/// Builds the current frame (scaled, then clipped to [-1, 1]), stacks it
/// with the two previous frames, and pushes it into `history`. Missing
/// history at episode start is filled with copies of the oldest available
/// frame.
inline Observation build_observation(const RobotState& s, const Command& cmd,
                                     double last_action,
                                     ObservationHistory& history,
                                     const ObservationOptions& opts = {}) {
  double target = history.last_target();
  try {
    target = target_angle(MotorFrame::from_orientation(s.orientation), cmd);
  } catch (const DegenerateCommand&) {
  }
  history.set_last_target(target);

  Quat q = s.orientation.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec2 d = command_in_observation_frame(s, cmd, opts.heading_relative);
  const Vec3& w = s.angular_velocity;
  const double theta = s.pendulum_angle();
  const auto& sc = opts.scales;

  std::array<double, obs::kFrameSize> raw{};
  raw[obs::kLastAction] = last_action;
  raw[obs::kCommandX] = d.x();
  raw[obs::kCommandY] = d.y();
  raw[obs::kQuatW] = q.w();
  raw[obs::kQuatX] = q.x();
  raw[obs::kQuatY] = q.y();
  raw[obs::kQuatZ] = q.z();
  raw[obs::kAngVelW] = w.z() * sc.angular_velocity_w;
  raw[obs::kAngVelU] = w.x() * sc.angular_velocity_uv;
  raw[obs::kAngVelV] = w.y() * sc.angular_velocity_uv;
  raw[obs::kMotorVelocity] = s.pendulum_velocity * sc.motor_velocity;
  raw[obs::kMotorSin] = std::sin(theta);
  raw[obs::kMotorCos] = std::cos(theta);
  raw[obs::kTargetSin] = std::sin(target);
  raw[obs::kTargetCos] = std::cos(target);

  ObservationFrame frame;
  for (std::size_t i = 0; i < obs::kFrameSize; ++i) {
    const double v = std::isfinite(raw[i]) ? raw[i] : 0.0;
    frame[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }

  if (history.size() == 0) {
    history.push(frame);
  }
  const ObservationFrame older1 = history.frame(0);
  const ObservationFrame older2 = history.size() >= 2 ? history.frame(1) : older1;

  Observation out;
  std::copy(frame.begin(), frame.end(), out.begin());
  std::copy(older1.begin(), older1.end(), out.begin() + obs::kFrameSize);
  std::copy(older2.begin(), older2.end(), out.begin() + 2 * obs::kFrameSize);
  history.push(frame);
  return out;
}

}  // namespace rock
