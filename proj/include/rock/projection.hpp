#pragma once

#include <cmath>
#include <optional>

#include "rock/dynamics.hpp"
#include "rock/errors.hpp"
#include "rock/math.hpp"

namespace rock {

/// Motor frame in world coordinates: the pendulum rotates in the u-v plane
/// and w points out of the motor.
struct MotorFrame {
  Vec3 u = Vec3::UnitX();
  Vec3 v = Vec3::UnitY();
  Vec3 w = Vec3::UnitZ();

  static MotorFrame from_orientation(const Quat& q) {
    const Mat3 R = q.toRotationMatrix();
    return {R.col(0), R.col(1), R.col(2)};
  }

  bool valid(double tol = 1e-9) const {
    return std::abs(u.norm() - 1.0) < tol && std::abs(v.norm() - 1.0) < tol &&
           std::abs(w.norm() - 1.0) < tol && std::abs(u.dot(v)) < tol &&
           std::abs(u.dot(w)) < tol && std::abs(v.dot(w)) < tol &&
           (u.cross(v) - w).norm() < tol;
  }
};

/// Unit direction in the ground plane.
struct Command {
  Vec2 d = Vec2::UnitX();

  static Command from_angle(double heading) {
    return {Vec2(std::cos(heading), std::sin(heading))};
  }

  bool valid(double tol = 1e-9) const {
    return d.allFinite() && std::abs(d.norm() - 1.0) < tol;
  }
};

inline Vec2 project_to_ground(const Vec3& p) { return {p.x(), p.y()}; }

/// Pendulum displacement from the centroid for angle `theta` measured from u
/// toward v.
inline Vec3 pendulum_vector(const MotorFrame& f, double theta, double arm) {
  return arm * (std::cos(theta) * f.u + std::sin(theta) * f.v);
}

/// Pendulum angle whose ground projection points along the command:
///   theta = atan2(u_x d_y - u_y d_x, v_y d_x - v_x d_y)      if w_z >= 0
///   theta = atan2(u_x d_y - u_y d_x, v_y d_x - v_x d_y) + pi otherwise
/// wrapped to (-pi, pi]. Throws DegenerateCommand when both atan2 arguments
/// vanish.
inline double target_angle(const MotorFrame& f, const Command& cmd) {
  if (!f.valid(1e-6)) throw InputDomainError("target_angle: invalid motor frame");
  if (!cmd.valid(1e-6)) throw InputDomainError("target_angle: command must be unit");
  const Vec2& d = cmd.d;
  const double y = f.u.x() * d.y() - f.u.y() * d.x();
  const double x = f.v.y() * d.x() - f.v.x() * d.y();
  if (std::abs(y) < 1e-9 && std::abs(x) < 1e-9) {
    throw DegenerateCommand("target_angle: command unreachable from this frame");
  }
  double theta = std::atan2(y, x);
  if (f.w.z() < 0.0) theta += kPi;
  return wrap_angle(theta);
}

struct PdGains {
  double kp = 20.0;  ///< rad/s per rad
  double kd = 0.5;
  double max_speed = 21.0;
};

/// PD law on the wrapped angle error, returning a motor velocity setpoint.
inline double pd_track(double target, double pendulum_angle,
                       double pendulum_velocity, const PdGains& gains = {}) {
  const double err = wrap_angle(target - pendulum_angle);
  return std::clamp(gains.kp * err - gains.kd * pendulum_velocity,
                    -gains.max_speed, gains.max_speed);
}

inline double pd_track(double target, double pendulum_angle,
                       double pendulum_velocity, double kp, double kd) {
  return pd_track(target, pendulum_angle, pendulum_velocity, PdGains{kp, kd});
}

/// Stateful wrapper: holds the previous target through degenerate commands
/// and idles at zero setpoint without a command.
class ProjectionTracker {
 public:
  explicit ProjectionTracker(PdGains gains = {}) : gains_(gains) {}

  void reset() { last_target_.reset(); }

  double setpoint(const RobotState& s, const std::optional<Command>& cmd) {
    if (!cmd) return 0.0;
    try {
      last_target_ =
          target_angle(MotorFrame::from_orientation(s.orientation), *cmd);
    } catch (const DegenerateCommand&) {
    }
    if (!last_target_) return 0.0;
    return pd_track(*last_target_, s.pendulum_angle(), s.pendulum_velocity,
                    gains_);
  }

  std::optional<double> last_target() const { return last_target_; }
  const PdGains& gains() const noexcept { return gains_; }

 private:
  PdGains gains_;
  std::optional<double> last_target_;
};

}  // namespace rock
