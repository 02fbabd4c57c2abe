#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "rock/errors.hpp"
#include "rock/math.hpp"
#include "rock/shell.hpp"
#include "rock/terrain.hpp"

namespace rock {

/// Full simulator state. The body frame has the motor axis w along body z;
/// the columns of the orientation's rotation matrix are u, v, w in world
/// coordinates.
struct RobotState {
  Vec3 position = Vec3::Zero();  ///< shell centroid, world, m
  Quat orientation = Quat::Identity();  ///< body to world
  Vec3 linear_velocity = Vec3::Zero();  ///< centroid velocity, world
  Vec3 angular_velocity = Vec3::Zero();  ///< body frame, rad/s
  double pendulum_angle_unwrapped = 0.0;  ///< relative to the shell, rad
  double pendulum_velocity = 0.0;  ///< relative to the shell, rad/s
  double time = 0.0;

  /// Pendulum angle wrapped to (-pi, pi].
  double pendulum_angle() const { return wrap_angle(pendulum_angle_unwrapped); }
  Mat3 rotation() const { return orientation.toRotationMatrix(); }

  bool finite() const {
    return position.allFinite() && orientation.coeffs().allFinite() &&
           linear_velocity.allFinite() && angular_velocity.allFinite() &&
           std::isfinite(pendulum_angle_unwrapped) &&
           std::isfinite(pendulum_velocity) && std::isfinite(time);
  }
};

/// Velocity-tracking actuator between shell and pendulum.
struct MotorModel {
  double velocity_setpoint = 0.0;
  double max_torque = 0.3;
  double velocity_gain = 0.05;
  double max_speed = 21.0;

  void set_setpoint(double sp) {
    velocity_setpoint = std::clamp(sp, -max_speed, max_speed);
  }

  /// A motor that never applies torque.
  static MotorModel off() {
    MotorModel m;
    m.velocity_gain = 0.0;
    return m;
  }
};

inline double motor_torque(const MotorModel& motor, double pendulum_velocity) {
  const double sp =
      std::clamp(motor.velocity_setpoint, -motor.max_speed, motor.max_speed);
  return std::clamp(motor.velocity_gain * (sp - pendulum_velocity),
                    -motor.max_torque, motor.max_torque);
}

/// Penalty contact with regularized Coulomb friction.
struct ContactModel {
  double normal_stiffness = 2e4;
  double normal_damping = 50.0;
  double friction = 0.8;
  double friction_regularization = 1e-3;
  /// Rolling loss: torque -rolling_damping * N * omega_tangential, in m*s.
  double rolling_damping = 0.003;
  bool enabled = true;

  void validate() const {
    if (!(normal_stiffness > 0.0) || normal_damping < 0.0 || friction < 0.0 ||
        !(friction_regularization > 0.0) || rolling_damping < 0.0) {
      throw ConstructionError("contact: require k_n > 0, c_n >= 0, mu >= 0, v_eps > 0");
    }
  }
};

struct PhysicsParams {
  double gravity = 9.81;
  /// Spin inertia of the motor rotor and pendulum hub about w. Keeps the
  /// pendulum coordinate well conditioned when the arm or mass is zero.
  double rotor_inertia = 2e-5;
};

struct Contact {
  Vec3 point;  ///< world, deepest shell point
  Vec3 normal;  ///< terrain normal, world, pointing up
  double penetration = 0.0;  ///< along the normal, m
  Vec3 force = Vec3::Zero();  ///< total force on the shell, world, N
  double normal_force = 0.0;
  Vec3 body_point;  ///< contact point in the body frame
  Vec3 slip_velocity = Vec3::Zero();  ///< tangential velocity of the shell point
};

/// Deepest point of the shell relative to the terrain. `penetration` is the
/// vertical overlap, negative when the shell is above ground (clearance).
struct SurfaceProbe {
  Vec3 body_direction;
  Vec3 body_point;
  Vec3 world_point;
  double penetration = -std::numeric_limits<double>::infinity();
};

/// Scans mesh vertices facing down, then refines the deepest one by compass
/// search over directions on the radial surface.
inline SurfaceProbe deepest_point(const RobotState& s, const ShellModel& shell,
                                  const Terrain& terrain) {
  const Mat3 R = s.rotation();
  const Vec3& x = s.position;
  const Vec3 down_body = R.transpose() * Vec3(0.0, 0.0, -1.0);
  const auto& dirs = shell.vertex_directions();
  const auto& radii = shell.vertex_radii();
  const bool flat = terrain.is_flat();

  auto eval = [&](const Vec3& n) {
    const Vec3 pw = x + R * shell.surface_point(n);
    return (flat ? 0.0 : terrain.height(pw.x(), pw.y())) - pw.z();
  };

  double best = -std::numeric_limits<double>::infinity();
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    const double c = dirs[i].dot(down_body);
    if (c <= 0.0) continue;
    double pen;
    if (flat) {
      pen = -x.z() + radii[i] * c;
    } else {
      const Vec3 pw = x + R * (radii[i] * dirs[i]);
      pen = terrain.height(pw.x(), pw.y()) - pw.z();
    }
    if (pen > best) {
      best = pen;
      best_i = i;
    }
  }

  Vec3 n = dirs[best_i];
  double f = eval(n);
  double step = shell.angular_spacing();
  for (int iter = 0; iter < 400 && step > 1e-9; ++iter) {
    const Vec3 t1 = orthogonal_unit(n, down_body.cross(n).norm() > 1e-6
                                           ? Vec3(down_body.cross(n))
                                           : Vec3::UnitX());
    const Vec3 t2 = n.cross(t1);
    const Vec3 cands[4] = {t1, -t1, t2, -t2};
    double fbest = f;
    Vec3 nbest = n;
    for (const Vec3& t : cands) {
      const Vec3 c = (n + step * t).normalized();
      const double fc = eval(c);
      if (fc > fbest) {
        fbest = fc;
        nbest = c;
      }
    }
    if (fbest > f) {
      f = fbest;
      n = nbest;
    } else {
      step *= 0.5;
    }
  }
  SurfaceProbe p;
  p.body_direction = n;
  p.body_point = shell.surface_point(n);
  p.world_point = x + R * p.body_point;
  p.penetration = f;
  return p;
}

/// Height of the centroid at which the shell, in orientation `q` above
/// (x, y), just touches the terrain.
inline double resting_height(const ShellModel& shell, const Terrain& terrain,
                             const Quat& q, double x, double y) {
  RobotState s;
  s.position = Vec3(x, y, 0.0);
  s.orientation = q;
  return deepest_point(s, shell, terrain).penetration;
}

namespace detail {

struct ContactGeometry {
  Contact contact;
  Vec3 point_velocity;
};

inline std::optional<ContactGeometry> detect_contact(
    const RobotState& s, const ShellModel& shell, const Terrain& terrain,
    const ContactModel& model) {
  if (!model.enabled) return std::nullopt;
  if (s.position.z() - shell.max_radius() > terrain.max_height()) {
    return std::nullopt;
  }
  const SurfaceProbe probe = deepest_point(s, shell, terrain);
  if (!(probe.penetration > 0.0)) return std::nullopt;
  ContactGeometry g;
  Contact& c = g.contact;
  c.point = probe.world_point;
  c.body_point = probe.body_point;
  c.normal = terrain.normal(c.point.x(), c.point.y());
  c.penetration = probe.penetration * c.normal.z();
  const Mat3 R = s.rotation();
  g.point_velocity =
      s.linear_velocity + R * s.angular_velocity.cross(probe.body_point);
  const double vn = g.point_velocity.dot(c.normal);
  c.normal_force = std::max(
      0.0, model.normal_stiffness * c.penetration - model.normal_damping * vn);
  c.slip_velocity = g.point_velocity - vn * c.normal;
  c.force = c.normal_force * c.normal;
  return g;
}

}  // namespace detail

/// Contact set at the current state. The tangential force is the regularized
/// Coulomb law evaluated at the current slip velocity: magnitude
/// mu * N * min(1, |slip| / v_eps), opposing slip.
inline std::vector<Contact> contact_resolve(const RobotState& s,
                                            const ShellModel& shell,
                                            const Terrain& terrain,
                                            const ContactModel& model) {
  std::vector<Contact> out;
  auto g = detail::detect_contact(s, shell, terrain, model);
  if (!g) return out;
  Contact c = g->contact;
  const double slip = c.slip_velocity.norm();
  const double scale =
      model.friction * c.normal_force / std::max(slip, model.friction_regularization);
  c.force += -scale * c.slip_velocity;
  out.push_back(c);
  return out;
}

using Vec7 = Eigen::Matrix<double, 7, 1>;
using Mat7 = Eigen::Matrix<double, 7, 7>;

namespace detail {

struct BodyTerms {
  Mat3 R;
  Vec3 pendulum;  ///< pendulum offset, body frame
  Vec3 pendulum_tangent;  ///< d(pendulum)/d(theta), body frame
};

inline BodyTerms body_terms(const RobotState& s, const ShellModel& shell) {
  const double arm = shell.mass_properties().pendulum_arm;
  const double th = s.pendulum_angle_unwrapped;
  return {s.rotation(), Vec3(arm * std::cos(th), arm * std::sin(th), 0.0),
          Vec3(-arm * std::sin(th), arm * std::cos(th), 0.0)};
}

// Generalized velocity: [centroid velocity (world), angular velocity (body),
// pendulum rate].
inline Vec7 generalized_velocity(const RobotState& s) {
  Vec7 nu;
  nu << s.linear_velocity, s.angular_velocity, s.pendulum_velocity;
  return nu;
}

inline Mat7 mass_matrix(const ShellModel& shell, const PhysicsParams& physics,
                        const BodyTerms& b) {
  const auto& mp = shell.mass_properties();
  Mat7 M = Mat7::Zero();
  const Mat3 shell_coupling = -mp.shell_mass * b.R * skew(mp.shell_com);
  M.block<3, 3>(0, 0) += mp.shell_mass * Mat3::Identity();
  M.block<3, 3>(0, 3) += shell_coupling;
  M.block<3, 3>(3, 0) += shell_coupling.transpose();
  M.block<3, 3>(3, 3) += mp.shell_inertia_origin;

  Eigen::Matrix<double, 3, 7> Jp;
  Jp << Mat3::Identity(), -b.R * skew(b.pendulum), b.R * b.pendulum_tangent;
  M += mp.pendulum_mass * Jp.transpose() * Jp;

  const double Jr = physics.rotor_inertia;
  M(5, 5) += Jr;
  M(5, 6) += Jr;
  M(6, 5) += Jr;
  M(6, 6) += Jr;
  return M;
}

}  // namespace detail

/// Kinetic plus gravitational potential energy (zero potential at z = 0).
inline double mechanical_energy(const RobotState& s, const ShellModel& shell,
                                const PhysicsParams& physics = {}) {
  const auto b = detail::body_terms(s, shell);
  const auto& mp = shell.mass_properties();
  const Vec7 nu = detail::generalized_velocity(s);
  const double kinetic = 0.5 * nu.dot(detail::mass_matrix(shell, physics, b) * nu);
  const double zs = (s.position + b.R * mp.shell_com).z();
  const double zp = (s.position + b.R * b.pendulum).z();
  return kinetic + physics.gravity * (mp.shell_mass * zs + mp.pendulum_mass * zp);
}

/// Total angular momentum about the system center of mass, world frame.
inline Vec3 angular_momentum(const RobotState& s, const ShellModel& shell,
                             const PhysicsParams& physics = {}) {
  const auto b = detail::body_terms(s, shell);
  const auto& mp = shell.mass_properties();
  const Vec3& w = s.angular_velocity;
  const Vec3 ps = s.position + b.R * mp.shell_com;
  const Vec3 vs = s.linear_velocity + b.R * w.cross(mp.shell_com);
  const Vec3 pp = s.position + b.R * b.pendulum;
  const Vec3 vp = s.linear_velocity +
                  b.R * (w.cross(b.pendulum) + s.pendulum_velocity * b.pendulum_tangent);
  const Vec3 com = (mp.shell_mass * ps + mp.pendulum_mass * pp) / mp.total_mass;
  const Vec3 spin = mp.shell_inertia * w +
                    physics.rotor_inertia * (w.z() + s.pendulum_velocity) * Vec3::UnitZ();
  return mp.shell_mass * (ps - com).cross(vs) +
         mp.pendulum_mass * (pp - com).cross(vp) + b.R * spin;
}

struct StepOutput {
  RobotState state;
  std::vector<Contact> contacts;
  double motor_torque = 0.0;
};

/// Advances the coupled shell + pendulum system by one step of length `dt`.
///
/// Forces are evaluated at the current state, generalized velocities are
/// updated, then the quaternion and pendulum angle advance with the new
/// velocities. The centroid position advances with the mean of the old and
/// new linear velocity, which is exact for ballistic flight. Friction is
/// applied as an implicit impulse (the regularized Coulomb law evaluated at
/// the end-of-step slip), which stays stable for small v_eps.
inline StepOutput step(const RobotState& s, const ShellModel& shell,
                       const MotorModel& motor, const ContactModel& contact,
                       const Terrain& terrain, double dt,
                       const PhysicsParams& physics = {},
                       std::uint64_t step_index = 0) {
  if (!(dt > 0.0 && dt <= 5e-3)) {
    throw InputDomainError("step: dt must lie in (0, 5e-3]");
  }
  const auto& mp = shell.mass_properties();
  const auto b = detail::body_terms(s, shell);
  const Mat3& R = b.R;
  const Vec3& w = s.angular_velocity;
  const double thd = s.pendulum_velocity;
  const Vec3 ez = Vec3::UnitZ();
  const Vec3 g(0.0, 0.0, -physics.gravity);

  const Mat7 M = detail::mass_matrix(shell, physics, b);
  Vec7 f = Vec7::Zero();
  auto fv = f.segment<3>(0);
  auto fw = f.segment<3>(3);

  // Shell: gravity at its center of mass, centripetal bias, gyroscopic term.
  const Vec3& cs = mp.shell_com;
  const Vec3 shell_bias = w.cross(w.cross(cs));
  fv += mp.shell_mass * (g - R * shell_bias);
  fw += cs.cross(R.transpose() * (mp.shell_mass * g)) -
        mp.shell_mass * cs.cross(shell_bias) - w.cross(mp.shell_inertia * w);

  // Pendulum point mass.
  const Vec3& rp = b.pendulum;
  const Vec3& tp = b.pendulum_tangent;
  const Vec3 pend_bias =
      w.cross(w.cross(rp)) + 2.0 * thd * w.cross(tp) - thd * thd * rp;
  const Vec3 pend_load = R.transpose() * (mp.pendulum_mass * g) -
                         mp.pendulum_mass * pend_bias;
  fv += mp.pendulum_mass * g - mp.pendulum_mass * (R * pend_bias);
  fw += rp.cross(pend_load);
  f(6) += tp.dot(pend_load);

  // Rotor spin.
  fw -= w.cross(physics.rotor_inertia * (w.z() + thd) * ez);

  // Motor: equal and opposite torques about w on pendulum and shell.
  const double tau = motor_torque(motor, thd);
  const Vec3 torque_on_pendulum = tau * ez;
  const Vec3 torque_on_shell = -tau * ez;
  assert((torque_on_pendulum + torque_on_shell).norm() == 0.0);
  fw += torque_on_pendulum + torque_on_shell;
  f(6) += tau;

  StepOutput out;
  auto geometry = detail::detect_contact(s, shell, terrain, contact);
  if (geometry) {
    const Contact& c = geometry->contact;
    fv += c.force;
    fw += c.body_point.cross(R.transpose() * c.force);
    if (contact.rolling_damping > 0.0) {
      const Vec3 spin = R * w;
      const Vec3 rolling = spin - spin.dot(c.normal) * c.normal;
      fw -= R.transpose() * (contact.rolling_damping * c.normal_force * rolling);
    }
  }

  const Eigen::LDLT<Mat7> ldlt(M);
  const Vec7 nu = detail::generalized_velocity(s);
  Vec7 nu_new = nu + dt * ldlt.solve(f);

  if (geometry) {
    Contact c = geometry->contact;
    if (contact.friction > 0.0 && c.normal_force > 0.0) {
      Eigen::Matrix<double, 3, 7> Jc;
      Jc << Mat3::Identity(), -R * skew(c.body_point), Vec3::Zero();
      const Eigen::Matrix<double, 7, 3> MinvJt = ldlt.solve(Jc.transpose());
      const Mat3 W = Jc * MinvJt;
      const Vec3 t1 = orthogonal_unit(c.normal, Vec3::UnitX());
      const Vec3 t2 = c.normal.cross(t1);
      Eigen::Matrix<double, 2, 3> T;
      T.row(0) = t1.transpose();
      T.row(1) = t2.transpose();
      const Eigen::Matrix2d Wt = T * W * T.transpose();
      const Vec2 slip_free = T * (Jc * nu_new);
      const double limit = contact.friction * c.normal_force * dt;
      const double gain = contact.friction * c.normal_force /
                          contact.friction_regularization;
      // Linear (sticking) branch of the regularized law.
      const Vec2 u_lin =
          (Eigen::Matrix2d::Identity() + dt * gain * Wt).ldlt().solve(slip_free);
      Vec2 impulse = -dt * gain * u_lin;
      if (u_lin.norm() > contact.friction_regularization) {
        // Sliding branch: fixed point on the slip direction.
        Vec2 dir = slip_free.normalized();
        bool sliding = true;
        for (int it = 0; it < 20; ++it) {
          const Vec2 u = slip_free - limit * (Wt * dir);
          if (u.dot(slip_free) <= 0.0 || u.norm() < 1e-12) {
            sliding = false;
            break;
          }
          dir = u.normalized();
        }
        if (sliding) impulse = -limit * dir;
      }
      const Vec3 impulse_world = T.transpose() * impulse;
      nu_new += MinvJt * impulse_world;
      c.force += impulse_world / dt;
      c.slip_velocity = geometry->contact.slip_velocity;
    }
    out.contacts.push_back(c);
  }

  RobotState& n = out.state;
  n = s;
  n.linear_velocity = nu_new.segment<3>(0);
  n.angular_velocity = nu_new.segment<3>(3);
  n.pendulum_velocity = nu_new(6);
  n.position = s.position + 0.5 * dt * (s.linear_velocity + n.linear_velocity);
  const double wn = n.angular_velocity.norm();
  if (wn > 0.0) {
    n.orientation =
        s.orientation * Quat(Eigen::AngleAxisd(wn * dt, n.angular_velocity / wn));
  }
  n.orientation.normalize();
  n.pendulum_angle_unwrapped = s.pendulum_angle_unwrapped + dt * n.pendulum_velocity;
  n.time = s.time + dt;
  out.motor_torque = tau;
  if (!n.finite()) {
    throw SimulationDiverged(step_index, "non-finite state component");
  }
  return out;
}

/// Owns one simulation instance. Not shared between threads; may be moved.
class Simulator {
 public:
  Simulator(std::shared_ptr<const ShellModel> shell,
            std::shared_ptr<const Terrain> terrain, MotorModel motor = {},
            ContactModel contact = {}, PhysicsParams physics = {},
            double dt = 1e-3)
      : shell_(std::move(shell)),
        terrain_(std::move(terrain)),
        motor_(motor),
        contact_(contact),
        physics_(physics),
        dt_(dt) {
    if (!shell_ || !terrain_) throw ConstructionError("simulator: null model");
    contact_.validate();
    if (!(dt_ > 0.0 && dt_ <= 5e-3)) {
      throw ConstructionError("simulator: dt must lie in (0, 5e-3]");
    }
  }

  const RobotState& state() const noexcept { return state_; }
  void set_state(const RobotState& s) { state_ = s; }
  MotorModel& motor() noexcept { return motor_; }
  const MotorModel& motor() const noexcept { return motor_; }
  const ShellModel& shell() const noexcept { return *shell_; }
  const Terrain& terrain() const noexcept { return *terrain_; }
  std::shared_ptr<const Terrain> terrain_ptr() const { return terrain_; }
  const ContactModel& contact_model() const noexcept { return contact_; }
  const PhysicsParams& physics() const noexcept { return physics_; }
  double dt() const noexcept { return dt_; }
  std::uint64_t step_count() const noexcept { return steps_; }
  const std::vector<Contact>& contacts() const noexcept { return contacts_; }
  double last_motor_torque() const noexcept { return last_torque_; }

  void step() {
    StepOutput o = rock::step(state_, *shell_, motor_, contact_, *terrain_,
                              dt_, physics_, steps_);
    state_ = o.state;
    contacts_ = std::move(o.contacts);
    last_torque_ = o.motor_torque;
    ++steps_;
  }

  void step_n(int n) {
    for (int i = 0; i < n; ++i) step();
  }

 private:
  std::shared_ptr<const ShellModel> shell_;
  std::shared_ptr<const Terrain> terrain_;
  MotorModel motor_;
  ContactModel contact_;
  PhysicsParams physics_;
  double dt_;
  RobotState state_;
  std::vector<Contact> contacts_;
  double last_torque_ = 0.0;
  std::uint64_t steps_ = 0;
};

/// One entry of a contact history used to detect jumps.
struct ContactSample {
  double time = 0.0;
  std::size_t contact_count = 0;
  double clearance = 0.0;  ///< lowest shell point minus terrain height
};

struct JumpResult {
  bool airborne = false;
  double clearance = 0.0;
  double duration = 0.0;
};

/// Finds the longest contiguous contact-free window in `history`. The robot
/// counts as airborne when that window lasts at least `min_window` seconds.
inline JumpResult jump_impulse_check(std::span<const ContactSample> history,
                                     double min_window = 0.05) {
  if (history.empty()) throw InputDomainError("jump check: empty history");
  const double spacing =
      history.size() > 1 ? history[1].time - history[0].time : 0.0;
  JumpResult best;
  std::size_t i = 0;
  while (i < history.size()) {
    if (history[i].contact_count != 0) {
      ++i;
      continue;
    }
    std::size_t j = i;
    double clearance = history[i].clearance;
    while (j + 1 < history.size() && history[j + 1].contact_count == 0) {
      ++j;
      clearance = std::max(clearance, history[j].clearance);
    }
    const double duration = history[j].time - history[i].time + spacing;
    if (duration > best.duration) {
      best.duration = duration;
      best.clearance = std::max(0.0, clearance);
    }
    i = j + 1;
  }
  best.airborne = best.duration >= min_window - 1e-12;
  return best;
}

}  // namespace rock
