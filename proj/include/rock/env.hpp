#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>

#include "rock/dynamics.hpp"
#include "rock/errors.hpp"
#include "rock/observation.hpp"
#include "rock/policy.hpp"
#include "rock/projection.hpp"
#include "rock/shell.hpp"
#include "rock/terrain.hpp"

namespace rock {

struct EpisodeConfig {
  double max_episode_length = 10.0;  ///< s
  double terrain_roughness = 0.005;  ///< height std, m
  double terrain_correlation = 0.1;  ///< m
  double terrain_extent = 8.0;  ///< side of the square heightfield, m
  double terrain_cell = 0.02;  ///< m
  double command_resample_period = 0.0;  ///< s, 0 keeps one command per episode
  double control_period = 0.02;  ///< s
  double physics_dt = 1e-3;  ///< s
  double init_yaw_range = kPi;  ///< yaw drawn from [-range, range]
  double init_roll_range = kPi;  ///< spin about the motor axis
  double init_pendulum_range = kPi;
  /// When set, every episode uses this heading instead of a random one.
  std::optional<double> fixed_command_heading;

  int substeps() const {
    return static_cast<int>(std::lround(control_period / physics_dt));
  }

  void validate() const {
    if (!(max_episode_length > 0.0) || !(control_period > 0.0) ||
        !(physics_dt > 0.0) || physics_dt > 5e-3 || command_resample_period < 0.0 ||
        terrain_roughness < 0.0 || !(terrain_correlation > 0.0) ||
        !(terrain_extent > 0.0) || !(terrain_cell > 0.0)) {
      throw ConfigError("episode: periods must be positive and roughness non-negative");
    }
    if (std::abs(substeps() * physics_dt - control_period) > 1e-9 || substeps() < 1) {
      throw ConfigError("episode: control_period must be a multiple of physics_dt");
    }
  }
};

/// Reward weights. The reward is a reconstruction: progress along the
/// command dominates, the rest is smoothness and feasibility shaping.
struct RewardConfig {
  double w_speed = 1.0;  ///< per m/s along the command
  double w_action_rate = 0.05;
  double w_spin = 0.01;  ///< per (rad/s)^2 above the motor limit
  double w_upright = 0.1;  ///< bonus for a horizontal motor axis
  double spin_limit = 21.0;  ///< rad/s

  void validate() const {
    if (!std::isfinite(w_speed) || !std::isfinite(w_action_rate) ||
        !std::isfinite(w_spin) || !std::isfinite(w_upright) || !(spin_limit > 0.0)) {
      throw ConfigError("reward: weights must be finite");
    }
  }
};

/// Ground-plane velocity along the command between two states. Falls back to
/// the instantaneous velocity when no time has passed.
inline double speed_along_command(const RobotState& s, const RobotState& prev,
                                  const Command& cmd) {
  const double dt = s.time - prev.time;
  const Vec2 v = dt > 0.0 ? Vec2((s.position - prev.position).head<2>() / dt)
                          : Vec2(s.linear_velocity.head<2>());
  return v.dot(cmd.d);
}

inline double reward(const RobotState& s, const RobotState& prev, double action,
                     double prev_action, const Command& cmd,
                     const RewardConfig& cfg = {}) {
  const double over = std::max(0.0, std::abs(s.pendulum_velocity) - cfg.spin_limit);
  const double wz = s.rotation()(2, 2);
  return cfg.w_speed * speed_along_command(s, prev, cmd) -
         cfg.w_action_rate * std::abs(action - prev_action) -
         cfg.w_spin * over * over + cfg.w_upright * (1.0 - std::abs(wz));
}

/// Orientation with the motor axis horizontal: yaw about world z, then the
/// axis laid flat, then `roll` about the motor axis.
inline Quat lying_orientation(double yaw, double roll) {
  return Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ())) *
         Quat(Eigen::AngleAxisd(kPi / 2, Vec3::UnitX())) *
         Quat(Eigen::AngleAxisd(roll, Vec3::UnitZ()));
}

/// At rest on the terrain at (x, y), just touching the ground.
inline RobotState resting_state(const ShellModel& shell, const Terrain& terrain,
                                const Quat& q, double pendulum_angle,
                                double x = 0.0, double y = 0.0) {
  RobotState s;
  s.orientation = q;
  s.position = Vec3(x, y, resting_height(shell, terrain, q, x, y));
  s.pendulum_angle_unwrapped = pendulum_angle;
  return s;
}

struct EnvSpec {
  ShellParams shell;
  PhysicsParams physics;
  ContactModel contact;
  MotorModel motor;
  EpisodeConfig episode;
  RewardConfig reward;
  ObservationOptions observation;
};

struct StepInfo {
  double speed_along_command = 0.0;  ///< ground truth, m/s
  bool timeout = false;
  bool out_of_bounds = false;
  bool diverged = false;
  std::uint64_t diverged_step = 0;
};

struct EnvStep {
  Observation observation{};
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

/// Episodic wrapper around one simulator. Owned by a single worker.
class RockEnv {
 public:
  explicit RockEnv(EnvSpec spec,
                   std::shared_ptr<const ShellModel> shell = nullptr)
      : spec_(std::move(spec)),
        shell_(shell ? std::move(shell) : std::make_shared<const ShellModel>(spec_.shell)) {
    spec_.episode.validate();
    spec_.reward.validate();
    spec_.contact.validate();
  }

  const EnvSpec& spec() const noexcept { return spec_; }
  std::shared_ptr<const ShellModel> shell_ptr() const { return shell_; }

  Observation reset(std::uint64_t seed) {
    rng_.seed(seed);
    const auto& ep = spec_.episode;
    terrain_ = std::make_shared<const Terrain>(Terrain::generate(
        ep.terrain_roughness, ep.terrain_correlation, ep.terrain_extent,
        ep.terrain_cell, derive_seed(seed, 1)));
    sample_command();
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double yaw = ep.init_yaw_range * u(rng_);
    const double roll = ep.init_roll_range * u(rng_);
    const double pend = ep.init_pendulum_range * u(rng_);
    sim_.emplace(shell_, terrain_, spec_.motor, spec_.contact, spec_.physics, ep.physics_dt);
    sim_->set_state(resting_state(*shell_, *terrain_, lying_orientation(yaw, roll), pend));
    last_action_ = 0.0;
    next_resample_ = ep.command_resample_period;
    done_ = false;
    history_.reset();
    return build_observation(sim_->state(), command_, last_action_, history_,
                             spec_.observation);
  }

  EnvStep step(double action) {
    if (!sim_) throw UsageError("env: step before reset");
    if (done_) throw UsageError("env: step after episode end; call reset");
    if (!std::isfinite(action)) throw InputDomainError("env: non-finite action");
    action = std::clamp(action, -1.0, 1.0);
    const auto& ep = spec_.episode;
    const RobotState prev = sim_->state();
    const Command cmd = command_;
    EnvStep out;
    sim_->motor().set_setpoint(action_to_setpoint(action, spec_.motor.max_speed));
    try {
      sim_->step_n(ep.substeps());
    } catch (const SimulationDiverged& e) {
      out.info.diverged = true;
      out.info.diverged_step = e.step_index();
      out.done = true;
      done_ = true;
      out.observation = build_observation(prev, cmd, action, history_, spec_.observation);
      return out;
    }
    const RobotState& s = sim_->state();
    out.info.speed_along_command = speed_along_command(s, prev, cmd);
    out.reward = reward(s, prev, action, last_action_, cmd, spec_.reward);
    last_action_ = action;

    if (ep.command_resample_period > 0.0 && s.time >= next_resample_ - 1e-9) {
      sample_command();
      next_resample_ += ep.command_resample_period;
    }
    out.info.timeout = s.time >= ep.max_episode_length - 1e-9;
    out.info.out_of_bounds = !terrain_->is_flat() && !terrain_->contains(s.position.x(), s.position.y());
    out.done = out.info.timeout || out.info.out_of_bounds;
    done_ = out.done;
    out.observation = build_observation(s, command_, last_action_, history_, spec_.observation);
    return out;
  }

  bool done() const noexcept { return done_; }
  bool started() const noexcept { return sim_.has_value(); }
  const Command& command() const noexcept { return command_; }
  double last_action() const noexcept { return last_action_; }
  const RobotState& state() const { return simulator().state(); }
  const Terrain& terrain() const { return *terrain_; }
  const Simulator& simulator() const {
    if (!sim_) throw UsageError("env: not reset");
    return *sim_;
  }

 private:
  void sample_command() {
    if (spec_.episode.fixed_command_heading) {
      command_ = Command::from_angle(*spec_.episode.fixed_command_heading);
      return;
    }
    std::uniform_real_distribution<double> u(-kPi, kPi);
    command_ = Command::from_angle(u(rng_));
  }

  EnvSpec spec_;
  std::shared_ptr<const ShellModel> shell_;
  std::shared_ptr<const Terrain> terrain_;
  std::optional<Simulator> sim_;
  std::mt19937_64 rng_;
  Command command_;
  ObservationHistory history_;
  double last_action_ = 0.0;
  double next_resample_ = 0.0;
  bool done_ = false;
};

}  // namespace rock
