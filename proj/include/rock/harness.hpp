#pragma once

#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "rock/dynamics.hpp"
#include "rock/env.hpp"
#include "rock/observation.hpp"
#include "rock/parallel.hpp"
#include "rock/policy.hpp"
#include "rock/projection.hpp"
#include "rock/quantized.hpp"
#include "rock/trajectory.hpp"

namespace rock {

/// Maps state and an optional command to a motor velocity setpoint. One
/// instance drives one simulation.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string id() const = 0;
  virtual void reset() = 0;
  virtual double setpoint(const RobotState& s, const std::optional<Command>& cmd) = 0;
};

class ProjectionController : public Controller {
 public:
  explicit ProjectionController(PdGains gains = {}) : tracker_(gains) {}
  std::string id() const override { return "projection"; }
  void reset() override { tracker_.reset(); }
  double setpoint(const RobotState& s, const std::optional<Command>& cmd) override {
    return tracker_.setpoint(s, cmd);
  }

 private:
  ProjectionTracker tracker_;
};

/// Runs a float or int8 actor. Without a command the motor idles and the
/// observation history is left untouched.
template <typename Net>
class LearnedController : public Controller {
 public:
  LearnedController(std::shared_ptr<const Net> net, std::string id,
                    ObservationOptions opts = {}, double max_speed = kMaxMotorSpeed)
      : net_(std::move(net)), id_(std::move(id)), opts_(opts), max_speed_(max_speed) {
    if (!net_) throw ConstructionError("controller: null policy");
  }
  std::string id() const override { return id_; }
  void reset() override {
    history_.reset();
    last_action_ = 0.0;
  }
  double setpoint(const RobotState& s, const std::optional<Command>& cmd) override {
    if (!cmd) return 0.0;
    const Observation o = build_observation(s, *cmd, last_action_, history_, opts_);
    last_action_ = run(o);
    return action_to_setpoint(last_action_, max_speed_);
  }

 private:
  double run(const Observation& o) const {
    if constexpr (std::is_same_v<Net, QuantizedPolicy>) return net_->forward(o);
    else return forward(*net_, o);
  }
  std::shared_ptr<const Net> net_;
  std::string id_;
  ObservationOptions opts_;
  double max_speed_;
  ObservationHistory history_;
  double last_action_ = 0.0;
};

using PolicyController = LearnedController<PolicyNet>;
using QuantizedController = LearnedController<QuantizedPolicy>;

struct WaypointCourse {
  std::vector<Vec2> waypoints;
  double capture_radius = 0.25;

  void validate() const {
    if (waypoints.size() < 1) throw ConfigError("course: need at least one waypoint");
    if (!(capture_radius > 0.0)) throw ConfigError("course: capture radius must be positive");
  }

  /// The 2 x 3 m rectangle, starting and ending at the origin.
  static WaypointCourse rectangle() {
    return {{{0, 0}, {2, 0}, {2, 3}, {0, 3}, {0, 0}}, 0.25};
  }
};

/// How a scripted run starts and ends.
struct RunSettings {
  double timeout = 600.0;  ///< s of simulated time
  /// Settling time before the run, with the motor holding zero speed.
  double settle_time = 2.0;
  double start_yaw = 0.0;
  /// Spin about the motor axis at the start. Nonzero keeps the robot off the
  /// symmetric rest pose where every planar command is unreachable.
  double start_roll = 0.4;
  std::uint64_t terrain_seed = 1;
};

/// A simulator resting at `start` after settling. Flat terrain when the
/// episode roughness is zero, otherwise generated from the terrain seed.
inline Simulator make_settled_simulator(const EnvSpec& spec, const RunSettings& run,
                                        const Vec2& start,
                                        std::shared_ptr<const ShellModel> shell = nullptr) {
  if (!shell) shell = std::make_shared<const ShellModel>(spec.shell);
  const auto& ep = spec.episode;
  auto terrain = std::make_shared<const Terrain>(Terrain::generate(
      ep.terrain_roughness, ep.terrain_correlation, ep.terrain_extent, ep.terrain_cell,
      run.terrain_seed));
  Simulator sim(shell, terrain, spec.motor, spec.contact, spec.physics, ep.physics_dt);
  const double hang = -kPi / 2 - run.start_roll;
  sim.set_state(resting_state(*shell, *terrain, lying_orientation(run.start_yaw, run.start_roll),
                              hang, start.x(), start.y()));
  sim.motor().set_setpoint(0.0);
  sim.step_n(static_cast<int>(std::lround(run.settle_time / ep.physics_dt)));
  RobotState s = sim.state();
  s.time = 0.0;
  sim.set_state(s);
  return sim;
}

/// Scripted operator: heads for the active waypoint, advancing it inside the
/// capture radius, until the course is done or the timeout passes.
inline TrajectoryLog follow_course(Controller& ctrl, const WaypointCourse& course,
                                   const EnvSpec& spec, const RunSettings& run = {},
                                   std::shared_ptr<const ShellModel> shell = nullptr) {
  course.validate();
  Simulator sim = make_settled_simulator(spec, run, course.waypoints.front(), std::move(shell));
  ctrl.reset();
  TrajectoryLog log;
  log.controller = ctrl.id();
  log.waypoints = course.waypoints;
  log.capture_radius = course.capture_radius;
  log.seed = run.terrain_seed;
  const int substeps = spec.episode.substeps();
  std::size_t k = 0;
  bool completed = false;
  for (;;) {
    const RobotState& s = sim.state();
    const Vec2 p = s.position.head<2>();
    while (k < course.waypoints.size() && (course.waypoints[k] - p).norm() < course.capture_radius) {
      ++k;
    }
    TrajectorySample x = TrajectorySample::from_state(s);
    x.controller = ctrl.id();
    x.contact_count = static_cast<int>(sim.contacts().size());
    x.waypoint = static_cast<int>(std::min(k, course.waypoints.size() - 1));
    if (k == course.waypoints.size()) {
      completed = true;
      log.samples.push_back(x);
      break;
    }
    if (s.time >= run.timeout - 1e-9) {
      log.samples.push_back(x);
      break;
    }
    const Vec2 to = course.waypoints[k] - p;
    const std::optional<Command> cmd =
        to.norm() > 1e-9 ? std::optional<Command>(Command{to.normalized()}) : std::nullopt;
    x.command = cmd ? std::optional<Vec2>(cmd->d) : std::nullopt;
    x.setpoint = ctrl.setpoint(s, cmd);
    log.samples.push_back(x);
    sim.motor().set_setpoint(x.setpoint);
    sim.step_n(substeps);
  }
  log.finalize(completed);
  return log;
}

/// Fixed heading run without a course, for `rock sim`.
inline TrajectoryLog run_heading(Controller& ctrl, double heading, double duration,
                                 const EnvSpec& spec, const RunSettings& run = {}) {
  Simulator sim = make_settled_simulator(spec, run, Vec2::Zero());
  ctrl.reset();
  TrajectoryLog log;
  log.controller = ctrl.id();
  log.seed = run.terrain_seed;
  const Command cmd = Command::from_angle(heading);
  const int substeps = spec.episode.substeps();
  for (;;) {
    const RobotState& s = sim.state();
    TrajectorySample x = TrajectorySample::from_state(s);
    x.controller = ctrl.id();
    x.contact_count = static_cast<int>(sim.contacts().size());
    if (s.time >= duration - 1e-9) {
      log.samples.push_back(x);
      break;
    }
    x.command = cmd.d;
    x.setpoint = ctrl.setpoint(s, cmd);
    log.samples.push_back(x);
    sim.motor().set_setpoint(x.setpoint);
    sim.step_n(substeps);
  }
  log.finalize(false);
  return log;
}

/// Piecewise-constant motor setpoint schedule.
struct SwingProfile {
  struct Segment {
    double duration = 0.0;  ///< s
    double setpoint = 0.0;  ///< rad/s
  };
  std::vector<Segment> segments;

  /// Full speed for `swing` seconds, then hold zero (brake) for `brake`.
  static SwingProfile max_effort(double speed, double swing, double brake) {
    return {{{swing, speed}, {brake, 0.0}}};
  }
  static SwingProfile zero(double duration) { return {{{duration, 0.0}}}; }

  double duration() const {
    double t = 0.0;
    for (const auto& s : segments) t += s.duration;
    return t;
  }
  double setpoint_at(double t) const {
    for (const auto& s : segments) {
      if (t < s.duration) return s.setpoint;
      t -= s.duration;
    }
    return 0.0;
  }
};

struct JumpTrial {
  JumpResult result;
  std::vector<ContactSample> history;
};

/// Runs `profile` from hanging rest (after `settle` seconds) and checks the
/// contact history for a flight phase.
inline JumpTrial jump_trial(const SwingProfile& profile, const EnvSpec& spec,
                            double settle = 0.5) {
  auto shell = std::make_shared<const ShellModel>(spec.shell);
  auto terrain = std::make_shared<const Terrain>(Terrain::flat());
  const double dt = spec.episode.physics_dt;
  Simulator sim(shell, terrain, spec.motor, spec.contact, spec.physics, dt);
  sim.set_state(resting_state(*shell, *terrain, lying_orientation(0.0, 0.0), -kPi / 2));
  sim.motor().set_setpoint(0.0);
  sim.step_n(static_cast<int>(std::lround(settle / dt)));
  JumpTrial out;
  const int n = static_cast<int>(std::lround(profile.duration() / dt));
  out.history.reserve(n);
  for (int i = 0; i < n; ++i) {
    sim.motor().set_setpoint(profile.setpoint_at(i * dt));
    sim.step();
    const SurfaceProbe probe = deepest_point(sim.state(), *shell, *terrain);
    out.history.push_back({(i + 1) * dt, sim.contacts().size(), -probe.penetration});
  }
  if (out.history.empty()) out.history.push_back({0.0, 1, 0.0});
  out.result = jump_impulse_check(out.history);
  return out;
}

struct ComparisonRow {
  std::string controller;
  int runs = 0;
  double completion_rate = 0.0;
  double average_speed = 0.0;  ///< mean over runs
  double max_cross_track = 0.0;  ///< mean over runs of the per-run maximum
};

/// Factory so each parallel run gets its own controller instance.
struct ControllerFactory {
  std::string id;
  std::function<std::unique_ptr<Controller>()> make;
};

/// Runs every controller on every terrain seed with identical settings.
inline std::vector<ComparisonRow> compare_controllers(
    const std::vector<ControllerFactory>& controllers, const WaypointCourse& course,
    const EnvSpec& spec, const RunSettings& run, const std::vector<std::uint64_t>& seeds,
    int threads = 1) {
  std::vector<ComparisonRow> rows;
  if (seeds.empty()) return rows;
  auto shell = std::make_shared<const ShellModel>(spec.shell);
  for (const auto& f : controllers) {
    std::vector<TrajectorySummary> res(seeds.size());
    parallel_for(seeds.size(), threads, [&](std::size_t i) {
      RunSettings r = run;
      r.terrain_seed = seeds[i];
      auto c = f.make();
      res[i] = follow_course(*c, course, spec, r, shell).summary;
    });
    ComparisonRow row;
    row.controller = f.id;
    row.runs = static_cast<int>(seeds.size());
    for (const auto& s : res) {
      row.completion_rate += s.completed ? 1.0 : 0.0;
      row.average_speed += s.average_speed;
      row.max_cross_track += s.max_cross_track;
    }
    row.completion_rate /= row.runs;
    row.average_speed /= row.runs;
    row.max_cross_track /= row.runs;
    rows.push_back(row);
  }
  return rows;
}

inline std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream ss;
  ss << "controller,runs,completion_rate,average_speed,max_cross_track\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%d,%.6f,%.6f,%.6f\n", r.controller.c_str(), r.runs,
                  r.completion_rate, r.average_speed, r.max_cross_track);
    ss << buf;
  }
  return ss.str();
}

inline std::string comparison_table(const std::vector<ComparisonRow>& rows) {
  std::ostringstream ss;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-12s %5s %10s %12s %12s\n", "controller", "runs", "complete",
                "avg_speed", "cross_track");
  ss << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-12s %5d %10.3f %12.4f %12.4f\n", r.controller.c_str(),
                  r.runs, r.completion_rate, r.average_speed, r.max_cross_track);
    ss << buf;
  }
  return ss.str();
}

}  // namespace rock
