#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rock/checkpoint.hpp"
#include "rock/env.hpp"
#include "rock/errors.hpp"
#include "rock/harness.hpp"
#include "rock/ppo.hpp"
#include "rock/projection.hpp"

namespace rock {

inline constexpr int kConfigSchemaVersion = 1;

struct CourseSettings {
  WaypointCourse course = WaypointCourse::rectangle();
  RunSettings run;
  double terrain_roughness = 0.0;  ///< courses default to flat ground
  std::string controller = "projection";  ///< projection | policy | quantized
  std::string checkpoint;
};

/// Liftoff-capable reference robot and its swing profile.
struct JumpSettings {
  double shell_mass = 0.4;
  double pendulum_mass = 0.5;
  double pendulum_arm = 0.06;
  double max_torque = 1.0;
  double velocity_gain = 0.2;
  double max_speed = 30.0;
  double swing_setpoint = 30.0;  ///< rad/s
  double swing_duration = 0.3;
  double brake_duration = 1.7;
  double settle_time = 0.5;

  EnvSpec apply(EnvSpec spec) const {
    spec.shell.shell_mass = shell_mass;
    spec.shell.pendulum_mass = pendulum_mass;
    spec.shell.pendulum_arm = pendulum_arm;
    spec.motor.max_torque = max_torque;
    spec.motor.velocity_gain = velocity_gain;
    spec.motor.max_speed = max_speed;
    return spec;
  }
  SwingProfile profile() const {
    return SwingProfile::max_effort(swing_setpoint, swing_duration, brake_duration);
  }
};

struct SimSettings {
  double duration = 10.0;
  double heading = 0.0;
  double terrain_roughness = 0.0;
  std::string controller = "projection";
  std::string checkpoint;
};

struct TeleopSettings {
  int port = 8765;
  double pacing = 1.0;  ///< simulated seconds per wall second
  double broadcast_hz = 30.0;
  double terrain_roughness = 0.0;
  std::string controller = "projection";
  std::string checkpoint;
  std::string flight_log = "flight_log.jsonl";
};

struct CompareSettings {
  int scenarios = 4;
  double terrain_roughness = 0.005;
  std::string checkpoint;
};

/// Everything a run needs, loaded from one INI file.
struct Scenario {
  EnvSpec env;
  PdGains controller;
  TrainConfig train;
  CourseSettings course;
  JumpSettings jump;
  SimSettings sim;
  TeleopSettings teleop;
  CompareSettings compare;
};

namespace detail {

using Ptree = boost::property_tree::ptree;

/// Shortest text that parses back to the same double.
inline std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::vector<double> parse_numbers(const std::string& s, char sep) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item.substr(b), &used);
    } catch (const std::exception&) {
      throw ConfigError("config: not a number: '" + item + "'");
    }
    if (item.find_first_not_of(" \t", b + used) != std::string::npos) {
      throw ConfigError("config: not a number: '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

/// Binds INI keys to struct fields, in both directions. The same table
/// drives parsing, unknown-key rejection and the canonical dump.
class Binder {
 public:
  struct Field {
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
  };

  void add(const std::string& key, double& v) {
    fields_[key] = {[&v, key](const std::string& s) { v = number(key, s); },
                    [&v] { return fmt_double(v); }};
    order_.push_back(key);
  }
  void add(const std::string& key, int& v) {
    fields_[key] = {[&v, key](const std::string& s) {
                      const double d = number(key, s);
                      if (d != std::floor(d)) throw ConfigError("config: " + key + " must be an integer");
                      v = static_cast<int>(d);
                    },
                    [&v] { return std::to_string(v); }};
    order_.push_back(key);
  }
  void add(const std::string& key, std::uint64_t& v) {
    fields_[key] = {[&v, key](const std::string& s) {
                      try {
                        v = std::stoull(s);
                      } catch (const std::exception&) {
                        throw ConfigError("config: " + key + " must be an unsigned integer");
                      }
                    },
                    [&v] { return std::to_string(v); }};
    order_.push_back(key);
  }
  void add(const std::string& key, bool& v) {
    fields_[key] = {[&v, key](const std::string& s) {
                      if (s == "true" || s == "1") v = true;
                      else if (s == "false" || s == "0") v = false;
                      else throw ConfigError("config: " + key + " must be true or false");
                    },
                    [&v] { return std::string(v ? "true" : "false"); }};
    order_.push_back(key);
  }
  void add(const std::string& key, std::string& v) {
    fields_[key] = {[&v](const std::string& s) { v = s; }, [&v] { return v; }};
    order_.push_back(key);
  }
  void add(const std::string& key, Vec3& v) {
    fields_[key] = {[&v, key](const std::string& s) {
                      const auto n = parse_numbers(s, ',');
                      if (n.size() != 3) throw ConfigError("config: " + key + " needs 3 numbers");
                      v = Vec3(n[0], n[1], n[2]);
                    },
                    [&v] {
                      return fmt_double(v.x()) + "," + fmt_double(v.y()) + "," + fmt_double(v.z());
                    }};
    order_.push_back(key);
  }
  void add(const std::string& key, std::vector<int>& v) {
    fields_[key] = {[&v, key](const std::string& s) {
                      v.clear();
                      for (double d : parse_numbers(s, ',')) {
                        if (d != std::floor(d) || d <= 0) throw ConfigError("config: " + key + " needs positive integers");
                        v.push_back(static_cast<int>(d));
                      }
                    },
                    [&v] {
                      std::string out;
                      for (int x : v) out += (out.empty() ? "" : ",") + std::to_string(x);
                      return out;
                    }};
    order_.push_back(key);
  }
  void add(const std::string& key, std::optional<double>& v) {
    fields_[key] = {[&v, key](const std::string& s) {
                      if (s == "none" || s.empty()) v.reset();
                      else v = number(key, s);
                    },
                    [&v] { return v ? fmt_double(*v) : std::string("none"); }};
    order_.push_back(key);
  }
  void add(const std::string& key, std::vector<Vec2>& v) {
    fields_[key] = {[&v, key](const std::string& s) {
                      v.clear();
                      std::stringstream ss(s);
                      std::string pt;
                      while (std::getline(ss, pt, ';')) {
                        if (pt.find_first_not_of(" \t") == std::string::npos) continue;
                        const auto n = parse_numbers(pt, ',');
                        if (n.size() != 2) throw ConfigError("config: " + key + " needs x,y pairs");
                        v.emplace_back(n[0], n[1]);
                      }
                    },
                    [&v] {
                      std::string out;
                      for (const auto& p : v) {
                        out += (out.empty() ? "" : "; ") + fmt_double(p.x()) + "," + fmt_double(p.y());
                      }
                      return out;
                    }};
    order_.push_back(key);
  }

  bool has(const std::string& key) const { return fields_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { fields_.at(key).set(value); }
  std::string get(const std::string& key) const { return fields_.at(key).get(); }
  const std::vector<std::string>& keys() const { return order_; }

 private:
  static double number(const std::string& key, const std::string& s) {
    const auto n = parse_numbers(s, ',');
    if (n.size() != 1) throw ConfigError("config: " + key + " must be a number");
    return n[0];
  }
  std::map<std::string, Field> fields_;
  std::vector<std::string> order_;
};

/// Section name to binder, in canonical order.
inline std::vector<std::pair<std::string, Binder>> bind(Scenario& s) {
  std::vector<std::pair<std::string, Binder>> out;
  auto section = [&](const std::string& name) -> Binder& {
    out.emplace_back(name, Binder());
    return out.back().second;
  };
  {
    auto& b = section("shell");
    auto& p = s.env.shell;
    b.add("base_radius", p.base_radius);
    b.add("bulge_amplitude", p.bulge_amplitude);
    b.add("taper_exponent", p.taper_exponent);
    b.add("axis", p.axis);
    b.add("bulge_direction", p.bulge_direction);
    b.add("mesh_resolution", p.mesh_resolution);
    b.add("shell_mass", p.shell_mass);
    b.add("pendulum_mass", p.pendulum_mass);
    b.add("pendulum_arm", p.pendulum_arm);
  }
  {
    auto& b = section("physics");
    b.add("gravity", s.env.physics.gravity);
    b.add("rotor_inertia", s.env.physics.rotor_inertia);
    b.add("dt", s.env.episode.physics_dt);
  }
  {
    auto& b = section("motor");
    b.add("max_torque", s.env.motor.max_torque);
    b.add("velocity_gain", s.env.motor.velocity_gain);
    b.add("max_speed", s.env.motor.max_speed);
  }
  {
    auto& b = section("contact");
    auto& c = s.env.contact;
    b.add("normal_stiffness", c.normal_stiffness);
    b.add("normal_damping", c.normal_damping);
    b.add("friction", c.friction);
    b.add("friction_regularization", c.friction_regularization);
    b.add("rolling_damping", c.rolling_damping);
  }
  {
    auto& b = section("controller");
    b.add("kp", s.controller.kp);
    b.add("kd", s.controller.kd);
    b.add("max_speed", s.controller.max_speed);
  }
  {
    auto& b = section("env");
    auto& e = s.env.episode;
    b.add("max_episode_length", e.max_episode_length);
    b.add("terrain_roughness", e.terrain_roughness);
    b.add("terrain_correlation", e.terrain_correlation);
    b.add("terrain_extent", e.terrain_extent);
    b.add("terrain_cell", e.terrain_cell);
    b.add("command_resample_period", e.command_resample_period);
    b.add("control_period", e.control_period);
    b.add("init_yaw_range", e.init_yaw_range);
    b.add("init_roll_range", e.init_roll_range);
    b.add("init_pendulum_range", e.init_pendulum_range);
    b.add("fixed_command_heading", e.fixed_command_heading);
    b.add("heading_relative", s.env.observation.heading_relative);
  }
  {
    auto& b = section("reward");
    auto& r = s.env.reward;
    b.add("w_speed", r.w_speed);
    b.add("w_action_rate", r.w_action_rate);
    b.add("w_spin", r.w_spin);
    b.add("w_upright", r.w_upright);
    b.add("spin_limit", r.spin_limit);
  }
  {
    auto& b = section("train");
    auto& t = s.train;
    b.add("num_envs", t.num_envs);
    b.add("horizon", t.horizon);
    b.add("gamma", t.gamma);
    b.add("gae_lambda", t.gae_lambda);
    b.add("clip_ratio", t.clip_ratio);
    b.add("learning_rate", t.learning_rate);
    b.add("epochs", t.epochs);
    b.add("minibatch_size", t.minibatch_size);
    b.add("entropy_coef", t.entropy_coef);
    b.add("value_coef", t.value_coef);
    b.add("max_grad_norm", t.max_grad_norm);
    b.add("iterations", t.iterations);
    b.add("action_std", t.action_std);
    b.add("action_std_final", t.action_std_final);
    b.add("hidden", t.hidden);
    b.add("checkpoint_every", t.checkpoint_every);
    b.add("threads", t.threads);
  }
  {
    auto& b = section("course");
    auto& c = s.course;
    b.add("waypoints", c.course.waypoints);
    b.add("capture_radius", c.course.capture_radius);
    b.add("timeout", c.run.timeout);
    b.add("settle_time", c.run.settle_time);
    b.add("start_yaw", c.run.start_yaw);
    b.add("start_roll", c.run.start_roll);
    b.add("terrain_roughness", c.terrain_roughness);
    b.add("controller", c.controller);
    b.add("checkpoint", c.checkpoint);
  }
  {
    auto& b = section("jump");
    auto& j = s.jump;
    b.add("shell_mass", j.shell_mass);
    b.add("pendulum_mass", j.pendulum_mass);
    b.add("pendulum_arm", j.pendulum_arm);
    b.add("max_torque", j.max_torque);
    b.add("velocity_gain", j.velocity_gain);
    b.add("max_speed", j.max_speed);
    b.add("swing_setpoint", j.swing_setpoint);
    b.add("swing_duration", j.swing_duration);
    b.add("brake_duration", j.brake_duration);
    b.add("settle_time", j.settle_time);
  }
  {
    auto& b = section("sim");
    b.add("duration", s.sim.duration);
    b.add("heading", s.sim.heading);
    b.add("terrain_roughness", s.sim.terrain_roughness);
    b.add("controller", s.sim.controller);
    b.add("checkpoint", s.sim.checkpoint);
  }
  {
    auto& b = section("compare");
    b.add("scenarios", s.compare.scenarios);
    b.add("terrain_roughness", s.compare.terrain_roughness);
    b.add("checkpoint", s.compare.checkpoint);
  }
  {
    auto& b = section("teleop");
    b.add("port", s.teleop.port);
    b.add("pacing", s.teleop.pacing);
    b.add("broadcast_hz", s.teleop.broadcast_hz);
    b.add("terrain_roughness", s.teleop.terrain_roughness);
    b.add("controller", s.teleop.controller);
    b.add("checkpoint", s.teleop.checkpoint);
    b.add("flight_log", s.teleop.flight_log);
  }
  return out;
}

}  // namespace detail

inline void validate(const Scenario& s) {
  try {
    ShellModel probe(s.env.shell);
    (void)probe;
  } catch (const ConstructionError& e) {
    throw ConfigError(std::string("shell: ") + e.what());
  }
  s.env.episode.validate();
  s.env.reward.validate();
  try {
    s.env.contact.validate();
  } catch (const ConstructionError& e) {
    throw ConfigError(e.what());
  }
  if (!(s.env.motor.max_torque >= 0.0) || !(s.env.motor.velocity_gain >= 0.0) ||
      !(s.env.motor.max_speed > 0.0)) {
    throw ConfigError("motor: torque and gain must be non-negative, max_speed positive");
  }
  if (s.controller.kp < 0.0 || s.controller.kd < 0.0) throw ConfigError("controller: gains must be >= 0");
  s.train.validate();
  s.course.course.validate();
  if (!(s.course.run.timeout > 0.0) || s.course.run.settle_time < 0.0) {
    throw ConfigError("course: timeout must be positive");
  }
  if (!(s.teleop.pacing > 0.0) || !(s.teleop.broadcast_hz > 0.0) || s.teleop.port < 0 ||
      s.teleop.port > 65535) {
    throw ConfigError("teleop: pacing and rate must be positive, port in [0, 65535]");
  }
  if (s.sim.terrain_roughness < 0.0 || s.teleop.terrain_roughness < 0.0 ||
      s.compare.terrain_roughness < 0.0 || s.course.terrain_roughness < 0.0) {
    throw ConfigError("terrain_roughness must be >= 0");
  }
  if (!(s.sim.duration > 0.0) || s.compare.scenarios < 0) {
    throw ConfigError("sim duration must be positive, compare scenarios >= 0");
  }
  for (const auto* c : {&s.course.controller, &s.sim.controller, &s.teleop.controller}) {
    if (*c != "projection" && *c != "policy" && *c != "quantized") {
      throw ConfigError("controller must be projection, policy or quantized, got '" + *c + "'");
    }
  }
}

/// Parses INI text on top of the defaults. Unknown sections or keys and a
/// schema_version other than the supported one are errors.
inline Scenario parse_scenario(const std::string& text) {
  detail::Ptree pt;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  Scenario s;
  auto binders = detail::bind(s);
  for (const auto& [key, value] : pt) {
    auto it = std::find_if(binders.begin(), binders.end(),
                           [&](const auto& b) { return b.first == key; });
    if (it == binders.end()) {
      if (key != "schema_version" || !value.empty()) {
        throw ConfigError("config: unknown section or key '" + key + "'");
      }
      if (value.data() != std::to_string(kConfigSchemaVersion)) {
        throw ConfigError("config: unsupported schema_version " + value.data());
      }
      continue;
    }
    for (const auto& [k, v] : value) {
      if (!it->second.has(k)) throw ConfigError("config: unknown key '" + k + "' in [" + key + "]");
      it->second.set(k, v.data());
    }
  }
  validate(s);
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

/// Canonical INI text of every setting; parse_scenario(to_ini(s)) == s.
inline std::string to_ini(const Scenario& s) {
  Scenario copy = s;
  auto binders = detail::bind(copy);
  std::ostringstream os;
  os << "schema_version = " << kConfigSchemaVersion << "\n";
  for (const auto& [name, b] : binders) {
    os << "\n[" << name << "]\n";
    for (const auto& k : b.keys()) os << k << " = " << b.get(k) << "\n";
  }
  return os.str();
}

inline std::uint64_t config_hash(const Scenario& s) { return fnv1a64(to_ini(s)); }

}  // namespace rock
