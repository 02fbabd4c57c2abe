#pragma once

#include <cmath>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>

#include "json.hpp"
#include "rock/env.hpp"
#include "rock/harness.hpp"
#include "rock/policy.hpp"
#include "rock/projection.hpp"
#include "rock/quantized.hpp"
#include "rock/trajectory.hpp"

namespace rock {

/// Scenario pieces a teleop session is built from.
struct TeleopScenario {
  EnvSpec spec;
  PdGains gains;
  RunSettings run;  ///< start pose and terrain seed for the initial state
  std::shared_ptr<const PolicyNet> policy;  ///< may be null
  std::shared_ptr<const QuantizedPolicy> quantized;  ///< may be null
  std::string initial_mode = "projection";
  double pacing = 1.0;
};

/// One live simulation driven by remote clients. Owned by the simulation
/// thread; network code talks to it only through handle_message.
class TeleopSession {
 public:
  explicit TeleopSession(TeleopScenario sc, std::string id = "session-1")
      : sc_(std::move(sc)), id_(std::move(id)),
        shell_(std::make_shared<const ShellModel>(sc_.spec.shell)) {
    set_mode(sc_.initial_mode);
    reset(sc_.run.terrain_seed);
  }

  const std::string& id() const noexcept { return id_; }
  const std::string& mode() const noexcept { return mode_; }
  const std::optional<Command>& command() const noexcept { return command_; }
  bool paused() const noexcept { return paused_; }
  double pacing() const noexcept { return sc_.pacing; }
  const RobotState& state() const { return sim_->state(); }
  const Simulator& simulator() const { return *sim_; }
  std::optional<int> driver() const noexcept { return driver_; }
  double last_setpoint() const noexcept { return setpoint_; }
  double control_period() const { return sc_.spec.episode.control_period; }

  void set_command(std::optional<Command> c) { command_ = c; }
  void set_paused(bool p) { paused_ = p; }

  /// Returns an error message, or nullopt when the mode was applied.
  std::optional<std::string> set_mode(const std::string& mode) {
    std::unique_ptr<Controller> c;
    if (mode == "projection") {
      c = std::make_unique<ProjectionController>(sc_.gains);
    } else if (mode == "policy") {
      if (!sc_.policy) return "no policy loaded";
      c = std::make_unique<PolicyController>(sc_.policy, "policy", sc_.spec.observation,
                                             sc_.spec.motor.max_speed);
    } else if (mode == "quantized") {
      if (!sc_.quantized) return "no policy loaded";
      c = std::make_unique<QuantizedController>(sc_.quantized, "quantized",
                                                sc_.spec.observation, sc_.spec.motor.max_speed);
    } else {
      return "unknown controller '" + mode + "'";
    }
    controller_ = std::move(c);
    mode_ = mode;
    return std::nullopt;
  }

  /// Back to the scenario's initial distribution: terrain from `seed` and a
  /// start yaw drawn from it.
  void reset(std::uint64_t seed) {
    RunSettings r = sc_.run;
    r.terrain_seed = seed;
    std::mt19937_64 rng(derive_seed(seed, 7));
    r.start_yaw = std::uniform_real_distribution<double>(-kPi, kPi)(rng);
    sim_.emplace(make_settled_simulator(sc_.spec, r, Vec2::Zero(), shell_));
    controller_->reset();
    setpoint_ = 0.0;
    time_offset_ = last_time_;
    seed_ = seed;
  }

  std::uint64_t seed() const noexcept { return seed_; }

  /// One control period. No-op while paused.
  void advance() {
    if (paused_) return;
    setpoint_ = controller_->setpoint(sim_->state(), command_);
    sim_->motor().set_setpoint(setpoint_);
    sim_->step_n(sc_.spec.episode.substeps());
    last_time_ = time_offset_ + sim_->state().time;
  }

  /// Session clock: keeps increasing across resets.
  double session_time() const { return time_offset_ + sim_->state().time; }

  TrajectorySample snapshot() const {
    TrajectorySample x = TrajectorySample::from_state(sim_->state());
    x.t = session_time();
    x.setpoint = setpoint_;
    x.command = command_ ? std::optional<Vec2>(command_->d) : std::nullopt;
    x.contact_count = static_cast<int>(sim_->contacts().size());
    x.controller = mode_;
    return x;
  }

  /// Claims the driver seat for `client` if it is free. Returns whether
  /// `client` is the driver afterwards.
  bool claim_driver(int client) {
    if (!driver_) driver_ = client;
    return *driver_ == client;
  }
  void release_driver(int client) {
    if (driver_ && *driver_ == client) driver_.reset();
  }

 private:
  TeleopScenario sc_;
  std::string id_;
  std::shared_ptr<const ShellModel> shell_;
  std::optional<Simulator> sim_;
  std::unique_ptr<Controller> controller_;
  std::string mode_;
  std::optional<Command> command_;
  std::optional<int> driver_;
  bool paused_ = false;
  double setpoint_ = 0.0;
  double time_offset_ = 0.0;
  double last_time_ = 0.0;
  std::uint64_t seed_ = 0;
};

inline Json error_reply(const std::string& message) {
  return Json{{"type", "error"}, {"message", message}};
}

inline Json ack_reply(const std::string& of) { return Json{{"type", "ack"}, {"of", of}}; }

/// Applies one client message. Commands are silent on success; other
/// messages are acknowledged. The first client to send a state-changing
/// message becomes the driver; other clients are read-only.
inline std::optional<Json> handle_message(TeleopSession& session, int client,
                                          const std::string& text) {
  Json m;
  try {
    m = Json::parse(text);
  } catch (const Json::parse_error&) {
    return error_reply("malformed message");
  }
  if (!m.is_object() || !m.contains("type") || !m["type"].is_string()) {
    return error_reply("message needs a string 'type'");
  }
  const std::string type = m["type"].get<std::string>();
  auto need_driver = [&]() -> std::optional<Json> {
    if (!session.claim_driver(client)) return error_reply("read-only client");
    return std::nullopt;
  };
  try {
    if (type == "command") {
      if (auto e = need_driver()) return e;
      const double dx = m.at("dx").get<double>(), dy = m.at("dy").get<double>();
      if (!std::isfinite(dx) || !std::isfinite(dy)) return error_reply("command must be finite");
      const Vec2 d(dx, dy);
      if (d.norm() > 1e-6) session.set_command(Command{d.normalized()});
      else session.set_command(std::nullopt);
      return std::nullopt;
    }
    if (type == "mode") {
      if (auto e = need_driver()) return e;
      if (auto err = session.set_mode(m.at("controller").get<std::string>())) return error_reply(*err);
      return ack_reply("mode");
    }
    if (type == "reset") {
      if (auto e = need_driver()) return e;
      const std::uint64_t seed =
          m.contains("seed") && !m["seed"].is_null() ? m["seed"].get<std::uint64_t>() : session.seed();
      session.reset(seed);
      return ack_reply("reset");
    }
    if (type == "pause" || type == "resume") {
      if (auto e = need_driver()) return e;
      session.set_paused(type == "pause");
      return ack_reply(type);
    }
  } catch (const Json::exception&) {
    return error_reply("bad fields for '" + type + "'");
  }
  return error_reply("unknown message type '" + type + "'");
}

inline Json state_frame(const TeleopSession& session) {
  return sample_json(session.snapshot(), "state");
}

/// Append-only JSON-lines record of states and client messages. Thread safe.
class FlightLog {
 public:
  FlightLog() = default;
  explicit FlightLog(const std::string& path) : out_(path, std::ios::app) {
    if (!out_) throw IoError("cannot open flight log " + path);
  }

  bool enabled() const { return out_.is_open(); }

  void state(const Json& frame) { write(frame); }

  void event(double t, int client, const std::string& message) {
    Json j{{"type", "event"}, {"t", t}, {"client", client}};
    try {
      j["message"] = Json::parse(message);
    } catch (const Json::parse_error&) {
      j["message"] = message;
    }
    write(j);
  }

 private:
  void write(const Json& j) {
    if (!out_.is_open()) return;
    std::lock_guard<std::mutex> lock(mu_);
    out_ << j.dump() << "\n";
    out_.flush();
  }
  std::ofstream out_;
  std::mutex mu_;
};

}  // namespace rock
