#pragma once

#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rock/dynamics.hpp"
#include "rock/errors.hpp"
#include "rock/math.hpp"

namespace rock {

using Json = nlohmann::json;

/// One control-step record. Also the payload of teleop state frames.
struct TrajectorySample {
  double t = 0.0;
  Vec3 pos = Vec3::Zero();
  Quat quat = Quat::Identity();
  double pendulum = 0.0;
  double motor_vel = 0.0;
  double setpoint = 0.0;
  std::optional<Vec2> command;
  int contact_count = 0;
  std::string controller;
  int waypoint = -1;  ///< active waypoint, -1 outside course runs

  static TrajectorySample from_state(const RobotState& s) {
    TrajectorySample x;
    x.t = s.time;
    x.pos = s.position;
    x.quat = s.orientation;
    x.pendulum = s.pendulum_angle();
    x.motor_vel = s.pendulum_velocity;
    return x;
  }
};

struct TrajectorySummary {
  bool completed = false;
  double completion_time = 0.0;  ///< s, 0 when not completed
  double duration = 0.0;
  double path_length = 0.0;
  double average_speed = 0.0;
  double max_cross_track = 0.0;
};

inline double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (a + t * ab - p).norm();
}

/// Distance from `p` to the course segment that ends at waypoint `k`.
inline double cross_track(const Vec2& p, const std::vector<Vec2>& wps, int k) {
  if (wps.empty() || k < 0) return 0.0;
  k = std::min<int>(k, static_cast<int>(wps.size()) - 1);
  if (k == 0) return (p - wps[0]).norm();
  return segment_distance(p, wps[k - 1], wps[k]);
}

struct TrajectoryLog {
  std::string controller;
  std::vector<Vec2> waypoints;
  double capture_radius = 0.0;
  std::uint64_t seed = 0;
  std::vector<TrajectorySample> samples;
  TrajectorySummary summary;

  /// Metrics from raw samples. Duration spans the first to the last sample.
  TrajectorySummary compute_summary(bool completed) const {
    TrajectorySummary s;
    s.completed = completed;
    if (samples.empty()) return s;
    for (std::size_t i = 1; i < samples.size(); ++i) {
      s.path_length += (samples[i].pos.head<2>() - samples[i - 1].pos.head<2>()).norm();
    }
    for (const auto& x : samples) {
      s.max_cross_track = std::max(s.max_cross_track,
                                   cross_track(x.pos.head<2>(), waypoints, x.waypoint));
    }
    s.duration = samples.back().t - samples.front().t;
    s.average_speed = s.duration > 0.0 ? s.path_length / s.duration : 0.0;
    s.completion_time = completed ? s.duration : 0.0;
    return s;
  }

  void finalize(bool completed) { summary = compute_summary(completed); }

  void write_jsonl(std::ostream& os) const;
  std::string to_jsonl() const {
    std::ostringstream ss;
    write_jsonl(ss);
    return ss.str();
  }
  static TrajectoryLog read_jsonl(std::istream& is);
};

inline Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Json sample_json(const TrajectorySample& s, const char* type = "sample") {
  Json j;
  j["type"] = type;
  j["t"] = s.t;
  j["pos"] = vec_json(s.pos);
  j["quat"] = Json::array({s.quat.w(), s.quat.x(), s.quat.y(), s.quat.z()});
  j["pendulum"] = s.pendulum;
  j["motor_vel"] = s.motor_vel;
  j["setpoint"] = s.setpoint;
  j["command"] = s.command ? Json::array({s.command->x(), s.command->y()}) : Json(nullptr);
  j["contact_count"] = s.contact_count;
  j["controller"] = s.controller;
  if (s.waypoint >= 0) j["waypoint"] = s.waypoint;
  return j;
}

inline TrajectorySample sample_from_json(const Json& j) {
  try {
    TrajectorySample s;
    s.t = j.at("t").get<double>();
    const auto& p = j.at("pos");
    s.pos = Vec3(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
    const auto& q = j.at("quat");
    s.quat = Quat(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                  q.at(3).get<double>());
    s.pendulum = j.at("pendulum").get<double>();
    s.motor_vel = j.at("motor_vel").get<double>();
    s.setpoint = j.value("setpoint", 0.0);
    if (j.contains("command") && !j["command"].is_null()) {
      s.command = Vec2(j["command"].at(0).get<double>(), j["command"].at(1).get<double>());
    }
    s.contact_count = j.value("contact_count", 0);
    s.controller = j.value("controller", std::string());
    s.waypoint = j.value("waypoint", -1);
    return s;
  } catch (const Json::exception& e) {
    throw InputDomainError(std::string("trajectory: malformed sample: ") + e.what());
  }
}

inline void TrajectoryLog::write_jsonl(std::ostream& os) const {
  Json h;
  h["type"] = "header";
  h["schema"] = 1;
  h["controller"] = controller;
  h["seed"] = seed;
  Json wps = Json::array();
  for (const auto& w : waypoints) wps.push_back(Json::array({w.x(), w.y()}));
  h["waypoints"] = wps;
  h["capture_radius"] = capture_radius;
  os << h.dump() << "\n";
  for (const auto& s : samples) os << sample_json(s).dump() << "\n";
  Json m;
  m["type"] = "summary";
  m["completed"] = summary.completed;
  m["completion_time"] = summary.completion_time;
  m["duration"] = summary.duration;
  m["path_length"] = summary.path_length;
  m["average_speed"] = summary.average_speed;
  m["max_cross_track"] = summary.max_cross_track;
  os << m.dump() << "\n";
}

/// Reads a log written by write_jsonl or a teleop flight log. Sample times
/// must increase strictly; a stored summary must match the one recomputed
/// from the samples within 1e-9.
inline TrajectoryLog TrajectoryLog::read_jsonl(std::istream& is) {
  TrajectoryLog log;
  std::optional<Json> stored;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw InputDomainError("trajectory: line " + std::to_string(lineno) + ": " + e.what());
    }
    const std::string type = j.value("type", std::string());
    if (type == "header") {
      log.controller = j.value("controller", std::string());
      log.seed = j.value("seed", std::uint64_t{0});
      log.capture_radius = j.value("capture_radius", 0.0);
      for (const auto& w : j.value("waypoints", Json::array())) {
        log.waypoints.emplace_back(w.at(0).get<double>(), w.at(1).get<double>());
      }
    } else if (type == "sample" || type == "state") {
      TrajectorySample s = sample_from_json(j);
      if (!log.samples.empty() && !(s.t > log.samples.back().t)) {
        throw InputDomainError("trajectory: timestamps not strictly increasing at line " +
                               std::to_string(lineno));
      }
      log.samples.push_back(std::move(s));
    } else if (type == "summary") {
      stored = j;
    }
  }
  const bool completed = stored ? stored->value("completed", false) : false;
  log.finalize(completed);
  if (stored) {
    auto check = [&](const char* key, double v) {
      const double s = stored->value(key, 0.0);
      if (std::abs(s - v) > 1e-9) {
        throw InputDomainError(std::string("trajectory: stored ") + key +
                               " disagrees with samples");
      }
    };
    check("duration", log.summary.duration);
    check("path_length", log.summary.path_length);
    check("average_speed", log.summary.average_speed);
    check("max_cross_track", log.summary.max_cross_track);
    check("completion_time", log.summary.completion_time);
  }
  return log;
}

}  // namespace rock
