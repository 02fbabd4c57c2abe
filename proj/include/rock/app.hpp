#pragma once

// Subcommand bodies shared by the CLI and the tests. Every output file is a
// pure function of (scenario, seed); wall-clock measurements go to the
// console only.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "rock/checkpoint.hpp"
#include "rock/config.hpp"
#include "rock/harness.hpp"
#include "rock/ppo.hpp"
#include "rock/quantized.hpp"
#include "rock/teleop.hpp"
#include "rock/teleop_server.hpp"
#include "rock/trajectory.hpp"

namespace rock::app {

struct Context {
  Scenario scenario;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  std::ostream* console = &std::cout;

  std::ostream& out() const { return *console; }
  std::string path(const std::string& name) const {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
    return (std::filesystem::path(out_dir) / name).string();
  }
  /// `p` relative to the output directory when it lies inside it, so reports
  /// do not change with where the run was written.
  std::string report_path(const std::string& p) const {
    const auto rel = std::filesystem::path(p).lexically_normal().lexically_relative(
        std::filesystem::path(out_dir).lexically_normal());
    if (rel.empty() || *rel.begin() == "..") return p;
    return rel.string();
  }
};

/// Hardware reference for the rectangle course, printed next to our numbers.
inline constexpr double kHardwareCourseSpeed = 0.13;
inline constexpr double kHardwareCourseTime = 80.0;

/// Loads the checkpoint once; every instance shares the immutable net.
inline ControllerFactory controller_factory(const std::string& kind, const std::string& checkpoint,
                                            const Scenario& sc) {
  const ObservationOptions opts = sc.env.observation;
  const double max_speed = sc.env.motor.max_speed;
  if (kind == "projection") {
    const PdGains g = sc.controller;
    return {kind, [g] { return std::make_unique<ProjectionController>(g); }};
  }
  if (checkpoint.empty()) throw ConfigError("controller '" + kind + "' needs a checkpoint");
  if (kind == "policy") {
    auto net = std::make_shared<const PolicyNet>(load_policy(checkpoint));
    return {kind, [=] { return std::make_unique<PolicyController>(net, kind, opts, max_speed); }};
  }
  if (kind == "quantized") {
    auto net = std::make_shared<const QuantizedPolicy>(load_quantized(checkpoint));
    return {kind,
            [=] { return std::make_unique<QuantizedController>(net, kind, opts, max_speed); }};
  }
  throw ConfigError("unknown controller '" + kind + "'");
}

inline EnvSpec with_roughness(EnvSpec spec, double roughness) {
  spec.episode.terrain_roughness = roughness;
  return spec;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f || !(f << text) || !f.flush()) throw IoError("cannot write " + path);
}

inline std::string summary_line(const TrajectorySummary& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "completed=%s duration=%.2f s path=%.3f m avg_speed=%.4f m/s max_cross_track=%.4f m",
                s.completed ? "true" : "false", s.duration, s.path_length, s.average_speed,
                s.max_cross_track);
  return buf;
}

inline TrajectoryLog run_sim(const Context& ctx) {
  const Scenario& sc = ctx.scenario;
  RunSettings run = sc.course.run;
  run.terrain_seed = ctx.seed;
  auto ctrl = controller_factory(sc.sim.controller, sc.sim.checkpoint, sc).make();
  TrajectoryLog log = run_heading(*ctrl, sc.sim.heading, sc.sim.duration,
                                  with_roughness(sc.env, sc.sim.terrain_roughness), run);
  write_text(ctx.path("trajectory.jsonl"), log.to_jsonl());
  ctx.out() << "sim: " << summary_line(log.summary) << "\n";
  return log;
}

inline TrainResult run_train(const Context& ctx) {
  TrainConfig cfg = ctx.scenario.train;
  cfg.seed = ctx.seed;
  TrainResult r = train(cfg, ctx.scenario.env, ctx.out_dir, config_hash(ctx.scenario));
  if (!r.curve.empty()) {
    const CurveRow& last = r.curve.back();
    ctx.out() << "train: " << r.curve.size() << " iterations, final mean_speed=" << last.mean_speed
              << " mean_reward=" << last.mean_reward << "\n";
  }
  ctx.out() << "train: wrote " << r.checkpoint_path << "\n";
  return r;
}

/// Observations visited by `policy` acting with Gaussian exploration noise on
/// the scenario's environment.
inline std::vector<Observation> policy_observations(const EnvSpec& spec, const PolicyNet& policy,
                                                    std::size_t count, std::uint64_t seed,
                                                    double noise = 0.3) {
  std::vector<Observation> out;
  out.reserve(count);
  auto shell = std::make_shared<const ShellModel>(spec.shell);
  RockEnv env(spec, shell);
  std::mt19937_64 rng(derive_seed(seed, 11));
  std::normal_distribution<double> n01(0.0, 1.0);
  for (std::uint64_t ep = 0; out.size() < count; ++ep) {
    Observation o = env.reset(derive_seed(seed, ep));
    for (;;) {
      out.push_back(o);
      if (out.size() == count) break;
      const double a = std::clamp(forward(policy, o) + noise * n01(rng), -1.0, 1.0);
      const EnvStep r = env.step(a);
      if (r.done) break;
      o = r.observation;
    }
  }
  return out;
}

struct QuantizeReport {
  std::size_t calibration = 0;
  std::size_t held_out = 0;
  double max_abs_error = 0.0;
  double mean_abs_error = 0.0;
};

inline QuantizeReport run_quantize(const Context& ctx, const std::string& checkpoint,
                                   std::string output, std::size_t calibration = 10000,
                                   std::size_t held_out = 10000) {
  if (checkpoint.empty()) throw ConfigError("quantize: --checkpoint is required");
  if (output.empty()) output = ctx.path("policy_q.rock");
  const PolicyNet policy = load_policy(checkpoint);
  const EnvSpec& spec = ctx.scenario.env;
  const auto calib = policy_observations(spec, policy, calibration, derive_seed(ctx.seed, 1));
  const auto test = policy_observations(spec, policy, held_out, derive_seed(ctx.seed, 2));
  const QuantizedPolicy q = quantize(policy, calib);

  QuantizeReport rep;
  rep.calibration = calib.size();
  rep.held_out = test.size();
  double sum = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& o : test) {
    const double e = std::abs(q.forward(o) - forward(policy, o));
    rep.max_abs_error = std::max(rep.max_abs_error, e);
    sum += e;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rep.mean_abs_error = test.empty() ? 0.0 : sum / static_cast<double>(test.size());
  save_quantized(output, q, config_hash(ctx.scenario));

  Json j{{"checkpoint", checkpoint},       {"output", ctx.report_path(output)},
         {"calibration", rep.calibration}, {"held_out", rep.held_out},
         {"max_abs_error", rep.max_abs_error}, {"mean_abs_error", rep.mean_abs_error}};
  write_text(ctx.path("quantize_report.json"), j.dump(2) + "\n");
  ctx.out() << "quantize: max |q - f| = " << rep.max_abs_error << " over " << rep.held_out
            << " held-out observations; wrote " << output << "\n";
  if (!test.empty()) {
    ctx.out() << "quantize: " << 1e3 * secs / static_cast<double>(test.size())
              << " ms per float+int8 pair (wall clock, not logged)\n";
  }
  return rep;
}

inline TrajectoryLog run_eval_course(const Context& ctx) {
  const Scenario& sc = ctx.scenario;
  RunSettings run = sc.course.run;
  run.terrain_seed = ctx.seed;
  auto ctrl = controller_factory(sc.course.controller, sc.course.checkpoint, sc).make();
  TrajectoryLog log = follow_course(*ctrl, sc.course.course,
                                    with_roughness(sc.env, sc.course.terrain_roughness), run);
  write_text(ctx.path("course.jsonl"), log.to_jsonl());
  ctx.out() << "eval-course: " << summary_line(log.summary) << "\n";
  ctx.out() << "eval-course: hardware reference " << kHardwareCourseSpeed << " m/s over "
            << kHardwareCourseTime << " s (human driver, not a pass bound)\n";
  return log;
}

inline JumpTrial run_eval_jump(const Context& ctx) {
  const JumpSettings& js = ctx.scenario.jump;
  const JumpTrial t = jump_trial(js.profile(), js.apply(ctx.scenario.env), js.settle_time);
  std::string csv = "t,contact_count,clearance\n";
  char buf[128];
  for (const auto& h : t.history) {
    std::snprintf(buf, sizeof buf, "%.6f,%zu,%.9g\n", h.time, h.contact_count, h.clearance);
    csv += buf;
  }
  write_text(ctx.path("jump.csv"), csv);
  Json j{{"airborne", t.result.airborne},
         {"clearance", t.result.clearance},
         {"duration", t.result.duration}};
  write_text(ctx.path("jump.json"), j.dump(2) + "\n");
  ctx.out() << "eval-jump: airborne=" << (t.result.airborne ? "true" : "false")
            << " flight=" << 1e3 * t.result.duration << " ms clearance=" << 1e3 * t.result.clearance
            << " mm\n";
  return t;
}

inline std::vector<ComparisonRow> run_compare(const Context& ctx, int threads = 0) {
  const Scenario& sc = ctx.scenario;
  if (sc.compare.checkpoint.empty()) {
    throw ConfigError("compare: [compare] checkpoint (or --checkpoint) is required");
  }
  std::vector<ControllerFactory> ctrls = {
      controller_factory("projection", "", sc),
      controller_factory("policy", sc.compare.checkpoint, sc)};
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < sc.compare.scenarios; ++i) seeds.push_back(derive_seed(ctx.seed, i));
  RunSettings run = sc.course.run;
  const auto rows =
      compare_controllers(ctrls, sc.course.course, with_roughness(sc.env, sc.compare.terrain_roughness),
                          run, seeds, threads > 0 ? threads : default_thread_count());
  write_text(ctx.path("compare.csv"), comparison_csv(rows));
  ctx.out() << comparison_table(rows);
  return rows;
}

/// Recomputes the summary of a trajectory or flight log.
inline TrajectoryLog run_replay(const Context& ctx, const std::string& log_path) {
  std::ifstream in(log_path);
  if (!in) throw IoError("cannot open " + log_path);
  TrajectoryLog log = TrajectoryLog::read_jsonl(in);
  const auto& s = log.summary;
  Json j{{"samples", log.samples.size()},  {"duration", s.duration},
         {"path_length", s.path_length},   {"average_speed", s.average_speed},
         {"max_cross_track", s.max_cross_track}};
  write_text(ctx.path("replay_summary.json"), j.dump(2) + "\n");
  ctx.out() << "replay: " << log.samples.size() << " frames, " << summary_line(s) << "\n";
  return log;
}

inline TeleopScenario teleop_scenario(const Scenario& sc, std::uint64_t seed) {
  TeleopScenario t;
  t.spec = with_roughness(sc.env, sc.teleop.terrain_roughness);
  t.gains = sc.controller;
  t.run = sc.course.run;
  t.run.terrain_seed = seed;
  t.pacing = sc.teleop.pacing;
  t.initial_mode = sc.teleop.controller;
  if (!sc.teleop.checkpoint.empty()) {
    if (sc.teleop.controller == "quantized") {
      t.quantized = std::make_shared<const QuantizedPolicy>(load_quantized(sc.teleop.checkpoint));
    } else {
      t.policy = std::make_shared<const PolicyNet>(load_policy(sc.teleop.checkpoint));
    }
  } else if (sc.teleop.controller != "projection") {
    throw ConfigError("teleop: controller '" + sc.teleop.controller + "' needs a checkpoint");
  }
  return t;
}

/// Serves until `stop` turns true or `duration` seconds of wall time pass
/// (0 = no limit).
inline void run_serve(const Context& ctx, const std::atomic<bool>& stop, double duration = 0.0) {
  const Scenario& sc = ctx.scenario;
  ServerOptions opts;
  opts.port = static_cast<unsigned short>(sc.teleop.port);
  opts.broadcast_hz = sc.teleop.broadcast_hz;
  if (!sc.teleop.flight_log.empty()) opts.flight_log = ctx.path(sc.teleop.flight_log);
  TeleopServer server(TeleopSession(teleop_scenario(sc, ctx.seed)), opts);
  server.start();
  ctx.out() << "serve: listening on port " << server.port() << " (WebSocket or NDJSON over TCP)"
            << std::endl;
  const auto t0 = std::chrono::steady_clock::now();
  while (!stop) {
    if (duration > 0.0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >= duration) {
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  server.stop();
  ctx.out() << "serve: stopped" << std::endl;
}

}  // namespace rock::app
