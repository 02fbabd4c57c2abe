#include <atomic>
#include <csignal>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "rock/app.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

template <typename T>
void override_if(const std::optional<T>& v, T& target) {
  if (v) target = *v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"rock: pendulum-driven uneven-shell robot simulation and control"};
  cli.require_subcommand(1);
  std::string config_path;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  cli.add_option("--config", config_path, "scenario INI file (defaults when omitted)")
      ->check(CLI::ExistingFile);
  cli.add_option("--seed", seed, "seed for every random choice")->capture_default_str();
  cli.add_option("--out-dir", out_dir, "directory for output files")->capture_default_str();

  std::optional<double> duration, heading, pacing;
  std::optional<std::string> controller, checkpoint;
  std::optional<int> iterations, scenarios, port;
  std::string output, log_path;
  std::size_t calibration = 10000, held_out = 10000;
  int threads = 0;

  auto* sim = cli.add_subcommand("sim", "roll toward a fixed heading and log the trajectory");
  sim->add_option("--duration", duration, "simulated seconds");
  sim->add_option("--heading", heading, "command heading, rad");
  sim->add_option("--controller", controller, "projection | policy | quantized");
  sim->add_option("--checkpoint", checkpoint, "policy checkpoint");

  auto* tr = cli.add_subcommand("train", "train a policy with PPO");
  tr->add_option("--iterations", iterations, "override [train] iterations");

  auto* qu = cli.add_subcommand("quantize", "convert a float checkpoint to int8");
  qu->add_option("--checkpoint", checkpoint, "ROCKPOL1 input")->required();
  qu->add_option("--output", output, "ROCKQNT1 output (default <out-dir>/policy_q.rock)");
  qu->add_option("--calibration", calibration, "calibration observations")->capture_default_str();
  qu->add_option("--held-out", held_out, "held-out observations")->capture_default_str();

  auto* ec = cli.add_subcommand("eval-course", "follow the waypoint course");
  ec->add_option("--controller", controller, "projection | policy | quantized");
  ec->add_option("--checkpoint", checkpoint, "policy checkpoint");

  cli.add_subcommand("eval-jump", "run the swing-up jump trial");

  auto* cmp = cli.add_subcommand("compare", "projection vs policy on rough-terrain courses");
  cmp->add_option("--checkpoint", checkpoint, "policy checkpoint");
  cmp->add_option("--scenarios", scenarios, "number of terrain seeds");
  cmp->add_option("--threads", threads, "worker threads (0 = all cores)");

  auto* sv = cli.add_subcommand("serve", "start the teleoperation service");
  sv->add_option("--port", port, "TCP port (0 picks a free one)");
  sv->add_option("--pacing", pacing, "simulated seconds per wall second");
  sv->add_option("--duration", duration, "stop after this many wall seconds");
  sv->add_option("--controller", controller, "initial controller");
  sv->add_option("--checkpoint", checkpoint, "policy checkpoint");

  auto* rp = cli.add_subcommand("replay", "recompute metrics from a trajectory or flight log");
  rp->add_option("--log", log_path, "JSON-lines log")->required()->check(CLI::ExistingFile);

  cli.add_subcommand("config", "print the effective scenario as canonical INI");

  CLI11_PARSE(cli, argc, argv);

  try {
    rock::app::Context ctx;
    ctx.scenario = config_path.empty() ? rock::Scenario{} : rock::load_scenario(config_path);
    ctx.seed = seed;
    ctx.out_dir = out_dir;
    rock::Scenario& sc = ctx.scenario;

    if (sim->parsed()) {
      override_if(duration, sc.sim.duration);
      override_if(heading, sc.sim.heading);
      override_if(controller, sc.sim.controller);
      override_if(checkpoint, sc.sim.checkpoint);
      rock::validate(sc);
      rock::app::run_sim(ctx);
    } else if (tr->parsed()) {
      override_if(iterations, sc.train.iterations);
      rock::validate(sc);
      rock::app::run_train(ctx);
    } else if (qu->parsed()) {
      rock::app::run_quantize(ctx, *checkpoint, output, calibration, held_out);
    } else if (ec->parsed()) {
      override_if(controller, sc.course.controller);
      override_if(checkpoint, sc.course.checkpoint);
      rock::validate(sc);
      rock::app::run_eval_course(ctx);
    } else if (cli.got_subcommand("eval-jump")) {
      rock::app::run_eval_jump(ctx);
    } else if (cmp->parsed()) {
      override_if(checkpoint, sc.compare.checkpoint);
      override_if(scenarios, sc.compare.scenarios);
      rock::app::run_compare(ctx, threads);
    } else if (sv->parsed()) {
      override_if(port, sc.teleop.port);
      override_if(pacing, sc.teleop.pacing);
      override_if(controller, sc.teleop.controller);
      override_if(checkpoint, sc.teleop.checkpoint);
      rock::validate(sc);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      rock::app::run_serve(ctx, g_stop, duration.value_or(0.0));
    } else if (rp->parsed()) {
      rock::app::run_replay(ctx, log_path);
    } else if (cli.got_subcommand("config")) {
      std::cout << rock::to_ini(sc);
    }
  } catch (const rock::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
