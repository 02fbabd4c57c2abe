#include <gtest/gtest.h>

#include <sstream>

#include "rock/config.hpp"
#include "rock/harness.hpp"
#include "rock/trajectory.hpp"

using namespace rock;

namespace {

EnvSpec flat_env() {
  EnvSpec spec;
  spec.episode.terrain_roughness = 0.0;
  return spec;
}

ControllerFactory projection_factory() {
  return {"projection", [] { return std::make_unique<ProjectionController>(); }};
}

TrajectoryLog sample_log() {
  TrajectoryLog log;
  log.controller = "projection";
  log.waypoints = {{0, 0}, {1, 0}};
  log.capture_radius = 0.25;
  for (int i = 0; i < 5; ++i) {
    TrajectorySample s;
    s.t = 0.02 * i;
    s.pos = Vec3(0.1 * i, 0.01 * i, 0.1);
    s.command = Vec2(1, 0);
    s.waypoint = 1;
    s.controller = "projection";
    log.samples.push_back(s);
  }
  log.finalize(false);
  return log;
}

}  // namespace

TEST(CrossTrack, SegmentDistance) {
  const std::vector<Vec2> wps = {{0, 0}, {2, 0}, {2, 3}};
  EXPECT_NEAR(cross_track(Vec2(1, 0.3), wps, 1), 0.3, 1e-15);
  EXPECT_NEAR(cross_track(Vec2(2.4, 1.0), wps, 2), 0.4, 1e-15);
  EXPECT_NEAR(cross_track(Vec2(-1, 0), wps, 1), 1.0, 1e-15);  // beyond the segment end
  EXPECT_NEAR(cross_track(Vec2(0.3, 0.4), wps, 0), 0.5, 1e-15);
}

TEST(Trajectory, SummaryFromSamples) {
  const TrajectoryLog log = sample_log();
  EXPECT_NEAR(log.summary.duration, 0.08, 1e-15);
  EXPECT_NEAR(log.summary.path_length, 4 * std::hypot(0.1, 0.01), 1e-12);
  EXPECT_NEAR(log.summary.max_cross_track, 0.04, 1e-12);
  EXPECT_FALSE(log.summary.completed);
}

TEST(Trajectory, JsonlRoundTrip) {
  const TrajectoryLog log = sample_log();
  std::istringstream in(log.to_jsonl());
  const TrajectoryLog back = TrajectoryLog::read_jsonl(in);
  ASSERT_EQ(back.samples.size(), log.samples.size());
  EXPECT_EQ(back.to_jsonl(), log.to_jsonl());
}

TEST(Trajectory, RejectsNonIncreasingTime) {
  TrajectoryLog log = sample_log();
  log.samples[3].t = log.samples[2].t;
  std::istringstream in(log.to_jsonl());
  EXPECT_THROW(TrajectoryLog::read_jsonl(in), InputDomainError);
}

TEST(Trajectory, RejectsTamperedSummary) {
  TrajectoryLog log = sample_log();
  log.summary.path_length += 1.0;
  std::istringstream in(log.to_jsonl());
  EXPECT_THROW(TrajectoryLog::read_jsonl(in), InputDomainError);
}

TEST(Trajectory, RejectsMalformedLines) {
  std::istringstream a("{\"type\":\"sample\",\"t\":0}\n");
  EXPECT_THROW(TrajectoryLog::read_jsonl(a), InputDomainError);
  std::istringstream b("not json\n");
  EXPECT_THROW(TrajectoryLog::read_jsonl(b), InputDomainError);
}

TEST(Course, SingleWaypointCompletesImmediately) {
  ProjectionController c;
  const TrajectoryLog log = follow_course(c, WaypointCourse{{{0, 0}}, 0.25}, flat_env());
  EXPECT_TRUE(log.summary.completed);
  ASSERT_EQ(log.samples.size(), 1u);
  EXPECT_EQ(log.summary.duration, 0.0);
}

TEST(Course, CommandsPointAtActiveWaypoint) {
  ProjectionController c;
  RunSettings run;
  run.timeout = 20.0;
  const WaypointCourse course = WaypointCourse::rectangle();
  const TrajectoryLog log = follow_course(c, course, flat_env(), run);
  int checked = 0;
  for (const auto& s : log.samples) {
    if (!s.command) continue;
    EXPECT_NEAR(s.command->norm(), 1.0, 1e-12);
    const Vec2 to = course.waypoints[s.waypoint] - s.pos.head<2>();
    EXPECT_GT(s.command->dot(to), 0.0);
    ++checked;
  }
  EXPECT_GT(checked, 900);
}

TEST(Course, ProjectionCompletesRectangle) {
  ProjectionController c;
  const TrajectoryLog log = follow_course(c, WaypointCourse::rectangle(), flat_env());
  EXPECT_TRUE(log.summary.completed);
  EXPECT_LT(log.summary.completion_time, 600.0);
  EXPECT_LT(log.summary.max_cross_track, 0.5);
  EXPECT_GT(log.summary.average_speed, 0.0);
}

TEST(Course, RejectsEmptyCourse) {
  ProjectionController c;
  EXPECT_THROW(follow_course(c, WaypointCourse{{}, 0.25}, flat_env()), ConfigError);
}

TEST(Compare, SameControllerSameSeedGivesIdenticalRows) {
  RunSettings run;
  run.timeout = 5.0;
  EnvSpec spec;
  spec.episode.terrain_roughness = 0.005;
  const auto rows = compare_controllers({projection_factory(), projection_factory()},
                                        WaypointCourse::rectangle(), spec, run, {3, 4}, 2);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].average_speed, rows[1].average_speed);
  EXPECT_EQ(rows[0].max_cross_track, rows[1].max_cross_track);
  EXPECT_EQ(rows[0].completion_rate, rows[1].completion_rate);
  EXPECT_EQ(rows[0].runs, 2);
}

TEST(Compare, NoScenariosGivesEmptyTable) {
  const auto rows = compare_controllers({projection_factory()}, WaypointCourse::rectangle(),
                                        flat_env(), RunSettings{}, {});
  EXPECT_TRUE(rows.empty());
  EXPECT_EQ(comparison_csv(rows), "controller,runs,completion_rate,average_speed,max_cross_track\n");
}

TEST(Jump, MaxEffortLeavesTheGround) {
  const JumpSettings js;
  const JumpTrial t = jump_trial(js.profile(), js.apply(EnvSpec{}), js.settle_time);
  EXPECT_TRUE(t.result.airborne);
  EXPECT_GE(t.result.duration, 0.05);
  EXPECT_GT(t.result.clearance, 0.0);
}

TEST(Jump, LessTorqueNeverJumpsHigher) {
  JumpSettings js;
  double prev = std::numeric_limits<double>::infinity();
  for (double scale : {1.0, 0.8, 0.64}) {
    JumpSettings s = js;
    s.max_torque = js.max_torque * scale;
    const JumpTrial t = jump_trial(s.profile(), s.apply(EnvSpec{}), s.settle_time);
    EXPECT_LE(t.result.clearance, prev + 1e-12) << scale;
    prev = t.result.clearance;
  }
}

TEST(Jump, ZeroProfileStaysGrounded) {
  const JumpSettings js;
  const JumpTrial t = jump_trial(SwingProfile::zero(1.0), js.apply(EnvSpec{}), js.settle_time);
  EXPECT_FALSE(t.result.airborne);
  EXPECT_EQ(t.result.clearance, 0.0);
}

TEST(Jump, DefaultRobotCannotJump) {
  // The default motor is too weak to lift the robot.
  const JumpTrial t = jump_trial(SwingProfile::max_effort(21.0, 0.3, 1.7), EnvSpec{});
  EXPECT_FALSE(t.result.airborne);
}

TEST(SwingProfile, Schedule) {
  const SwingProfile p = SwingProfile::max_effort(30.0, 0.3, 1.7);
  EXPECT_DOUBLE_EQ(p.duration(), 2.0);
  EXPECT_EQ(p.setpoint_at(0.0), 30.0);
  EXPECT_EQ(p.setpoint_at(0.31), 0.0);
  EXPECT_EQ(p.setpoint_at(5.0), 0.0);
}
