#include <gtest/gtest.h>

#include <random>

#include "rock/env.hpp"
#include "rock/observation.hpp"

using namespace rock;

namespace {

RobotState sample_state() {
  RobotState s;
  s.orientation = Quat(Eigen::AngleAxisd(0.9, Vec3(0.2, -0.5, 0.8).normalized()));
  s.angular_velocity = Vec3(6.0, -3.0, 12.0);  // u, v, w components
  s.pendulum_velocity = 15.0;
  s.pendulum_angle_unwrapped = 0.7;
  return s;
}

}  // namespace

TEST(Observation, GoldenLayout) {
  const RobotState s = sample_state();
  const Command c = Command::from_angle(2.0);
  ObservationHistory h;
  const Observation o = build_observation(s, c, -0.25, h);
  const double target = target_angle(MotorFrame::from_orientation(s.orientation), c);
  Quat q = s.orientation;
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  const std::array<double, 15> expected = {
      -0.25, std::cos(2.0), std::sin(2.0), q.w(), q.x(), q.y(), q.z(),
      12.0 / 24.0, 6.0 / 12.0, -3.0 / 12.0, 15.0 / 37.5,
      std::sin(0.7), std::cos(0.7), std::sin(target), std::cos(target)};
  for (std::size_t age = 0; age < 3; ++age) {
    for (std::size_t i = 0; i < 15; ++i) {
      EXPECT_FLOAT_EQ(o[age * 15 + i], static_cast<float>(expected[i])) << age << " " << i;
    }
  }
}

TEST(Observation, ChannelIndices) {
  EXPECT_EQ(obs::index(0, obs::kLastAction), 0u);
  EXPECT_EQ(obs::index(0, obs::kAngVelW), 7u);
  EXPECT_EQ(obs::index(1, obs::kMotorVelocity), 25u);
  EXPECT_EQ(obs::index(2, obs::kTargetCos), 44u);
  EXPECT_EQ(obs::kSize, 45u);
}

TEST(Observation, StackShiftsOlderFrames) {
  ObservationHistory h;
  const Command c = Command::from_angle(0.5);
  RobotState s = sample_state();
  const Observation a = build_observation(s, c, 0.1, h);
  const Observation b = build_observation(s, c, 0.2, h);
  const Observation d = build_observation(s, c, 0.3, h);
  EXPECT_FLOAT_EQ(b[0], 0.2f);
  EXPECT_FLOAT_EQ(b[15], 0.1f);
  EXPECT_FLOAT_EQ(b[30], 0.1f);
  EXPECT_FLOAT_EQ(d[0], 0.3f);
  EXPECT_FLOAT_EQ(d[15], 0.2f);
  EXPECT_FLOAT_EQ(d[30], 0.1f);
  EXPECT_FLOAT_EQ(a[30], 0.1f);
}

TEST(Observation, ResetRestartsPadding) {
  ObservationHistory h;
  const Command c;
  RobotState s = sample_state();
  build_observation(s, c, 0.9, h);
  build_observation(s, c, 0.8, h);
  h.reset();
  const Observation o = build_observation(s, c, -0.4, h);
  EXPECT_FLOAT_EQ(o[15], -0.4f);
  EXPECT_FLOAT_EQ(o[30], -0.4f);
}

TEST(Observation, BoundedOverRandomStates) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ObservationHistory h;
  for (int i = 0; i < 100000; ++i) {
    RobotState s;
    s.orientation = Quat(n(rng), n(rng), n(rng), n(rng)).normalized();
    s.angular_velocity = Vec3(n(rng), n(rng), n(rng)) * 40.0;
    s.pendulum_velocity = 80.0 * u(rng);
    s.pendulum_angle_unwrapped = 50.0 * u(rng);
    const Observation o = build_observation(s, Command::from_angle(4.0 * u(rng)), u(rng), h);
    for (float v : o) ASSERT_TRUE(v >= -1.0f && v <= 1.0f) << i;
  }
}

TEST(Observation, NonFiniteEntriesBecomeZero) {
  ObservationHistory h;
  RobotState s = sample_state();
  s.pendulum_velocity = std::nan("");
  const Observation o = build_observation(s, Command{}, 0.0, h);
  EXPECT_EQ(o[obs::kMotorVelocity], 0.0f);
}

TEST(Observation, QuaternionSignCanonical) {
  ObservationHistory h1, h2;
  RobotState s = sample_state();
  const Observation a = build_observation(s, Command{}, 0.0, h1);
  s.orientation.coeffs() = -s.orientation.coeffs();
  const Observation b = build_observation(s, Command{}, 0.0, h2);
  EXPECT_EQ(a, b);
  EXPECT_GE(a[obs::kQuatW], 0.0f);
}

TEST(Observation, DegenerateCommandKeepsLastTarget) {
  ObservationHistory h;
  RobotState s;
  s.orientation = lying_orientation(0.0, 0.0) * Quat(Eigen::AngleAxisd(0.2, Vec3::UnitX()));
  const Command c = Command::from_angle(0.4);
  const Observation first = build_observation(s, c, 0.0, h);
  s.orientation = lying_orientation(0.0, 0.0);
  const Observation second = build_observation(s, Command{Vec2(1, 0)}, 0.0, h);
  EXPECT_EQ(second[obs::kTargetSin], first[obs::kTargetSin]);
  EXPECT_EQ(second[obs::kTargetCos], first[obs::kTargetCos]);
}

TEST(Observation, HeadingRelativeRotatesCommand) {
  ObservationOptions opts;
  opts.heading_relative = true;
  RobotState s;
  s.orientation = lying_orientation(0.0, 0.0);  // w along -y, heading -pi/2
  const Vec2 d = command_in_observation_frame(s, Command{Vec2(0, -1)}, true);
  EXPECT_NEAR(d.x(), 1.0, 1e-12);
  EXPECT_NEAR(d.y(), 0.0, 1e-12);
  ObservationHistory h;
  const Observation o = build_observation(s, Command{Vec2(0, -1)}, 0.0, h, opts);
  EXPECT_NEAR(o[obs::kCommandX], 1.0f, 1e-6);
}
