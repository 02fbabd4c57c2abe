#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace rock {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Wraps an angle to (-pi, pi]. Both -pi and pi map to +pi.
inline double wrap_angle(double a) {
  double r = std::remainder(a, kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  return r;
}

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

inline bool all_finite(const Vec3& v) { return v.allFinite(); }

/// Builds a unit vector orthogonal to `axis`, preferring the projection of
/// `hint` when it is not parallel to the axis.
inline Vec3 orthogonal_unit(const Vec3& axis, const Vec3& hint) {
  Vec3 r = hint - hint.dot(axis) * axis;
  if (r.norm() < 1e-6) {
    const Vec3 alt = std::abs(axis.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    r = alt - alt.dot(axis) * axis;
  }
  return r.normalized();
}

/// SplitMix64 step, used to derive independent seeds for per-instance
/// random streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(splitmix64(base) ^ (stream * 0xd1b54a32d192ed03ULL));
}

}  // namespace rock
