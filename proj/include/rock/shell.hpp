#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "rock/errors.hpp"
#include "rock/math.hpp"

namespace rock {

/// Parameters of the uneven two-hemisphere shell.
///
/// The surface is the star-shaped radial function
///   rho(n) = R * (1 + eps * sigma(n . axis) * cos(phi))
/// where phi is the azimuth of n about `axis` measured from
/// `bulge_direction`, and sigma is an odd taper that vanishes at the poles.
/// Because sigma is odd, the bulge on one hemisphere faces a dent on the
/// other, and rho(-n) == rho(n).
struct ShellParams {
  double base_radius = 0.10;
  double bulge_amplitude = 0.08;
  double taper_exponent = 1.0;
  Vec3 axis = Vec3::UnitZ();
  Vec3 bulge_direction = Vec3::UnitX();
  int mesh_resolution = 32;
  double shell_mass = 0.5;
  double pendulum_mass = 0.3;
  double pendulum_arm = 0.05;
};

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Vec3> vertex_normals;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::vector<Vec3> face_normals;

  double face_area(std::size_t f) const {
    const auto& t = triangles[f];
    return 0.5 * (vertices[t[1]] - vertices[t[0]])
                     .cross(vertices[t[2]] - vertices[t[0]])
                     .norm();
  }

  double surface_area() const {
    double a = 0.0;
    for (std::size_t f = 0; f < triangles.size(); ++f) a += face_area(f);
    return a;
  }

  std::size_t edge_count() const;
};

inline std::size_t TriangleMesh::edge_count() const {
  std::vector<std::uint64_t> keys;
  keys.reserve(triangles.size() * 3);
  for (const auto& t : triangles) {
    for (int k = 0; k < 3; ++k) {
      std::uint64_t a = t[k], b = t[(k + 1) % 3];
      if (a > b) std::swap(a, b);
      keys.push_back((a << 32) | b);
    }
  }
  std::sort(keys.begin(), keys.end());
  return static_cast<std::size_t>(
      std::unique(keys.begin(), keys.end()) - keys.begin());
}

struct MassProperties {
  double shell_mass = 0.0;
  double pendulum_mass = 0.0;
  double total_mass = 0.0;
  /// Shell center of mass in the body frame (zero up to quadrature error for
  /// the inversion-symmetric shell).
  Vec3 shell_com = Vec3::Zero();
  /// Shell inertia about its own center of mass, body frame.
  Mat3 shell_inertia = Mat3::Zero();
  /// Shell inertia about the body origin (the geometric centroid).
  Mat3 shell_inertia_origin = Mat3::Zero();
  /// Pendulum point mass distance from the centroid.
  double pendulum_arm = 0.0;
};

class ShellModel {
 public:
  explicit ShellModel(ShellParams params = {}) : params_(std::move(params)) {
    validate();
    axis_ = params_.axis.normalized();
    ref_ = orthogonal_unit(axis_, params_.bulge_direction);
    ref2_ = axis_.cross(ref_);
    const double k = params_.taper_exponent;
    const double c2 = 1.0 / (1.0 + k);
    sigma_norm_ = std::sqrt(c2) * std::pow(k / (1.0 + k), 0.5 * k);
    mesh_ = build_mesh();
    directions_.reserve(mesh_.vertices.size());
    radii_.reserve(mesh_.vertices.size());
    for (const Vec3& v : mesh_.vertices) {
      radii_.push_back(v.norm());
      directions_.push_back(v / radii_.back());
    }
    mass_ = compute_mass_properties();
  }

  const ShellParams& params() const noexcept { return params_; }
  const Vec3& axis() const noexcept { return axis_; }
  double base_radius() const noexcept { return params_.base_radius; }
  double max_radius() const noexcept {
    return params_.base_radius * (1.0 + std::abs(params_.bulge_amplitude));
  }

  /// Normalized odd taper, max |sigma| == 1 on [-1, 1].
  double taper(double c) const {
    const double s = 1.0 - c * c;
    if (s <= 0.0) return 0.0;
    return c * std::pow(s, 0.5 * params_.taper_exponent) / sigma_norm_;
  }

  /// Bulge pattern B(n) in [-1, 1] for a unit direction.
  double bulge(const Vec3& n) const {
    const double c = std::clamp(n.dot(axis_), -1.0, 1.0);
    const double s2 = 1.0 - c * c;
    if (s2 <= 0.0) return 0.0;
    const double cos_phi = n.dot(ref_) / std::sqrt(s2);
    return taper(c) * std::clamp(cos_phi, -1.0, 1.0);
  }

  /// Surface distance from the centroid along unit direction `n` (body
  /// frame).
  double radial(const Vec3& n) const {
    if (!n.allFinite() || std::abs(n.norm() - 1.0) > 1e-9) {
      throw InputDomainError("radial: direction must be a unit vector");
    }
    return radial_unchecked(n);
  }

  double radial_unchecked(const Vec3& n) const {
    return params_.base_radius * (1.0 + params_.bulge_amplitude * bulge(n));
  }

  Vec3 surface_point(const Vec3& n) const { return radial_unchecked(n) * n; }

  const TriangleMesh& mesh() const noexcept { return mesh_; }
  const MassProperties& mass_properties() const noexcept { return mass_; }

  /// Unit vertex directions and their radii, for contact scanning.
  const std::vector<Vec3>& vertex_directions() const noexcept {
    return directions_;
  }
  const std::vector<double>& vertex_radii() const noexcept { return radii_; }

  /// Approximate angular spacing of the mesh, in radians.
  double angular_spacing() const noexcept {
    return kPi / params_.mesh_resolution;
  }

  /// Writes the mesh as binary STL (80-byte header, little endian).
  void write_stl(const std::string& path) const;

 private:
  void validate() const {
    const auto& p = params_;
    if (!(p.base_radius > 0.0) || !std::isfinite(p.base_radius)) {
      throw ConstructionError("shell: base_radius must be positive");
    }
    if (!(std::abs(p.bulge_amplitude) < 1.0)) {
      throw ConstructionError("shell: |bulge_amplitude| must be < 1");
    }
    if (!(p.taper_exponent > 0.0) || !std::isfinite(p.taper_exponent)) {
      throw ConstructionError("shell: taper_exponent must be positive");
    }
    if (!p.axis.allFinite() || p.axis.norm() < 1e-9) {
      throw ConstructionError("shell: axis must be a nonzero vector");
    }
    if (p.mesh_resolution < 8) {
      throw ConstructionError("shell: mesh_resolution must be >= 8");
    }
    if (!(p.shell_mass > 0.0) || p.pendulum_mass < 0.0 ||
        p.pendulum_arm < 0.0) {
      throw ConstructionError("shell: masses and arm must be non-negative "
                              "(shell mass positive)");
    }
  }

  TriangleMesh build_mesh() const;
  MassProperties compute_mass_properties() const;

  ShellParams params_;
  Vec3 axis_, ref_, ref2_;
  double sigma_norm_ = 1.0;
  TriangleMesh mesh_;
  std::vector<Vec3> directions_;
  std::vector<double> radii_;
  MassProperties mass_;
};

// Latitude/longitude triangulation: two poles, (res - 1) rings of 2*res
// vertices each.
inline TriangleMesh ShellModel::build_mesh() const {
  const int res = params_.mesh_resolution;
  const int nlon = 2 * res;
  TriangleMesh m;
  auto dir = [&](double polar, double az) {
    return Vec3(std::cos(polar) * axis_ +
                std::sin(polar) * (std::cos(az) * ref_ + std::sin(az) * ref2_))
        .normalized();
  };
  auto push = [&](const Vec3& n) {
    m.vertices.push_back(radial_unchecked(n) * n);
  };
  push(axis_);
  for (int i = 1; i < res; ++i) {
    const double polar = kPi * i / res;
    for (int j = 0; j < nlon; ++j) push(dir(polar, kTwoPi * j / nlon));
  }
  push(-axis_);
  const auto north = 0u;
  const auto south = static_cast<std::uint32_t>(m.vertices.size() - 1);
  auto ring = [&](int i, int j) {
    return static_cast<std::uint32_t>(1 + (i - 1) * nlon + ((j + nlon) % nlon));
  };
  for (int j = 0; j < nlon; ++j) {
    m.triangles.push_back({north, ring(1, j), ring(1, j + 1)});
  }
  for (int i = 1; i < res - 1; ++i) {
    for (int j = 0; j < nlon; ++j) {
      m.triangles.push_back({ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)});
      m.triangles.push_back({ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)});
    }
  }
  for (int j = 0; j < nlon; ++j) {
    m.triangles.push_back({south, ring(res - 1, j + 1), ring(res - 1, j)});
  }

  m.vertex_normals.assign(m.vertices.size(), Vec3::Zero());
  m.face_normals.reserve(m.triangles.size());
  for (const auto& t : m.triangles) {
    const Vec3 a = m.vertices[t[0]], b = m.vertices[t[1]], c = m.vertices[t[2]];
    const Vec3 cr = (b - a).cross(c - a);
    const double len = cr.norm();
    if (!(len > 1e-14 * params_.base_radius * params_.base_radius)) {
      throw ConstructionError("shell: degenerate mesh triangle");
    }
    Vec3 n = cr / len;
    // Outward orientation for a star-shaped surface.
    if (n.dot(a + b + c) < 0.0) n = -n;
    m.face_normals.push_back(n);
    for (auto idx : t) m.vertex_normals[idx] += cr;
  }
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    Vec3& n = m.vertex_normals[i];
    if (n.dot(m.vertices[i]) < 0.0) n = -n;
    n.normalize();
  }
  return m;
}

// Thin shell of uniform areal density. Each flat triangle contributes its
// exact first and second area moments.
inline MassProperties ShellModel::compute_mass_properties() const {
  const auto& m = mesh_;
  double area = 0.0;
  Vec3 first = Vec3::Zero();
  Mat3 second = Mat3::Zero();
  for (const auto& t : m.triangles) {
    const Vec3& a = m.vertices[t[0]];
    const Vec3& b = m.vertices[t[1]];
    const Vec3& c = m.vertices[t[2]];
    const double A = 0.5 * (b - a).cross(c - a).norm();
    const Vec3 s = a + b + c;
    area += A;
    first += A * s / 3.0;
    second += A / 12.0 *
              (a * a.transpose() + b * b.transpose() + c * c.transpose() +
               s * s.transpose());
  }
  const double density = params_.shell_mass / area;
  MassProperties mp;
  mp.shell_mass = params_.shell_mass;
  mp.pendulum_mass = params_.pendulum_mass;
  mp.total_mass = params_.shell_mass + params_.pendulum_mass;
  mp.pendulum_arm = params_.pendulum_arm;
  mp.shell_com = first / area;
  const Mat3 S = density * second;
  mp.shell_inertia_origin = S.trace() * Mat3::Identity() - S;
  mp.shell_inertia_origin = 0.5 * (mp.shell_inertia_origin +
                                   mp.shell_inertia_origin.transpose());
  const Vec3& c = mp.shell_com;
  mp.shell_inertia = mp.shell_inertia_origin -
                     mp.shell_mass * (c.squaredNorm() * Mat3::Identity() -
                                      c * c.transpose());
  return mp;
}

namespace detail {
inline void put_u32_le(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
inline void put_f32_le(std::ostream& os, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32_le(os, u);
}
}  // namespace detail

inline void ShellModel::write_stl(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path);
  std::array<char, 80> header{};
  const std::string title = "rock uneven shell";
  std::copy(title.begin(), title.end(), header.begin());
  os.write(header.data(), header.size());
  detail::put_u32_le(os, static_cast<std::uint32_t>(mesh_.triangles.size()));
  for (std::size_t f = 0; f < mesh_.triangles.size(); ++f) {
    const Vec3& n = mesh_.face_normals[f];
    for (int k = 0; k < 3; ++k) detail::put_f32_le(os, static_cast<float>(n[k]));
    for (auto idx : mesh_.triangles[f]) {
      for (int k = 0; k < 3; ++k) {
        detail::put_f32_le(os, static_cast<float>(mesh_.vertices[idx][k]));
      }
    }
    const char attr[2] = {0, 0};
    os.write(attr, 2);
  }
  if (!os) throw IoError("write failed for " + path);
}

}  // namespace rock
