#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <random>
#include <set>

#include "rock/shell.hpp"

using namespace rock;

namespace {

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v(n(rng), n(rng), n(rng));
  return v.normalized();
}

ShellParams with_eps(double eps, int res = 32) {
  ShellParams p;
  p.bulge_amplitude = eps;
  p.mesh_resolution = res;
  return p;
}

// Rotate pi about the axis, then mirror across the equatorial plane.
Vec3 offset_map(const Vec3& n, const Vec3& axis) {
  const Vec3 rotated = Eigen::AngleAxisd(kPi, axis) * n;
  return rotated - 2.0 * rotated.dot(axis) * axis;
}

}  // namespace

TEST(ShellRadial, SphereIsExactlyR) {
  ShellModel s(with_eps(0.0));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(s.radial(random_unit(rng)), 0.1);
}

TEST(ShellRadial, PolesAreExactlyR) {
  ShellModel s(with_eps(0.08));
  EXPECT_EQ(s.radial(Vec3::UnitZ()), 0.1);
  EXPECT_EQ(s.radial(-Vec3::UnitZ()), 0.1);
}

TEST(ShellRadial, HalfTurnOffsetSymmetry) {
  for (double k : {0.5, 1.0, 3.0}) {
    ShellParams p = with_eps(0.08);
    p.taper_exponent = k;
    p.axis = Vec3(0.3, -0.2, 0.9).normalized();
    ShellModel s(p);
    std::mt19937_64 rng(2);
    for (int i = 0; i < 2000; ++i) {
      const Vec3 n = random_unit(rng);
      EXPECT_NEAR(s.radial(n), s.radial(offset_map(n, s.axis())), 1e-12);
    }
  }
}

TEST(ShellRadial, BulgeFacesDentAcrossEquator) {
  ShellModel s(with_eps(0.08));
  const Vec3 north = Vec3(1, 0, 1).normalized(), south = Vec3(1, 0, -1).normalized();
  EXPECT_GT(s.radial(north), 0.1);
  EXPECT_LT(s.radial(south), 0.1);
}

TEST(ShellRadial, TaperPeaksAtOne) {
  for (double k : {0.5, 1.0, 2.0, 4.0}) {
    ShellParams p;
    p.taper_exponent = k;
    ShellModel s(p);
    double best = 0.0;
    for (int i = 0; i <= 100000; ++i) best = std::max(best, std::abs(s.taper(-1.0 + 2e-5 * i)));
    EXPECT_NEAR(best, 1.0, 1e-6) << k;
  }
}

TEST(ShellRadial, RejectsNonUnitDirection) {
  ShellModel s;
  EXPECT_THROW(s.radial(Vec3(1.0, 0.0, 0.1)), InputDomainError);
  EXPECT_THROW(s.radial(Vec3(std::nan(""), 0, 0)), InputDomainError);
}

TEST(ShellRadial, RejectsAmplitudeAtOrAboveOne) {
  EXPECT_THROW(ShellModel(with_eps(1.0)), ConstructionError);
  EXPECT_THROW(ShellModel(with_eps(-1.2)), ConstructionError);
  EXPECT_THROW(ShellModel(with_eps(0.0, 4)), ConstructionError);
}

TEST(ShellRadial, PositiveEverywhere) {
  ShellModel s(with_eps(0.95));
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10000; ++i) EXPECT_GT(s.radial(random_unit(rng)), 0.0);
}

// Directional derivatives across the equator agree from both sides.
TEST(ShellRadial, SmoothAcrossEquator) {
  ShellModel s(with_eps(0.08));
  const double h = 1e-6;
  for (int i = 0; i < 64; ++i) {
    const double phi = kTwoPi * i / 64.0;
    auto at = [&](double lat) {
      return s.radial(Vec3(std::cos(lat) * std::cos(phi), std::cos(lat) * std::sin(phi),
                           std::sin(lat)));
    };
    const double above = (at(h) - at(0.0)) / h;
    const double below = (at(0.0) - at(-h)) / h;
    EXPECT_NEAR(above, below, 1e-6 * 0.1) << phi;
  }
}

TEST(ShellMesh, SphereAreaAndEuler) {
  ShellModel s(with_eps(0.0, 32));
  const auto& m = s.mesh();
  EXPECT_NEAR(m.surface_area(), 4 * kPi * 0.01, 0.01 * 4 * kPi * 0.01);
  const long V = static_cast<long>(m.vertices.size()), F = static_cast<long>(m.triangles.size());
  EXPECT_EQ(V - static_cast<long>(m.edge_count()) + F, 2);
}

TEST(ShellMesh, EulerCharacteristicUnevenShell) {
  for (int res : {8, 17, 64}) {
    ShellModel s(with_eps(0.08, res));
    const auto& m = s.mesh();
    EXPECT_EQ(static_cast<long>(m.vertices.size()) - static_cast<long>(m.edge_count()) +
                  static_cast<long>(m.triangles.size()),
              2);
  }
}

TEST(ShellMesh, VerticesLieOnSurface) {
  ShellModel s(with_eps(0.08, 48));
  for (const Vec3& v : s.mesh().vertices) {
    EXPECT_NEAR(v.norm(), s.radial(v.normalized()), 1e-12);
  }
}

TEST(ShellMesh, RadiusRatioWithinBound) {
  const double eps = 0.08;
  ShellModel s(with_eps(eps, 64));
  double lo = 1e9, hi = 0.0;
  for (const Vec3& v : s.mesh().vertices) {
    lo = std::min(lo, v.norm());
    hi = std::max(hi, v.norm());
  }
  EXPECT_GT(hi / lo, 1.0);
  EXPECT_LE(hi / lo, (1 + eps) / (1 - eps));
}

TEST(ShellMesh, NormalsPointOutward) {
  ShellModel s(with_eps(0.08, 32));
  const auto& m = s.mesh();
  int outward = 0;
  for (std::size_t f = 0; f < m.triangles.size(); ++f) {
    const auto& t = m.triangles[f];
    const Vec3 c = (m.vertices[t[0]] + m.vertices[t[1]] + m.vertices[t[2]]) / 3.0;
    if (m.face_normals[f].dot(c) > 0.0) ++outward;
  }
  EXPECT_EQ(outward, static_cast<int>(m.triangles.size()));
}

TEST(ShellMass, SphereInertiaMatchesThinShell) {
  ShellModel s(with_eps(0.0, 64));
  const double I = 2.0 / 3.0 * 0.5 * 0.01;
  const Mat3& J = s.mass_properties().shell_inertia;
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(J(i, i), I, 0.005 * I);
  EXPECT_NEAR(s.mass_properties().total_mass, 0.8, 1e-15);
}

TEST(ShellMass, LinearInMass) {
  ShellParams p = with_eps(0.08);
  ShellModel a(p);
  p.shell_mass *= 2.0;
  ShellModel b(p);
  const Mat3 d = b.mass_properties().shell_inertia - 2.0 * a.mass_properties().shell_inertia;
  EXPECT_LT(d.norm(), 1e-15);
}

// Reference inertia from Gauss-Legendre surface quadrature of the continuous
// shell (800 x 1600 nodes), R = 0.1, eps = 0.08, taper 1, mass 0.5, bulge
// toward +x about +z. Area 0.126519231 m^2.
TEST(ShellMass, MatchesContinuousQuadratureOracle) {
  for (int res : {64, 128}) {
    ShellModel s(with_eps(0.08, res));
    const Mat3& J = s.mass_properties().shell_inertia;
    EXPECT_NEAR(J(0, 0), 3.3555737678e-3, 0.01 * 3.3555737678e-3) << res;
    EXPECT_NEAR(J(1, 1), 3.3737332629e-3, 0.01 * 3.3737332629e-3) << res;
    EXPECT_NEAR(J(2, 2), 3.3555737677e-3, 0.01 * 3.3555737677e-3) << res;
    EXPECT_NEAR(J(0, 2), -2.1305313458e-4, 0.02 * 2.1305313458e-4) << res;
    EXPECT_NEAR(s.mesh().surface_area(), 0.1265192314, 0.01 * 0.1265192314) << res;
  }
}

TEST(ShellMass, MeshRefinementConverges) {
  ShellModel a(with_eps(0.08, 64)), b(with_eps(0.08, 128));
  const Mat3& Ja = a.mass_properties().shell_inertia;
  const Mat3& Jb = b.mass_properties().shell_inertia;
  EXPECT_LT((Ja - Jb).norm() / Jb.norm(), 0.01);
}

TEST(ShellMass, SymmetricPositiveDefinite) {
  ShellModel s(with_eps(0.3, 48));
  const Mat3& J = s.mass_properties().shell_inertia;
  EXPECT_LT((J - J.transpose()).norm(), 1e-15);
  Eigen::SelfAdjointEigenSolver<Mat3> es(J);
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
}

TEST(ShellMass, RotatingAxisRotatesInertia) {
  ShellParams p = with_eps(0.08, 96);
  ShellModel base(p);
  const Eigen::AngleAxisd rot(0.7, Vec3(1, 2, 0.5).normalized());
  p.axis = rot * Vec3::UnitZ();
  p.bulge_direction = rot * Vec3::UnitX();
  ShellModel turned(p);
  const Mat3 R = rot.toRotationMatrix();
  const Mat3 expect = R * base.mass_properties().shell_inertia * R.transpose();
  EXPECT_LT((turned.mass_properties().shell_inertia - expect).norm() / expect.norm(), 0.01);
}

TEST(ShellMass, CentroidIsCenterOfMass) {
  ShellModel s(with_eps(0.08, 64));
  // Exact in the continuum (the shell is point-symmetric); the mesh leaves
  // a small residual.
  EXPECT_LT(s.mass_properties().shell_com.norm(), 1e-5);
}

TEST(ShellStl, WritesBinaryLayout) {
  ShellModel s(with_eps(0.08, 16));
  const std::string path = ::testing::TempDir() + "shell.stl";
  s.write_stl(path);
  std::ifstream f(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  ASSERT_GE(bytes.size(), 84u);
  std::uint32_t n = 0;
  for (int i = 0; i < 4; ++i) n |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[80 + i])) << (8 * i);
  EXPECT_EQ(n, s.mesh().triangles.size());
  EXPECT_EQ(bytes.size(), 84u + 50u * n);
}
