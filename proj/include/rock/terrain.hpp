#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "rock/errors.hpp"
#include "rock/math.hpp"

namespace rock {

/// Ground surface: either the plane z = 0 or a bilinear heightfield on a
/// regular XY grid. Queries outside the grid clamp to the border cells, so
/// heights stay continuous everywhere.
class Terrain {
 public:
  Terrain() = default;

  static Terrain flat() { return Terrain(); }

  /// `heights` is row-major with `nx` samples along x and `ny` along y;
  /// sample (i, j) sits at origin + (i * cell, j * cell).
  static Terrain heightfield(std::vector<double> heights, int nx, int ny,
                             double cell, Vec2 origin) {
    if (nx < 2 || ny < 2 || !(cell > 0.0) ||
        heights.size() != static_cast<std::size_t>(nx) * ny) {
      throw ConstructionError("terrain: bad heightfield dimensions");
    }
    for (double h : heights) {
      if (!std::isfinite(h)) throw ConstructionError("terrain: non-finite height");
    }
    Terrain t;
    t.flat_ = false;
    t.nx_ = nx;
    t.ny_ = ny;
    t.cell_ = cell;
    t.origin_ = origin;
    t.heights_ = std::move(heights);
    t.max_height_ = *std::max_element(t.heights_.begin(), t.heights_.end());
    return t;
  }

  /// Filtered Gaussian noise: white noise blurred with a Gaussian kernel of
  /// standard deviation `correlation_length`, then shifted to zero mean and
  /// rescaled to standard deviation `roughness`. Roughness 0 gives flat
  /// ground.
  static Terrain generate(double roughness, double correlation_length,
                          double extent, double cell, std::uint64_t seed) {
    if (roughness < 0.0 || !(correlation_length > 0.0) || !(extent > 0.0) ||
        !(cell > 0.0)) {
      throw ConstructionError("terrain: invalid generator parameters");
    }
    if (roughness == 0.0) return flat();
    const int n = std::max(2, static_cast<int>(std::ceil(extent / cell)) + 1);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> h(static_cast<std::size_t>(n) * n);
    for (double& v : h) v = normal(rng);

    const double sigma = correlation_length / cell;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    for (int k = -radius; k <= radius; ++k) {
      kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    }
    std::vector<double> tmp(h.size());
    auto at = [n](int i, int j) {
      i = std::clamp(i, 0, n - 1);
      j = std::clamp(j, 0, n - 1);
      return static_cast<std::size_t>(j) * n + i;
    };
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * h[at(i + k, j)];
        tmp[at(i, j)] = acc;
      }
    }
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * tmp[at(i, j + k)];
        h[at(i, j)] = acc;
      }
    }
    double mean = 0.0;
    for (double v : h) mean += v;
    mean /= static_cast<double>(h.size());
    double var = 0.0;
    for (double v : h) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(h.size()));
    for (double& v : h) v = (v - mean) * (sd > 0.0 ? roughness / sd : 0.0);
    const double half = 0.5 * (n - 1) * cell;
    return heightfield(std::move(h), n, n, cell, Vec2(-half, -half));
  }

  bool is_flat() const noexcept { return flat_; }
  int nx() const noexcept { return nx_; }
  int ny() const noexcept { return ny_; }
  double cell() const noexcept { return cell_; }
  const Vec2& origin() const noexcept { return origin_; }
  const std::vector<double>& heights() const noexcept { return heights_; }

  /// Upper bound on the height anywhere.
  double max_height() const noexcept { return flat_ ? 0.0 : max_height_; }

  /// True when (x, y) lies over the grid. Flat ground is unbounded.
  bool contains(double x, double y) const noexcept {
    if (flat_) return true;
    return x >= origin_.x() && y >= origin_.y() &&
           x <= origin_.x() + (nx_ - 1) * cell_ &&
           y <= origin_.y() + (ny_ - 1) * cell_;
  }

  double height(double x, double y) const {
    if (flat_) return 0.0;
    Cell c = locate(x, y);
    const double h00 = sample(c.i, c.j), h10 = sample(c.i + 1, c.j);
    const double h01 = sample(c.i, c.j + 1), h11 = sample(c.i + 1, c.j + 1);
    return (1 - c.fx) * (1 - c.fy) * h00 + c.fx * (1 - c.fy) * h10 +
           (1 - c.fx) * c.fy * h01 + c.fx * c.fy * h11;
  }

  /// Upward unit normal of the bilinear patch at (x, y).
  Vec3 normal(double x, double y) const {
    if (flat_) return Vec3::UnitZ();
    Cell c = locate(x, y);
    const double h00 = sample(c.i, c.j), h10 = sample(c.i + 1, c.j);
    const double h01 = sample(c.i, c.j + 1), h11 = sample(c.i + 1, c.j + 1);
    double dx = ((1 - c.fy) * (h10 - h00) + c.fy * (h11 - h01)) / cell_;
    double dy = ((1 - c.fx) * (h01 - h00) + c.fx * (h11 - h10)) / cell_;
    if (c.clamped_x) dx = 0.0;
    if (c.clamped_y) dy = 0.0;
    return Vec3(-dx, -dy, 1.0).normalized();
  }

 private:
  struct Cell {
    int i, j;
    double fx, fy;
    bool clamped_x, clamped_y;
  };

  Cell locate(double x, double y) const {
    const double gx = (x - origin_.x()) / cell_;
    const double gy = (y - origin_.y()) / cell_;
    Cell c{};
    const double cx = std::clamp(gx, 0.0, static_cast<double>(nx_ - 1));
    const double cy = std::clamp(gy, 0.0, static_cast<double>(ny_ - 1));
    c.clamped_x = cx != gx;
    c.clamped_y = cy != gy;
    c.i = std::min(static_cast<int>(cx), nx_ - 2);
    c.j = std::min(static_cast<int>(cy), ny_ - 2);
    c.fx = cx - c.i;
    c.fy = cy - c.j;
    return c;
  }

  double sample(int i, int j) const {
    return heights_[static_cast<std::size_t>(j) * nx_ + i];
  }

  bool flat_ = true;
  int nx_ = 0, ny_ = 0;
  double cell_ = 1.0;
  Vec2 origin_ = Vec2::Zero();
  std::vector<double> heights_;
  double max_height_ = 0.0;
};

}  // namespace rock
