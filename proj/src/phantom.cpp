#include "vseg/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "vseg/error.hpp"

namespace vseg {

void PhantomConfig::validate() const {
  if (dims.nx < 16 || dims.ny < 16 || dims.nz < 16)
    throw ArgumentError("phantom dims must be at least 16 per axis");
  if (branches < 1) throw ArgumentError("phantom needs at least one tree level");
  if (!(root_radius >= 1.0)) throw ArgumentError("phantom root_radius must be >= 1");
  if (!(radius_decay > 0.0 && radius_decay < 1.0))
    throw ArgumentError("phantom radius_decay must lie in (0, 1)");
  if (vessel_hu_sigma < 0.0 || background_hu_sigma < 0.0)
    throw ArgumentError("phantom HU sigmas must be non-negative");
  if (speck_count < 0) throw ArgumentError("phantom speck_count must be non-negative");
}

namespace {

using P3 = std::array<double, 3>;

P3 add(const P3& a, const P3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
P3 scale(const P3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
double dot(const P3& a, const P3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
P3 cross(const P3& a, const P3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
P3 normalized(const P3& a) { return scale(a, 1.0 / std::sqrt(dot(a, a))); }

constexpr double kDegree = std::numbers::pi / 180.0;

class TreeBuilder {
 public:
  TreeBuilder(const PhantomConfig& cfg, std::mt19937_64& rng)
      : cfg_(cfg), rng_(rng), mask_(cfg.dims.voxels(), 0) {}

  std::vector<std::uint8_t> build() {
    const Dims& d = cfg_.dims;
    const std::array<int, 3> n{d.nx, d.ny, d.nz};
    std::uniform_int_distribution<int> face_dist(0, 5);
    const int face = face_dist(rng_);
    const int axis = face / 2;
    const bool high = face % 2 == 1;

    std::uniform_real_distribution<double> across(0.35, 0.65);
    P3 start{};
    for (int a = 0; a < 3; ++a) start[a] = across(rng_) * (n[a] - 1);
    start[axis] = high ? n[axis] - 1 : 0.0;
    P3 inward{0.0, 0.0, 0.0};
    inward[axis] = high ? -1.0 : 1.0;
    const double tilt = std::uniform_real_distribution<double>(0.0, 15.0)(rng_) * kDegree;
    const P3 dir = rotate(inward, random_perpendicular(inward), tilt);

    const double length = 0.4 * std::min({d.nx, d.ny, d.nz});
    grow(start, dir, cfg_.root_radius, length, 0);
    return std::move(mask_);
  }

 private:
  P3 random_perpendicular(const P3& v) {
    std::normal_distribution<double> g(0.0, 1.0);
    for (;;) {
      P3 r{g(rng_), g(rng_), g(rng_)};
      const P3 c = cross(v, r);
      if (dot(c, c) > 1e-6) return normalized(c);
    }
  }

  // Rotation about an axis perpendicular to v.
  static P3 rotate(const P3& v, const P3& axis, double angle) {
    return normalized(add(scale(v, std::cos(angle)), scale(cross(axis, v), std::sin(angle))));
  }

  // Longest t <= length keeping start + t * dir inside the margin box.
  double clip(const P3& start, const P3& dir, double length, double margin) const {
    const std::array<int, 3> n{cfg_.dims.nx, cfg_.dims.ny, cfg_.dims.nz};
    double t = length;
    for (int a = 0; a < 3; ++a) {
      const double lo = margin, hi = n[a] - 1 - margin;
      if (dir[a] > 1e-12) t = std::min(t, (hi - start[a]) / dir[a]);
      if (dir[a] < -1e-12) t = std::min(t, (lo - start[a]) / dir[a]);
    }
    return std::max(0.0, t);
  }

  void grow(const P3& start, const P3& dir, double radius, double length, int level) {
    const double t = clip(start, dir, length, radius + 1.0);
    if (t < 2.0) return;
    const P3 end = add(start, scale(dir, t));
    rasterize(start, end, radius);
    if (level + 1 >= cfg_.branches || t < 3.0) return;

    std::uniform_real_distribution<double> spread(20.0, 40.0);
    const P3 axis = random_perpendicular(dir);
    const double a1 = spread(rng_) * kDegree;
    const double a2 = spread(rng_) * kDegree;
    const double child_length = 0.8 * length;
    const double child_radius = radius * cfg_.radius_decay;
    grow(end, rotate(dir, axis, a1), child_radius, child_length, level + 1);
    grow(end, rotate(dir, axis, -a2), child_radius, child_length, level + 1);
  }

  // Voxel centers within `radius` of the segment.
  void rasterize(const P3& a, const P3& b, double radius) {
    const Dims& d = cfg_.dims;
    const std::array<int, 3> n{d.nx, d.ny, d.nz};
    std::array<int, 3> lo{}, hi{};
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::max(0, static_cast<int>(std::floor(std::min(a[k], b[k]) - radius)));
      hi[k] = std::min(n[k] - 1, static_cast<int>(std::ceil(std::max(a[k], b[k]) + radius)));
    }
    const P3 ab{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
    const double len2 = dot(ab, ab);
    for (int z = lo[2]; z <= hi[2]; ++z)
      for (int y = lo[1]; y <= hi[1]; ++y)
        for (int x = lo[0]; x <= hi[0]; ++x) {
          const P3 ap{x - a[0], y - a[1], z - a[2]};
          const double s = len2 > 0.0 ? std::clamp(dot(ap, ab) / len2, 0.0, 1.0) : 0.0;
          const P3 q{ap[0] - s * ab[0], ap[1] - s * ab[1], ap[2] - s * ab[2]};
          if (dot(q, q) <= radius * radius) {
            mask_[static_cast<std::size_t>(x) + static_cast<std::size_t>(d.nx) *
                                                    (y + static_cast<std::size_t>(d.ny) * z)] = 1;
          }
        }
  }

  const PhantomConfig& cfg_;
  std::mt19937_64& rng_;
  std::vector<std::uint8_t> mask_;
};

// Places 2x2x2 cubes at Chebyshev distance >= kSpeckGap from the tree and
// from each other.
constexpr int kSpeckGap = 4;

std::vector<std::uint8_t> place_specks(const PhantomConfig& cfg,
                                       const std::vector<std::uint8_t>& tree,
                                       std::mt19937_64& rng) {
  const Dims& d = cfg.dims;
  std::vector<std::uint8_t> specks(d.voxels(), 0);
  auto idx = [&](int x, int y, int z) {
    return static_cast<std::size_t>(x) + static_cast<std::size_t>(d.nx) *
                                             (y + static_cast<std::size_t>(d.ny) * z);
  };
  auto clear_around = [&](int x0, int y0, int z0) {
    for (int z = z0 - kSpeckGap + 1; z <= z0 + kSpeckGap; ++z)
      for (int y = y0 - kSpeckGap + 1; y <= y0 + kSpeckGap; ++y)
        for (int x = x0 - kSpeckGap + 1; x <= x0 + kSpeckGap; ++x) {
          if (x < 0 || y < 0 || z < 0 || x >= d.nx || y >= d.ny || z >= d.nz) continue;
          if (tree[idx(x, y, z)] || specks[idx(x, y, z)]) return false;
        }
    return true;
  };
  std::uniform_int_distribution<int> px(2, d.nx - 4), py(2, d.ny - 4), pz(2, d.nz - 4);
  int placed = 0;
  for (int attempt = 0; placed < cfg.speck_count && attempt < 10000; ++attempt) {
    const int x = px(rng), y = py(rng), z = pz(rng);
    if (!clear_around(x, y, z)) continue;
    for (int dz = 0; dz < 2; ++dz)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) specks[idx(x + dx, y + dy, z + dz)] = 1;
    ++placed;
  }
  if (placed < cfg.speck_count) {
    throw ArgumentError("could not place " + std::to_string(cfg.speck_count) +
                        " specks; volume too crowded");
  }
  return specks;
}

}  // namespace

Phantom generate_phantom(const PhantomConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const auto tree = TreeBuilder(cfg, rng).build();
  const auto specks = place_specks(cfg, tree, rng);

  std::normal_distribution<double> background(cfg.background_hu_mean, cfg.background_hu_sigma);
  std::normal_distribution<double> vessel(cfg.vessel_hu_mean, cfg.vessel_hu_sigma);
  std::vector<float> image(cfg.dims.voxels());
  std::vector<float> truth(cfg.dims.voxels()), speck_mask(cfg.dims.voxels());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double bg = background(rng);
    const double fg = vessel(rng);
    const bool inside = tree[i] || specks[i];
    // Stored HU are integers, so round here to match the on-disk payload.
    image[i] = static_cast<float>(std::round(inside ? fg : bg));
    truth[i] = tree[i];
    speck_mask[i] = specks[i];
  }
  const Vec3 spacing{1.0, 1.0, 1.0}, origin{0.0, 0.0, 0.0};
  return Phantom{Volume(cfg.dims, spacing, origin, VolumeKind::hu, std::move(image)),
                 Volume(cfg.dims, spacing, origin, VolumeKind::binary, std::move(truth)),
                 Volume(cfg.dims, spacing, origin, VolumeKind::binary, std::move(speck_mask))};
}

}  // namespace vseg
