#include "vseg/preprocess.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>
#include <vector>

#include "vseg/error.hpp"

namespace vseg {
namespace {

int output_extent(int n, double spacing, double target) {
  return std::max(1, static_cast<int>(std::lround(n * spacing / target)));
}

// Continuous input index of output sample j (voxel-center convention).
double source_coordinate(int j, double target, double spacing) {
  return (j + 0.5) * target / spacing - 0.5;
}

struct AxisSample {
  int i0;
  int i1;
  double frac;
};

AxisSample sample_axis(double u, int n) {
  if (u <= 0.0 || n == 1) return {0, 0, 0.0};
  if (u >= n - 1) return {n - 1, n - 1, 0.0};
  const int i0 = static_cast<int>(std::floor(u));
  return {i0, i0 + 1, u - i0};
}

double lerp(double a, double b, double t) { return a + t * (b - a); }

Vec3 iso(double t) { return {t, t, t}; }

}  // namespace

WindowSpec WindowSpec::parse(std::string_view text) {
  const auto colon = text.find(':', 1);
  if (colon == std::string_view::npos) {
    throw ArgumentError("window must be lo:hi, got '" + std::string(text) + "'");
  }
  WindowSpec w;
  auto parse_one = [&](std::string_view part, double& out) {
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    if (ec != std::errc() || ptr != part.data() + part.size()) {
      throw ArgumentError("window must be lo:hi, got '" + std::string(text) + "'");
    }
  };
  parse_one(text.substr(0, colon), w.lo);
  parse_one(text.substr(colon + 1), w.hi);
  if (!(w.lo < w.hi)) {
    throw ArgumentError("window lo must be below hi, got '" + std::string(text) + "'");
  }
  return w;
}

Volume resample_isotropic(const Volume& volume, double target_mm) {
  if (!(target_mm > 0.0)) {
    throw ArgumentError("resample target spacing must be positive, got " +
                        std::to_string(target_mm));
  }
  if (volume.kind() != VolumeKind::hu && volume.kind() != VolumeKind::normalized) {
    throw ArgumentError("trilinear resampling expects an HU or NORMALIZED volume, got " +
                        std::string(to_string(volume.kind())));
  }
  const Dims& in = volume.dims();
  const Vec3& s = volume.spacing();
  const Dims out{output_extent(in.nx, s.x, target_mm),
                 output_extent(in.ny, s.y, target_mm),
                 output_extent(in.nz, s.z, target_mm)};

  std::vector<AxisSample> xs(out.nx), ys(out.ny), zs(out.nz);
  for (int j = 0; j < out.nx; ++j)
    xs[j] = sample_axis(source_coordinate(j, target_mm, s.x), in.nx);
  for (int j = 0; j < out.ny; ++j)
    ys[j] = sample_axis(source_coordinate(j, target_mm, s.y), in.ny);
  for (int j = 0; j < out.nz; ++j)
    zs[j] = sample_axis(source_coordinate(j, target_mm, s.z), in.nz);

  std::vector<float> data(out.voxels());
  std::size_t o = 0;
  for (int kz = 0; kz < out.nz; ++kz) {
    const auto& z = zs[kz];
    for (int ky = 0; ky < out.ny; ++ky) {
      const auto& y = ys[ky];
      for (int kx = 0; kx < out.nx; ++kx, ++o) {
        const auto& x = xs[kx];
        auto v = [&](int ix, int iy, int iz) {
          return static_cast<double>(volume.at(ix, iy, iz));
        };
        const double c00 = lerp(v(x.i0, y.i0, z.i0), v(x.i1, y.i0, z.i0), x.frac);
        const double c10 = lerp(v(x.i0, y.i1, z.i0), v(x.i1, y.i1, z.i0), x.frac);
        const double c01 = lerp(v(x.i0, y.i0, z.i1), v(x.i1, y.i0, z.i1), x.frac);
        const double c11 = lerp(v(x.i0, y.i1, z.i1), v(x.i1, y.i1, z.i1), x.frac);
        const double c0 = lerp(c00, c10, y.frac);
        const double c1 = lerp(c01, c11, y.frac);
        data[o] = static_cast<float>(lerp(c0, c1, z.frac));
      }
    }
  }
  return Volume(out, iso(target_mm), volume.origin(), volume.kind(), std::move(data));
}

Volume resample_isotropic_nearest(const Volume& mask, double target_mm) {
  if (!(target_mm > 0.0)) {
    throw ArgumentError("resample target spacing must be positive, got " +
                        std::to_string(target_mm));
  }
  const Dims& in = mask.dims();
  const Vec3& s = mask.spacing();
  const Dims out{output_extent(in.nx, s.x, target_mm),
                 output_extent(in.ny, s.y, target_mm),
                 output_extent(in.nz, s.z, target_mm)};
  auto nearest = [&](int j, double spacing, int n) {
    const double u = (j + 0.5) * target_mm / spacing;
    return std::clamp(static_cast<int>(std::floor(u)), 0, n - 1);
  };
  std::vector<float> data(out.voxels());
  std::size_t o = 0;
  for (int kz = 0; kz < out.nz; ++kz) {
    const int iz = nearest(kz, s.z, in.nz);
    for (int ky = 0; ky < out.ny; ++ky) {
      const int iy = nearest(ky, s.y, in.ny);
      for (int kx = 0; kx < out.nx; ++kx, ++o) {
        data[o] = mask.at(nearest(kx, s.x, in.nx), iy, iz);
      }
    }
  }
  return Volume(out, iso(target_mm), mask.origin(), mask.kind(), std::move(data));
}

Volume normalize_hu(const Volume& volume, const WindowSpec& window) {
  if (!(window.lo < window.hi)) {
    throw ArgumentError("window lo must be below hi");
  }
  if (volume.kind() != VolumeKind::hu) {
    throw ArgumentError("normalize_hu expects an HU volume, got " +
                        std::string(to_string(volume.kind())));
  }
  const double width = window.hi - window.lo;
  std::vector<float> data(volume.size());
  const auto src = volume.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double x = std::clamp(static_cast<double>(src[i]), window.lo, window.hi);
    data[i] = static_cast<float>((x - window.lo) / width);
  }
  return volume.with_data(std::move(data), VolumeKind::normalized);
}

}  // namespace vseg
