#pragma once

#include <string_view>

#include "vseg/volume.hpp"

namespace vseg {

// HU interval kept by the intensity normalization. Defaults to the lung
// window [-1200, 600].
struct WindowSpec {
  double lo = -1200.0;
  double hi = 600.0;

  // Parses "lo:hi" (e.g. "-1200:600").
  static WindowSpec parse(std::string_view text);
};

// Trilinear resampling onto an isotropic grid of `target_mm` spacing.
// Output dims per axis are round(n * s / target_mm), at least 1. Output voxel
// centers are mapped into input physical space; samples beyond the outermost
// input voxel centers take the nearest border value. Origin (grid corner) is
// preserved. Accepts HU and NORMALIZED volumes.
Volume resample_isotropic(const Volume& volume, double target_mm = 1.0);

// Nearest-neighbor variant of resample_isotropic for BINARY masks.
Volume resample_isotropic_nearest(const Volume& mask, double target_mm = 1.0);

// clamp(x, lo, hi) then (x - lo) / (hi - lo). HU in, NORMALIZED out.
Volume normalize_hu(const Volume& volume, const WindowSpec& window = {});

}  // namespace vseg
