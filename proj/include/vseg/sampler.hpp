#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include "vseg/volume.hpp"

namespace vseg {

// AXIAL slices along z, SAGITTAL along x, CORONAL along y.
enum class Axis { axial, sagittal, coronal };

inline constexpr std::array<Axis, 3> kAllAxes{Axis::axial, Axis::sagittal,
                                              Axis::coronal};

std::string_view to_string(Axis axis);
Axis parse_axis(std::string_view text);

// In-plane layout of one slice, rows x cols:
//   AXIAL     rows = iy, cols = ix   (ny x nx)
//   SAGITTAL  rows = iz, cols = iy   (nz x ny)
//   CORONAL   rows = iz, cols = ix   (nz x nx)
struct Plane {
  int height = 0;
  int width = 0;
  std::size_t pixels() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  friend bool operator==(const Plane&, const Plane&) = default;
};

Plane plane_shape(const Dims& dims, Axis axis);
int slice_count(const Dims& dims, Axis axis);

// Volume index of in-plane pixel (row, col) of slice `slice` along `axis`.
std::size_t voxel_index(const Dims& dims, Axis axis, int slice, int row, int col);

// Symmetric in-plane padding applied before the network.
struct PadSpec {
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;
  bool empty() const { return top == 0 && bottom == 0 && left == 0 && right == 0; }
  friend bool operator==(const PadSpec&, const PadSpec&) = default;
};

// Pads each in-plane extent up to the next multiple of `multiple`; the extra
// `total` rows split as total / 2 before and the remainder after.
PadSpec pad_for(const Plane& plane, int multiple);

// A single-channel H x W map, row-major.
struct Map2D {
  int height = 0;
  int width = 0;
  std::vector<float> data;
};

// 2r+1 slices centered on `center`, channel k holding slice center - r + k.
// Indices past either end of the volume replicate the nearest valid slice.
struct SliceStack {
  Axis axis = Axis::axial;
  int center = 0;
  int radius = 0;
  int height = 0;
  int width = 0;
  PadSpec pad;              // padding already applied to `data`
  std::vector<float> data;  // channels x height x width

  int channels() const { return 2 * radius + 1; }
  std::span<const float> channel(int k) const {
    const std::size_t n = static_cast<std::size_t>(height) * width;
    return std::span<const float>(data).subspan(static_cast<std::size_t>(k) * n, n);
  }
  std::span<const float> center_channel() const { return channel(radius); }
};

SliceStack extract_stack(const Volume& volume, Axis axis, int center, int radius = 4);

// One stack per slice index along `axis`, ascending.
std::vector<SliceStack> iterate_stacks(const Volume& volume, Axis axis, int radius);

// Edge-replicating pad of every channel; records the pad in the result.
SliceStack pad_stack(const SliceStack& stack, int multiple);

// The center slice of `volume` along `axis`, as a map (labels, probabilities).
Map2D extract_slice(const Volume& volume, Axis axis, int slice);

// Edge-replicating pad of a single map.
Map2D pad_map(const Map2D& map, const PadSpec& pad);

// Removes `pad` from a padded map.
Map2D crop_map(const Map2D& map, const PadSpec& pad);

// Places map i at slice i along `axis`. Maps may carry `pad`, which is cropped
// away first. Result kind is PROBABILITY.
Volume assemble_volume(std::span<const Map2D> center_maps, Axis axis, const Dims& dims,
                       const PadSpec& pad = {}, Vec3 spacing = {1.0, 1.0, 1.0},
                       Vec3 origin = {0.0, 0.0, 0.0});

}  // namespace vseg
