#include "vseg/sampler.hpp"

#include <algorithm>
#include <string>

#include "vseg/error.hpp"

namespace vseg {

std::string_view to_string(Axis axis) {
  switch (axis) {
    case Axis::axial: return "axial";
    case Axis::sagittal: return "sagittal";
    case Axis::coronal: return "coronal";
  }
  return "axial";
}

Axis parse_axis(std::string_view text) {
  if (text == "axial") return Axis::axial;
  if (text == "sagittal") return Axis::sagittal;
  if (text == "coronal") return Axis::coronal;
  throw ArgumentError("unknown axis '" + std::string(text) + "'");
}

Plane plane_shape(const Dims& dims, Axis axis) {
  switch (axis) {
    case Axis::axial: return {dims.ny, dims.nx};
    case Axis::sagittal: return {dims.nz, dims.ny};
    case Axis::coronal: return {dims.nz, dims.nx};
  }
  return {};
}

int slice_count(const Dims& dims, Axis axis) {
  switch (axis) {
    case Axis::axial: return dims.nz;
    case Axis::sagittal: return dims.nx;
    case Axis::coronal: return dims.ny;
  }
  return 0;
}

std::size_t voxel_index(const Dims& dims, Axis axis, int slice, int row, int col) {
  int ix = 0, iy = 0, iz = 0;
  switch (axis) {
    case Axis::axial: ix = col; iy = row; iz = slice; break;
    case Axis::sagittal: ix = slice; iy = col; iz = row; break;
    case Axis::coronal: ix = col; iy = slice; iz = row; break;
  }
  return static_cast<std::size_t>(ix) +
         static_cast<std::size_t>(dims.nx) *
             (static_cast<std::size_t>(iy) +
              static_cast<std::size_t>(dims.ny) * static_cast<std::size_t>(iz));
}

PadSpec pad_for(const Plane& plane, int multiple) {
  if (multiple < 1) throw ArgumentError("pad multiple must be positive");
  auto split = [multiple](int n, int& before, int& after) {
    const int total = (multiple - n % multiple) % multiple;
    before = total / 2;
    after = total - before;
  };
  PadSpec pad;
  split(plane.height, pad.top, pad.bottom);
  split(plane.width, pad.left, pad.right);
  return pad;
}

namespace {

void copy_slice(const Volume& volume, Axis axis, int slice, float* out) {
  const Dims& d = volume.dims();
  const Plane p = plane_shape(d, axis);
  const auto src = volume.data();
  if (axis == Axis::axial) {
    // Axial slices are contiguous.
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(voxel_index(d, axis, slice, 0, 0)),
                p.pixels(), out);
    return;
  }
  for (int r = 0; r < p.height; ++r)
    for (int c = 0; c < p.width; ++c)
      *out++ = src[voxel_index(d, axis, slice, r, c)];
}

}  // namespace

SliceStack extract_stack(const Volume& volume, Axis axis, int center, int radius) {
  const int n = slice_count(volume.dims(), axis);
  if (center < 0 || center >= n) {
    throw IndexError("slice " + std::to_string(center) + " out of range [0, " +
                     std::to_string(n) + ") along " + std::string(to_string(axis)));
  }
  if (radius < 0) throw ArgumentError("slice radius must be non-negative");
  const Plane p = plane_shape(volume.dims(), axis);
  SliceStack stack;
  stack.axis = axis;
  stack.center = center;
  stack.radius = radius;
  stack.height = p.height;
  stack.width = p.width;
  stack.data.resize(static_cast<std::size_t>(2 * radius + 1) * p.pixels());
  for (int k = 0; k < 2 * radius + 1; ++k) {
    const int slice = std::clamp(center - radius + k, 0, n - 1);
    copy_slice(volume, axis, slice, stack.data.data() + k * p.pixels());
  }
  return stack;
}

std::vector<SliceStack> iterate_stacks(const Volume& volume, Axis axis, int radius) {
  const int n = slice_count(volume.dims(), axis);
  std::vector<SliceStack> stacks;
  stacks.reserve(n);
  for (int i = 0; i < n; ++i) stacks.push_back(extract_stack(volume, axis, i, radius));
  return stacks;
}

SliceStack pad_stack(const SliceStack& stack, int multiple) {
  if (!stack.pad.empty()) throw StateError("slice stack is already padded");
  const PadSpec pad = pad_for({stack.height, stack.width}, multiple);
  if (pad.empty()) return stack;
  SliceStack out = stack;
  out.pad = pad;
  out.height = stack.height + pad.top + pad.bottom;
  out.width = stack.width + pad.left + pad.right;
  out.data.assign(static_cast<std::size_t>(stack.channels()) * out.height * out.width, 0.0f);
  for (int k = 0; k < stack.channels(); ++k) {
    const auto src = stack.channel(k);
    float* dst = out.data.data() + static_cast<std::size_t>(k) * out.height * out.width;
    for (int r = 0; r < out.height; ++r) {
      const int sr = std::clamp(r - pad.top, 0, stack.height - 1);
      for (int c = 0; c < out.width; ++c) {
        const int sc = std::clamp(c - pad.left, 0, stack.width - 1);
        dst[r * out.width + c] = src[static_cast<std::size_t>(sr) * stack.width + sc];
      }
    }
  }
  return out;
}

Map2D extract_slice(const Volume& volume, Axis axis, int slice) {
  const int n = slice_count(volume.dims(), axis);
  if (slice < 0 || slice >= n) {
    throw IndexError("slice " + std::to_string(slice) + " out of range [0, " +
                     std::to_string(n) + ")");
  }
  const Plane p = plane_shape(volume.dims(), axis);
  Map2D map{p.height, p.width, std::vector<float>(p.pixels())};
  copy_slice(volume, axis, slice, map.data.data());
  return map;
}

Map2D pad_map(const Map2D& map, const PadSpec& pad) {
  if (pad.empty()) return map;
  const int h = map.height + pad.top + pad.bottom;
  const int w = map.width + pad.left + pad.right;
  Map2D out{h, w, std::vector<float>(static_cast<std::size_t>(h) * w)};
  for (int r = 0; r < h; ++r) {
    const int sr = std::clamp(r - pad.top, 0, map.height - 1);
    for (int c = 0; c < w; ++c) {
      const int sc = std::clamp(c - pad.left, 0, map.width - 1);
      out.data[static_cast<std::size_t>(r) * w + c] =
          map.data[static_cast<std::size_t>(sr) * map.width + sc];
    }
  }
  return out;
}

Map2D crop_map(const Map2D& map, const PadSpec& pad) {
  if (pad.empty()) return map;
  const int h = map.height - pad.top - pad.bottom;
  const int w = map.width - pad.left - pad.right;
  if (h < 1 || w < 1) throw AssemblyError("crop removes the whole map");
  Map2D out{h, w, std::vector<float>(static_cast<std::size_t>(h) * w)};
  for (int r = 0; r < h; ++r)
    std::copy_n(map.data.begin() + static_cast<std::ptrdiff_t>(r + pad.top) * map.width + pad.left,
                w, out.data.begin() + static_cast<std::ptrdiff_t>(r) * w);
  return out;
}

Volume assemble_volume(std::span<const Map2D> center_maps, Axis axis, const Dims& dims,
                       const PadSpec& pad, Vec3 spacing, Vec3 origin) {
  const int n = slice_count(dims, axis);
  if (static_cast<int>(center_maps.size()) != n) {
    throw AssemblyError("expected " + std::to_string(n) + " maps along " +
                        std::string(to_string(axis)) + ", got " +
                        std::to_string(center_maps.size()));
  }
  const Plane p = plane_shape(dims, axis);
  const int padded_h = p.height + pad.top + pad.bottom;
  const int padded_w = p.width + pad.left + pad.right;
  std::vector<float> data(dims.voxels());
  for (int i = 0; i < n; ++i) {
    const Map2D& m = center_maps[i];
    if (m.height != padded_h || m.width != padded_w ||
        m.data.size() != static_cast<std::size_t>(padded_h) * padded_w) {
      throw AssemblyError("map " + std::to_string(i) + " is " + std::to_string(m.height) +
                          "x" + std::to_string(m.width) + ", expected " +
                          std::to_string(padded_h) + "x" + std::to_string(padded_w));
    }
    for (int r = 0; r < p.height; ++r)
      for (int c = 0; c < p.width; ++c)
        data[voxel_index(dims, axis, i, r, c)] =
            m.data[static_cast<std::size_t>(r + pad.top) * padded_w + c + pad.left];
  }
  return Volume(dims, spacing, origin, VolumeKind::probability, std::move(data));
}

}  // namespace vseg
