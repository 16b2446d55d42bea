#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace vseg {

enum class VolumeKind { hu, normalized, probability, binary };

std::string_view to_string(VolumeKind kind);
VolumeKind parse_volume_kind(std::string_view text);

struct Dims {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  std::size_t voxels() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  friend bool operator==(const Dims&, const Dims&) = default;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

// A 3D scalar grid. Voxel (ix, iy, iz) lives at data[ix + nx * (iy + ny * iz)].
// Voxel i along an axis covers the physical interval
// [origin + i * spacing, origin + (i + 1) * spacing), so its center sits at
// origin + (i + 0.5) * spacing.
//
// A Volume validates its invariants on construction and is immutable
// afterwards.
class Volume {
 public:
  Volume(Dims dims, Vec3 spacing, Vec3 origin, VolumeKind kind,
         std::vector<float> data);

  static Volume filled(Dims dims, float value, VolumeKind kind,
                       Vec3 spacing = {1.0, 1.0, 1.0},
                       Vec3 origin = {0.0, 0.0, 0.0});

  const Dims& dims() const { return dims_; }
  const Vec3& spacing() const { return spacing_; }
  const Vec3& origin() const { return origin_; }
  VolumeKind kind() const { return kind_; }
  std::span<const float> data() const { return data_; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(int ix, int iy, int iz) const {
    return static_cast<std::size_t>(ix) +
           static_cast<std::size_t>(dims_.nx) *
               (static_cast<std::size_t>(iy) +
                static_cast<std::size_t>(dims_.ny) * static_cast<std::size_t>(iz));
  }
  float at(int ix, int iy, int iz) const { return data_[index(ix, iy, iz)]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // Same geometry, new payload and kind.
  Volume with_data(std::vector<float> data, VolumeKind kind) const;

  bool same_geometry(const Volume& other) const {
    return dims_ == other.dims_ && spacing_ == other.spacing_ &&
           origin_ == other.origin_;
  }

  friend bool operator==(const Volume& a, const Volume& b);

 private:
  Dims dims_;
  Vec3 spacing_;
  Vec3 origin_;
  VolumeKind kind_;
  std::vector<float> data_;
};

// Bit-level comparison of payloads (distinguishes -0.0 / 0.0 and NaN bits).
bool bit_identical(const Volume& a, const Volume& b);

// MetaImage (.mhd header + raw payload). The payload is always little-endian.
// HU volumes are written as MET_SHORT after rounding half away from zero;
// every other kind is written as MET_FLOAT. The writer places the payload
// next to the header with the header's stem and a ".raw" extension.
Volume read_metaimage(const std::filesystem::path& path);
void write_metaimage(const Volume& volume, const std::filesystem::path& path);

}  // namespace vseg
