#include "vseg/volume.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "vseg/error.hpp"

namespace vseg {

std::string_view to_string(VolumeKind kind) {
  switch (kind) {
    case VolumeKind::hu: return "HU";
    case VolumeKind::normalized: return "NORMALIZED";
    case VolumeKind::probability: return "PROBABILITY";
    case VolumeKind::binary: return "BINARY";
  }
  return "HU";
}

VolumeKind parse_volume_kind(std::string_view text) {
  if (text == "HU") return VolumeKind::hu;
  if (text == "NORMALIZED") return VolumeKind::normalized;
  if (text == "PROBABILITY") return VolumeKind::probability;
  if (text == "BINARY") return VolumeKind::binary;
  throw ParseError("unknown volume kind '" + std::string(text) + "'");
}

namespace {

void check_kind(VolumeKind kind, std::span<const float> data) {
  if (kind == VolumeKind::probability || kind == VolumeKind::normalized) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!(data[i] >= 0.0f && data[i] <= 1.0f)) {
        throw ArgumentError(std::string(to_string(kind)) + " value " +
                            std::to_string(data[i]) + " at index " +
                            std::to_string(i) + " is outside [0, 1]");
      }
    }
  } else if (kind == VolumeKind::binary) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data[i] != 0.0f && data[i] != 1.0f) {
        throw ArgumentError("BINARY value " + std::to_string(data[i]) +
                            " at index " + std::to_string(i) +
                            " is not 0 or 1");
      }
    }
  }
}

}  // namespace

Volume::Volume(Dims dims, Vec3 spacing, Vec3 origin, VolumeKind kind,
               std::vector<float> data)
    : dims_(dims), spacing_(spacing), origin_(origin), kind_(kind),
      data_(std::move(data)) {
  if (dims_.nx < 1 || dims_.ny < 1 || dims_.nz < 1) {
    throw ArgumentError("volume dims must be positive, got " +
                        std::to_string(dims_.nx) + "x" +
                        std::to_string(dims_.ny) + "x" +
                        std::to_string(dims_.nz));
  }
  if (!(spacing_.x > 0.0 && spacing_.y > 0.0 && spacing_.z > 0.0)) {
    throw ArgumentError("volume spacing must be strictly positive");
  }
  if (data_.size() != dims_.voxels()) {
    throw SizeError("volume data has " + std::to_string(data_.size()) +
                    " elements, dims require " +
                    std::to_string(dims_.voxels()));
  }
  check_kind(kind_, data_);
}

Volume Volume::filled(Dims dims, float value, VolumeKind kind, Vec3 spacing,
                      Vec3 origin) {
  return Volume(dims, spacing, origin, kind,
                std::vector<float>(dims.voxels(), value));
}

Volume Volume::with_data(std::vector<float> data, VolumeKind kind) const {
  return Volume(dims_, spacing_, origin_, kind, std::move(data));
}

bool operator==(const Volume& a, const Volume& b) {
  return a.kind_ == b.kind_ && a.same_geometry(b) && a.data_ == b.data_;
}

bool bit_identical(const Volume& a, const Volume& b) {
  if (a.kind() != b.kind() || !a.same_geometry(b)) return false;
  return std::memcmp(a.data().data(), b.data().data(),
                     a.size() * sizeof(float)) == 0;
}

}  // namespace vseg
