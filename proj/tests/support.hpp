#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "vseg/volume.hpp"

namespace testing {

// Scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "vseg") {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline vseg::Volume random_volume(vseg::Dims dims, vseg::VolumeKind kind, std::uint64_t seed,
                                  vseg::Vec3 spacing = {1.0, 1.0, 1.0},
                                  vseg::Vec3 origin = {0.0, 0.0, 0.0}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  std::vector<float> data(dims.voxels());
  for (auto& v : data) {
    switch (kind) {
      case vseg::VolumeKind::hu: v = std::round(-1500.0f + 3000.0f * unit(rng)); break;
      case vseg::VolumeKind::binary: v = unit(rng) < 0.3f ? 1.0f : 0.0f; break;
      default: v = unit(rng); break;
    }
  }
  return vseg::Volume(dims, spacing, origin, kind, std::move(data));
}

inline vseg::Volume mask_from(vseg::Dims dims, const std::vector<std::array<int, 3>>& voxels) {
  std::vector<float> data(dims.voxels(), 0.0f);
  for (const auto& v : voxels)
    data[v[0] + static_cast<std::size_t>(dims.nx) * (v[1] + static_cast<std::size_t>(dims.ny) * v[2])] = 1.0f;
  return vseg::Volume(dims, {1, 1, 1}, {0, 0, 0}, vseg::VolumeKind::binary, std::move(data));
}

}  // namespace testing
