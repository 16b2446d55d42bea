#pragma once

#include <cstdint>

#include "vseg/volume.hpp"

namespace vseg {

// Synthetic vascular tree: a binary tree of straight tubes grown from a
// volume face, rasterized into an HU volume over noisy parenchyma, plus a few
// small vessel-intensity specks that are not part of the ground truth.
struct PhantomConfig {
  Dims dims{64, 64, 64};
  std::uint64_t seed = 0;
  int branches = 4;  // levels of the tree, root included
  double root_radius = 3.0;
  double radius_decay = 0.75;
  double vessel_hu_mean = -50.0;
  double vessel_hu_sigma = 30.0;
  double background_hu_mean = -850.0;
  double background_hu_sigma = 50.0;
  int speck_count = 3;

  void validate() const;
};

struct Phantom {
  Volume image;  // HU
  Volume truth;  // BINARY, the tree
  Volume specks; // BINARY, distractors only
};

Phantom generate_phantom(const PhantomConfig& config);

}  // namespace vseg
