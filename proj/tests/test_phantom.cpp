#include <doctest.h>

#include <algorithm>
#include <climits>
#include <cstdlib>

#include "vseg/error.hpp"
#include "vseg/phantom.hpp"
#include "vseg/vessel_graph.hpp"

using namespace vseg;

namespace {

Phantom make(std::uint64_t seed) {
  PhantomConfig c;
  c.seed = seed;
  return generate_phantom(c);
}

std::vector<Voxel> foreground(const Volume& m) {
  std::vector<Voxel> out;
  const Dims d = m.dims();
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x)
        if (m.at(x, y, z) == 1.0f) out.push_back({x, y, z});
  return out;
}

}  // namespace

TEST_CASE("same seed gives identical phantoms") {
  const Phantom a = make(3), b = make(3);
  CHECK(bit_identical(a.image, b.image));
  CHECK(bit_identical(a.truth, b.truth));
  CHECK(bit_identical(a.specks, b.specks));
  CHECK(!bit_identical(a.truth, make(4).truth));
  CHECK(a.image.kind() == VolumeKind::hu);
  CHECK(a.truth.kind() == VolumeKind::binary);
  CHECK(a.image.dims() == Dims{64, 64, 64});
}

TEST_CASE("default phantoms over 20 seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    INFO("seed " << seed);
    const Phantom p = make(seed);
    const auto tree = foreground(p.truth);
    const double fraction = static_cast<double>(tree.size()) / p.truth.size();
    CHECK(fraction >= 0.005);
    CHECK(fraction <= 0.08);
    CHECK(label_components(p.truth).count() == 1);

    // Specks: disjoint from the tree and at least 2 voxels away from it.
    const auto specks = foreground(p.specks);
    CHECK(label_components(p.specks).count() == 3);
    int nearest = INT_MAX;
    for (const Voxel& s : specks) {
      REQUIRE(p.truth.at(s.x, s.y, s.z) == 0.0f);
      for (const Voxel& t : tree)
        nearest = std::min(nearest, std::max({std::abs(s.x - t.x), std::abs(s.y - t.y),
                                              std::abs(s.z - t.z)}));
    }
    CHECK(nearest >= 2);

    // Specks carry vessel intensity, so they are real bait for the model.
    for (const Voxel& s : specks) CHECK(p.image.at(s.x, s.y, s.z) > -400.0f);
  }
}

TEST_CASE("phantom skeletons drive pruning") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    INFO("seed " << seed);
    const Phantom p = make(seed);
    const auto tree = prune_components(build_graph(skeletonize(p.truth)), 10);
    CHECK(tree.component_sizes.size() == 1);
    const auto specks = build_graph(skeletonize(p.specks));
    for (std::size_t n : specks.component_sizes) CHECK(n < 10);

    std::vector<float> both(p.truth.size());
    for (std::size_t i = 0; i < both.size(); ++i) both[i] = std::max(p.truth[i], p.specks[i]);
    const Volume noisy = p.truth.with_data(std::move(both), VolumeKind::binary);
    CHECK(bit_identical(refine(noisy), p.truth));
  }
}

TEST_CASE("phantom config checks") {
  auto bad = [](auto edit) {
    PhantomConfig c;
    edit(c);
    return c;
  };
  CHECK_THROWS_AS(bad([](PhantomConfig& c) { c.dims = {15, 64, 64}; }).validate(), ArgumentError);
  CHECK_THROWS_AS(bad([](PhantomConfig& c) { c.root_radius = 0.5; }).validate(), ArgumentError);
  CHECK_THROWS_AS(bad([](PhantomConfig& c) { c.radius_decay = 1.0; }).validate(), ArgumentError);
  CHECK_THROWS_AS(bad([](PhantomConfig& c) { c.radius_decay = 0.0; }).validate(), ArgumentError);
  CHECK_THROWS_AS(bad([](PhantomConfig& c) { c.branches = 0; }).validate(), ArgumentError);
  CHECK_THROWS_AS(bad([](PhantomConfig& c) { c.speck_count = -1; }).validate(), ArgumentError);
  CHECK_THROWS_AS(generate_phantom(bad([](PhantomConfig& c) { c.root_radius = 0.0; })),
                  ArgumentError);
  CHECK_NOTHROW(generate_phantom(bad([](PhantomConfig& c) { c.dims = {16, 16, 16}; })));
}
