#include <doctest.h>

#include "support.hpp"
#include "vseg/error.hpp"
#include "vseg/sampler.hpp"

using namespace vseg;

namespace {

Volume z_ramp(int nz) {
  std::vector<float> data(static_cast<std::size_t>(3) * 2 * nz);
  for (int z = 0; z < nz; ++z)
    for (int i = 0; i < 6; ++i) data[z * 6 + i] = static_cast<float>(z);
  return Volume({3, 2, nz}, {1, 1, 1}, {0, 0, 0}, VolumeKind::hu, data);
}

std::vector<float> channel_values(const SliceStack& s) {
  std::vector<float> out;
  for (int k = 0; k < s.channels(); ++k) out.push_back(s.channel(k)[0]);
  return out;
}

}  // namespace

TEST_CASE("axial stack indexes slices directly") {
  const Volume v = z_ramp(9);
  const SliceStack s = extract_stack(v, Axis::axial, 4, 4);
  CHECK(s.channels() == 9);
  CHECK(channel_values(s) == std::vector<float>{0, 1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(s.height == 2);
  CHECK(s.width == 3);
}

TEST_CASE("stacks replicate the edge slices") {
  const Volume v = z_ramp(9);
  CHECK(channel_values(extract_stack(v, Axis::axial, 0, 4)) ==
        std::vector<float>{0, 0, 0, 0, 0, 1, 2, 3, 4});
  CHECK(channel_values(extract_stack(v, Axis::axial, 8, 4)) ==
        std::vector<float>{4, 5, 6, 7, 8, 8, 8, 8, 8});
  const Volume thin = z_ramp(2);
  CHECK(channel_values(extract_stack(thin, Axis::axial, 1, 4)) ==
        std::vector<float>{0, 0, 0, 0, 1, 1, 1, 1, 1});
}

TEST_CASE("radius zero gives the center slice") {
  const Volume v = testing::random_volume({4, 5, 6}, VolumeKind::probability, 1);
  for (Axis a : kAllAxes) {
    const SliceStack s = extract_stack(v, a, 1, 0);
    REQUIRE(s.channels() == 1);
    const Map2D m = extract_slice(v, a, 1);
    CHECK(std::vector<float>(s.center_channel().begin(), s.center_channel().end()) == m.data);
  }
}

TEST_CASE("out of range center is an index error") {
  const Volume v = z_ramp(5);
  CHECK_THROWS_AS(extract_stack(v, Axis::axial, 5, 4), IndexError);
  CHECK_THROWS_AS(extract_stack(v, Axis::axial, -1, 4), IndexError);
  CHECK_THROWS_AS(extract_stack(v, Axis::sagittal, 3, 4), IndexError);
}

TEST_CASE("one stack per slice along each axis") {
  const Volume v = Volume::filled({4, 5, 6}, 0.0f, VolumeKind::probability);
  CHECK(iterate_stacks(v, Axis::axial, 4).size() == 6);
  CHECK(iterate_stacks(v, Axis::sagittal, 4).size() == 4);
  CHECK(iterate_stacks(v, Axis::coronal, 4).size() == 5);
  const auto stacks = iterate_stacks(v, Axis::coronal, 4);
  for (int i = 0; i < 5; ++i) CHECK(stacks[i].center == i);
}

TEST_CASE("plane layout per axis") {
  const Dims d{4, 5, 6};
  CHECK(plane_shape(d, Axis::axial) == Plane{5, 4});
  CHECK(plane_shape(d, Axis::sagittal) == Plane{6, 5});
  CHECK(plane_shape(d, Axis::coronal) == Plane{6, 4});
}

TEST_CASE("sagittal assembly matches direct indexing") {
  const Dims d{4, 5, 6};
  std::vector<Map2D> maps;
  for (int ix = 0; ix < d.nx; ++ix) {
    Map2D m{d.nz, d.ny, std::vector<float>(static_cast<std::size_t>(d.nz) * d.ny)};
    for (int r = 0; r < d.nz; ++r)
      for (int c = 0; c < d.ny; ++c) m.data[r * d.ny + c] = (ix * 100 + r * 10 + c) / 1000.0f;
    maps.push_back(std::move(m));
  }
  const Volume v = assemble_volume(maps, Axis::sagittal, d);
  CHECK(v.kind() == VolumeKind::probability);
  for (int iz = 0; iz < d.nz; ++iz)
    for (int iy = 0; iy < d.ny; ++iy)
      for (int ix = 0; ix < d.nx; ++ix)
        REQUIRE(v.at(ix, iy, iz) == maps[ix].data[iz * d.ny + iy]);
}

TEST_CASE("constant maps assemble to a constant volume") {
  const Dims d{3, 4, 5};
  const Plane p = plane_shape(d, Axis::coronal);
  std::vector<Map2D> maps(d.ny, Map2D{p.height, p.width, std::vector<float>(p.pixels(), 0.5f)});
  const Volume v = assemble_volume(maps, Axis::coronal, d);
  for (float x : v.data()) REQUIRE(x == 0.5f);
}

TEST_CASE("assembly rejects bad counts and shapes") {
  const Dims d{3, 4, 5};
  const Plane p = plane_shape(d, Axis::axial);
  std::vector<Map2D> maps(4, Map2D{p.height, p.width, std::vector<float>(p.pixels())});
  CHECK_THROWS_AS(assemble_volume(maps, Axis::axial, d), AssemblyError);
  maps.resize(5, maps[0]);
  maps[2] = Map2D{p.width, p.height, std::vector<float>(p.pixels())};
  CHECK_THROWS_AS(assemble_volume(maps, Axis::axial, d), AssemblyError);
}

TEST_CASE("slice and reassemble is the identity, with padding") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Volume v = testing::random_volume({7, 10, 5}, VolumeKind::probability, seed);
    for (Axis a : kAllAxes) {
      std::vector<Map2D> maps;
      PadSpec pad;
      for (const SliceStack& s : iterate_stacks(v, a, 4)) {
        const SliceStack padded = pad_stack(s, 4);
        pad = padded.pad;
        REQUIRE(padded.height % 4 == 0);
        REQUIRE(padded.width % 4 == 0);
        maps.push_back(Map2D{padded.height, padded.width,
                             {padded.center_channel().begin(), padded.center_channel().end()}});
      }
      CHECK(bit_identical(assemble_volume(maps, a, v.dims(), pad), v));
    }
  }
}

TEST_CASE("padding is symmetric and edge replicating") {
  const PadSpec pad = pad_for({5, 6}, 4);
  CHECK(pad == PadSpec{1, 2, 1, 1});
  CHECK(pad_for({8, 4}, 4).empty());

  const Map2D m{2, 2, {1, 2, 3, 4}};
  const Map2D p = pad_map(m, {1, 0, 0, 1});
  CHECK(p.height == 3);
  CHECK(p.width == 3);
  CHECK(p.data == std::vector<float>{1, 2, 2, 1, 2, 2, 3, 4, 4});
  const Map2D c = crop_map(p, {1, 0, 0, 1});
  CHECK(c.data == m.data);
}

TEST_CASE("stacks never read outside the volume") {
  // An out-of-bounds read would pull values other than the slice values.
  const Volume v = z_ramp(6);
  for (int radius = 0; radius <= 8; ++radius)
    for (int center : {0, 1, 4, 5}) {
      for (float x : extract_stack(v, Axis::axial, center, radius).data) {
        REQUIRE(x >= 0.0f);
        REQUIRE(x <= 5.0f);
      }
    }
}
