#include <doctest.h>

#include <random>
#include <set>

#include "mist/resample.hpp"
#include "support/synthetic.hpp"

using namespace mist;
using preprocess::resample_image;
using preprocess::resample_labels_nearest;
using preprocess::resample_mask;

TEST_SUITE("resample") {

TEST_CASE("identity-spacing resample reproduces the input within 1e-5") {
  std::mt19937_64 rng(7);
  Volume v(Index3{9, 8, 7}, 2, VoxelKind::continuous);
  std::uniform_real_distribution<double> value(-100.0, 100.0);
  for (auto& x : v.data()) x = static_cast<float>(value(rng));
  v.set_spacing({1.0, 1.0, 1.0});

  const Volume r = resample_image(v, {1.0, 1.0, 1.0});
  REQUIRE(r.shape() == v.shape());
  for (std::size_t i = 0; i < v.data().size(); ++i)
    CHECK(std::abs(r.data()[i] - v.data()[i]) < 1e-5f);
}

TEST_CASE("cubic upsampling reproduces a linear ramp on the interior") {
  Volume v(Index3{48, 6, 6}, 1, VoxelKind::continuous);
  v.set_spacing({2.0, 2.0, 2.0});
  for (std::int64_t k = 0; k < 6; ++k)
    for (std::int64_t j = 0; j < 6; ++j)
      for (std::int64_t i = 0; i < 48; ++i)
        v.at(0, i, j, k) = static_cast<float>(i) * 2.0f;  // f(x) = x in mm

  const Volume r = resample_image(v, {1.0, 1.0, 1.0});
  CHECK(r.shape()[0] == 96);
  // Interior voxels only; the mirror boundary bends the ramp at the ends
  // and the perturbation decays like |sqrt(3)-2|^d.
  for (std::int64_t k = 2; k < r.shape()[2] - 2; ++k) {
    for (std::int64_t j = 2; j < r.shape()[1] - 2; ++j) {
      for (std::int64_t i = 24; i < r.shape()[0] - 24; ++i) {
        const double expected = static_cast<double>(i) * 1.0;
        CHECK(std::abs(r.at(0, i, j, k) - expected) < 1e-3);
      }
    }
  }
}

TEST_CASE("anisotropic path uses nearest neighbor on the low-res axis") {
  // spacing (1,1,6): ratio 6 > 3. The z pass must only replicate existing
  // slabs, never interpolate between them.
  Volume v(Index3{8, 8, 5}, 1, VoxelKind::continuous);
  v.set_spacing({1.0, 1.0, 6.0});
  for (std::int64_t k = 0; k < 5; ++k)
    for (std::int64_t j = 0; j < 8; ++j)
      for (std::int64_t i = 0; i < 8; ++i)
        v.at(0, i, j, k) = static_cast<float>(100 * k);  // constant per slab

  const Volume r = resample_image(v, {1.0, 1.0, 1.0});
  CHECK(r.shape()[2] == 30);
  std::set<float> seen(r.data().begin(), r.data().end());
  for (float x : seen) {
    const bool slab_value = x == 0.0f || x == 100.0f || x == 200.0f ||
                            x == 300.0f || x == 400.0f;
    CHECK(slab_value);
  }
}

TEST_CASE("output shape follows round(n * s_in / s_out) with a floor of 1") {
  Volume v(Index3{5, 5, 5}, 1, VoxelKind::continuous);
  v.set_spacing({1.0, 1.0, 1.0});
  const Volume r = resample_image(v, {0.4, 2.0, 10.0});
  CHECK(r.shape() == Index3{13, 3, 1});  // 12.5 rounds half away from zero
  CHECK(r.spacing() == Vec3{0.4, 2.0, 10.0});
}

TEST_CASE("non-positive target spacing is rejected") {
  Volume v(Index3{4, 4, 4}, 1, VoxelKind::continuous);
  CHECK_THROWS_AS(resample_image(v, {1.0, 0.0, 1.0}), Error);
  CHECK_THROWS_AS(resample_image(v, {1.0, -2.0, 1.0}), Error);
}

TEST_CASE("mask resample at identity spacing is exact") {
  std::mt19937_64 rng(13);
  Volume m(Index3{7, 7, 7}, 1, VoxelKind::labels);
  for (auto& x : m.data()) x = static_cast<float>(rng() % 4);
  const Volume r = resample_mask(m, {0, 1, 2, 3}, {1.0, 1.0, 1.0});
  CHECK(r.data() == m.data());
  CHECK(r.kind() == VoxelKind::labels);
}

TEST_CASE("mask resample only emits declared labels") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    Volume m(Index3{6, 6, 6}, 1, VoxelKind::labels);
    for (auto& x : m.data()) x = static_cast<float>(rng() % 3);
    m.set_spacing({1.7, 0.9, 1.3});
    const Volume r = resample_mask(m, {0, 1, 2}, {1.0, 1.0, 1.0});
    for (float x : r.data()) {
      const bool declared = x == 0.0f || x == 1.0f || x == 2.0f;
      CHECK(declared);
    }
  }
}

TEST_CASE("mask resample rejects undeclared values") {
  Volume m(Index3{3, 3, 3}, 1, VoxelKind::labels);
  m.at(0, 1, 1, 1) = 7.0f;
  CHECK_THROWS_WITH_AS(resample_mask(m, {0, 1}, {1.0, 1.0, 1.0}),
                       doctest::Contains("UnknownLabel"), Error);
}

TEST_CASE("2x upsampled two-region mask places the boundary at the midpoint") {
  // 1D setup along x: labels 0 for x<4, 1 for x>=4, spacing 2 -> 1.
  // Linear interpolation of the indicators crosses 0.5 halfway between the
  // last 0-sample (x=3: 6mm) and the first 1-sample (x=4: 8mm), i.e. at 7mm;
  // output voxel centers at integers mm: 0..6 -> 0, 7 -> tie -> smaller
  // label 0, 8.. -> 1.
  Volume m(Index3{8, 4, 4}, 1, VoxelKind::labels);
  m.set_spacing({2.0, 2.0, 2.0});
  for (std::int64_t k = 0; k < 4; ++k)
    for (std::int64_t j = 0; j < 4; ++j)
      for (std::int64_t i = 4; i < 8; ++i) m.at(0, i, j, k) = 1.0f;

  const Volume r = resample_mask(m, {0, 1}, {1.0, 2.0, 2.0});
  CHECK(r.shape()[0] == 16);
  for (std::int64_t i = 0; i < 16; ++i) {
    const float expected = i <= 7 ? 0.0f : 1.0f;
    CHECK(r.at(0, i, 0, 0) == expected);
  }
}

TEST_CASE("nearest-neighbor label restore inverts an identity resample") {
  std::mt19937_64 rng(19);
  Volume m(Index3{6, 5, 4}, 1, VoxelKind::labels);
  for (auto& x : m.data()) x = static_cast<float>(rng() % 3);
  m.set_spacing({1.0, 1.0, 4.0});
  const Volume r =
      resample_labels_nearest(m, m.shape(), m.spacing());
  CHECK(r.data() == m.data());
}

TEST_CASE("downsample then NN-restore recovers blocky labels") {
  // Blocks of 4 voxels survive a 2x down/up cycle.
  Volume m(Index3{16, 4, 4}, 1, VoxelKind::labels);
  m.set_spacing({1.0, 1.0, 1.0});
  for (std::int64_t k = 0; k < 4; ++k)
    for (std::int64_t j = 0; j < 4; ++j)
      for (std::int64_t i = 0; i < 16; ++i)
        m.at(0, i, j, k) = static_cast<float>((i / 4) % 2);

  const Volume down = resample_mask(m, {0, 1}, {2.0, 1.0, 1.0});
  const Volume up = resample_labels_nearest(down, m.shape(), m.spacing());
  // Only voxels at block boundaries may flip through the 2x cycle.
  std::int64_t disagreements = 0;
  for (std::size_t i = 0; i < m.data().size(); ++i)
    disagreements += m.data()[i] != up.data()[i];
  CHECK(disagreements <= static_cast<std::int64_t>(m.data().size() / 4));
}

}  // TEST_SUITE
