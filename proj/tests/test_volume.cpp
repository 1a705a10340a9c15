#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "bundleseg/error.hpp"
#include "bundleseg/nifti_io.hpp"
#include "bundleseg/resample.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace bundleseg;
using testutil::TempDir;

TEST_SUITE("volume") {

TEST_CASE("grid world mapping inverts") {
  VoxelGrid g({10, 12, 7}, {0.78, 0.78, 2.22}, {-3.0, 4.5, 10.0});
  const Vec3 w = g.to_world(3, 5, 6);
  CHECK(w[0] == doctest::Approx(-3.0 + 3 * 0.78));
  CHECK(w[2] == doctest::Approx(10.0 + 6 * 2.22));
  const Vec3 v = g.to_voxel(w);
  CHECK(v[0] == doctest::Approx(3));
  CHECK(v[1] == doctest::Approx(5));
  CHECK(v[2] == doctest::Approx(6));
  CHECK(g.index(1, 0, 0) == 1);
  CHECK(g.index(0, 1, 0) == 10);
  CHECK(g.index(0, 0, 1) == 120);
}

TEST_CASE("grid validation") {
  CHECK_THROWS_AS(VoxelGrid({0, 3, 3}, {1, 1, 1}).validate(), Error);
  CHECK_THROWS_AS(VoxelGrid({3, 3, 3}, {1, -1, 1}).validate(), Error);
  CHECK_NOTHROW(VoxelGrid({3, 3, 3}, {1, 1, 1}).validate());
}

TEST_CASE("scalar volume round trip") {
  TempDir dir("vol");
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-5, 5);
  ScalarVolume v(VoxelGrid({5, 4, 3}, {1.0, 1.0, 1.0}, {1.5, -2.0, 3.0}));
  for (auto& x : v.values) x = u(rng);
  for (const char* name : {"a.nii", "a.nii.gz"}) {
    save_volume(v, dir.path / name);
    const ScalarVolume back = load_scalar(dir.path / name);
    CHECK(same_grid(back.grid, v.grid));
    CHECK(back.values == v.values);
  }
}

TEST_CASE("peak volume round trip and frame count check") {
  TempDir dir("peaks");
  std::mt19937_64 rng(2);
  std::normal_distribution<float> n;
  PeakVolume p(VoxelGrid({4, 4, 2}, {0.78, 0.78, 2.22}));
  for (auto& x : p.peaks) x = n(rng);
  save_volume(p, dir.path / "p.nii.gz");
  const PeakVolume back = load_peaks(dir.path / "p.nii.gz");
  REQUIRE(back.peaks.size() == p.peaks.size());
  double worst = 0;
  for (std::size_t i = 0; i < p.peaks.size(); ++i) worst = std::max(worst, double(std::abs(back.peaks[i] - p.peaks[i])));
  CHECK(worst <= 1e-6);
  CHECK(back.grid.voxel_size[2] == doctest::Approx(2.22));

  Image4D seven(VoxelGrid({2, 2, 2}, {1, 1, 1}), 7);
  write_nifti(seven, dir.path / "seven.nii");
  CHECK_THROWS_AS(load_peaks(dir.path / "seven.nii"), Error);
}

TEST_CASE("mask set round trip keeps names, validity and exact values") {
  TempDir dir("masks");
  std::mt19937_64 rng(3);
  BundleMaskSet m(VoxelGrid({6, 5, 4}, {1, 1, 1}), {"CC_Body", "Fornix", "L_ILF"});
  std::bernoulli_distribution bit(0.3);
  for (auto& x : m.data) x = bit(rng) ? 1.0f : 0.0f;
  m.valid[2] = 0;
  save_volume(m, dir.path / "bundles.nii.gz");
  CHECK(std::filesystem::exists(dir.path / "bundles.labels.json"));
  const BundleMaskSet back = load_masks(dir.path / "bundles.nii.gz", 3);
  CHECK(back.channels == m.channels);
  CHECK(back.valid == m.valid);
  CHECK(back.data == m.data);
  CHECK_THROWS_AS(load_masks(dir.path / "bundles.nii.gz", 4), Error);
}

TEST_CASE("io errors") {
  TempDir dir("err");
  CHECK_THROWS_AS(load_scalar(dir.path / "missing.nii"), Error);
  {
    std::ofstream junk(dir.path / "junk.nii", std::ios::binary);
    junk << "not a nifti header";
  }
  CHECK_THROWS_AS(load_scalar(dir.path / "junk.nii"), Error);
  ScalarVolume empty;
  empty.grid.shape = {0, 1, 1};
  CHECK_THROWS_AS(save_volume(empty, dir.path / "empty.nii"), Error);
  CHECK_FALSE(std::filesystem::exists(dir.path / "empty.nii"));
}

TEST_CASE("resampled grid keeps the physical extent") {
  const VoxelGrid native({256, 256, 54}, {0.78, 0.78, 2.22});
  const VoxelGrid iso = resampled_grid(native, {1, 1, 1});
  CHECK(iso.shape[0] == static_cast<int>(std::ceil(256 * 0.78)));
  CHECK(iso.shape[2] == static_cast<int>(std::ceil(54 * 2.22)));
  const VoxelGrid same = resampled_grid(native, native.voxel_size);
  CHECK(same == native);
}

TEST_CASE("resampling to the source grid is the identity") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(0, 1);
  ScalarVolume v(VoxelGrid({7, 6, 5}, {1.5, 1.5, 2.0}));
  for (auto& x : v.values) x = u(rng);
  for (auto mode : {Interpolation::nearest, Interpolation::cubic}) {
    const ScalarVolume r = resample(v, v.grid.voxel_size, mode);
    REQUIRE(r.values.size() == v.values.size());
    double worst = 0;
    for (std::size_t i = 0; i < v.values.size(); ++i) worst = std::max(worst, double(std::abs(r.values[i] - v.values[i])));
    CHECK(worst <= (mode == Interpolation::nearest ? 1e-9 : 1e-6));
  }
}

TEST_CASE("nearest resampling only uses input values") {
  std::mt19937_64 rng(5);
  BundleMaskSet m(VoxelGrid({9, 8, 5}, {0.78, 0.78, 2.22}), {"a", "b"});
  std::bernoulli_distribution bit(0.4);
  for (auto& x : m.data) x = bit(rng) ? 1.0f : 0.0f;
  for (Vec3 t : {Vec3{1, 1, 1}, Vec3{0.5, 0.7, 3.1}, Vec3{2, 2, 2}}) {
    const BundleMaskSet r = resample(m, t, Interpolation::nearest);
    CHECK(r.is_binary());
    CHECK(r.channels == m.channels);
  }
  ScalarVolume levels(VoxelGrid({5, 5, 5}, {2, 2, 2}));
  for (std::size_t i = 0; i < levels.values.size(); ++i) levels.values[i] = float(i % 7);
  const ScalarVolume up = resample(levels, {1, 1, 1}, Interpolation::nearest);
  for (float x : up.values) CHECK((x == std::floor(x) && x >= 0 && x <= 6));
}

TEST_CASE("cubic resampling of a constant is constant") {
  ScalarVolume c(VoxelGrid({6, 6, 4}, {0.78, 0.78, 2.22}), 0.375f);
  const ScalarVolume r = resample(c, {1, 1, 1}, Interpolation::cubic);
  for (float x : r.values) CHECK(std::abs(x - 0.375f) <= 1e-6);
}

TEST_CASE("cubic resampling reproduces a linear ramp away from borders") {
  // Catmull-Rom interpolates linear data exactly when all four taps are inside
  ScalarVolume ramp(VoxelGrid({12, 3, 3}, {2, 2, 2}));
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < 3; ++j)
      for (int i = 0; i < 12; ++i) ramp.at(i, j, k) = float(0.5 * i);
  const ScalarVolume r = resample(ramp, {1, 2, 2}, Interpolation::cubic);
  for (int i = 4; i < r.grid.shape[0] - 4; ++i) {
    const double x = (r.grid.origin[0] + i * 1.0 - ramp.grid.origin[0]) / 2.0;
    CHECK(r.at(i, 1, 1) == doctest::Approx(0.5 * x).epsilon(1e-5));
  }
}

TEST_CASE("pad to multiple of 16") {
  Slice2D s(200, 200, 2, 1.0f);
  auto [p, rec] = pad_to_multiple(s, 16);
  CHECK(p.height == 208);
  CHECK(p.width == 208);
  CHECK(rec.top == 4);
  CHECK(rec.left == 4);
  CHECK(p.at(0, 0, 0) == 0.0f);
  CHECK(p.at(1, 4, 4) == 1.0f);

  Slice2D exact(208, 208, 1, 1.0f);
  auto [q, rec2] = pad_to_multiple(exact, 16);
  CHECK(q == exact);
  CHECK(rec2.empty_pad(208, 208));
}

TEST_CASE("crop inverts pad for every shape up to 64") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> u(-1, 1);
  for (int h = 1; h <= 64; ++h) {
    for (int w = 1; w <= 64; w += 7) {
      Slice2D s(h, w, 2);
      for (auto& x : s.data) x = u(rng);
      auto [p, rec] = pad_to_multiple(s, 16);
      CHECK(p.height % 16 == 0);
      CHECK(p.height - h < 16);
      CHECK(p.height - h - 2 * rec.top <= 1);
      CHECK(crop(p, rec) == s);
    }
  }
}

}  // TEST_SUITE
