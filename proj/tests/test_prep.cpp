#include <cmath>
#include <limits>
#include <random>

#include "bundleseg/error.hpp"
#include "bundleseg/preprocess.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace bundleseg;

TEST_SUITE("prep") {

TEST_CASE("normalisation") {
  const VoxelGrid g({3, 3, 3}, {1, 1, 1});
  PeakVolume zero(g);
  CHECK(normalize_peaks(zero).peaks == zero.peaks);

  PeakVolume one(g);
  one.at(1, 1, 1, 2) = 2.0f;
  const auto n = normalize_peaks(one);
  CHECK(n.at(1, 1, 1, 2) == 1.0f);
  CHECK(max_peak_magnitude(n) == doctest::Approx(1.0));

  PeakVolume nan = one;
  nan.at(0, 0, 0, 4) = std::numeric_limits<float>::quiet_NaN();
  nan.at(0, 0, 0, 3) = 0.5f;
  const auto m = normalize_peaks(nan);
  CHECK(m.at(0, 0, 0, 4) == 0.0f);
  CHECK(m.at(0, 0, 0, 3) == 0.25f);
  for (float v : m.peaks) CHECK_FALSE(std::isnan(v));
}

TEST_CASE("normalisation is idempotent and bounded") {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n(0, 3);
  PeakVolume p(VoxelGrid({4, 5, 3}, {1, 1, 1}));
  for (auto& v : p.peaks) v = n(rng);
  const auto once = normalize_peaks(p);
  const auto twice = normalize_peaks(once);
  CHECK(max_peak_magnitude(once) == doctest::Approx(1.0));
  for (std::size_t i = 0; i < once.peaks.size(); ++i) CHECK(twice.peaks[i] == doctest::Approx(once.peaks[i]).epsilon(1e-6));
}

TEST_CASE("binarisation is inclusive at the threshold") {
  BundleMaskSet m(VoxelGrid({4, 1, 1}, {1, 1, 1}), {"A"});
  m.data = {0.5f, 0.49f, 1.0f, 0.0f};
  const auto b = binarize_masks(m);
  CHECK(b.data == std::vector<float>{1, 0, 1, 0});
  CHECK(binarize_masks(b).data == b.data);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(0, 1);
  BundleMaskSet r(VoxelGrid({6, 6, 6}, {1, 1, 1}), {"A", "B"});
  for (auto& v : r.data) v = u(rng);
  const auto rb = binarize_masks(r, 0.3);
  std::size_t above = 0, below = 0;
  for (float v : r.data) (v >= 0.3f ? above : below)++;
  std::size_t ones = 0;
  for (float v : rb.data) ones += v == 1.0f;
  CHECK(ones == above);
  CHECK(above + below == r.data.size());
  CHECK(rb.is_binary());
}

TEST_CASE("slice extraction") {
  const VoxelGrid g({5, 4, 7}, {1, 1, 1});
  SubjectRecord s;
  s.subject_id = "s";
  s.peaks = PeakVolume(g);
  s.masks = BundleMaskSet(g, {"A", "B"});
  s.brain_mask = ScalarVolume(g, 1.0f);
  s.peaks.at(2, 1, 3, 0) = 1.0f;
  s.masks.at(2, 1, 3, 0) = 1.0f;  // slice 3, valid channel
  s.masks.at(1, 1, 5, 1) = 1.0f;  // slice 5, invalid channel
  s.masks.valid[1] = 0;

  const auto slices = extract_slices(s);
  REQUIRE(slices.size() == 7);
  for (int k = 0; k < 7; ++k) {
    const auto& sl = slices[k];
    CHECK(sl.slice_index == k);
    CHECK(sl.input.channels == 9);
    CHECK(sl.input.height == 4);
    CHECK(sl.input.width == 5);
    CHECK(sl.target.channels == 2);
    CHECK(sl.used_in_training == (k == 3));
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 5; ++x) {
        CHECK(sl.loss_mask.at(1, y, x) == 0.0f);
        CHECK(sl.loss_mask.at(0, y, x) == 1.0f);
      }
  }
  CHECK(slices[3].input.at(0, 1, 2) == 1.0f);
  CHECK(slices[3].target.at(0, 1, 2) == 1.0f);
}

TEST_CASE("mismatched grids are rejected") {
  SubjectRecord s;
  s.peaks = PeakVolume(VoxelGrid({4, 4, 4}, {1, 1, 1}));
  s.masks = BundleMaskSet(VoxelGrid({4, 4, 5}, {1, 1, 1}), {"A"});
  s.brain_mask = ScalarVolume(VoxelGrid({4, 4, 4}, {1, 1, 1}));
  CHECK_THROWS_AS(s.validate(), Error);
  CHECK_THROWS_AS(extract_slices(s), Error);
}

TEST_CASE("preprocessing resamples to isotropic voxels") {
  const VoxelGrid g({10, 10, 5}, {1, 1, 2});
  PeakVolume p(g);
  for (int k = 0; k < 5; ++k)
    for (int j = 0; j < 10; ++j)
      for (int i = 0; i < 10; ++i) p.at(i, j, k, 2) = 4.0f;
  BundleMaskSet m(g, {"A"});
  m.at(5, 5, 2, 0) = 0.8f;
  const auto s = preprocess_subject("x", p, m, 1.0);
  CHECK(s.peaks.grid.voxel_size == Vec3{1, 1, 1});
  CHECK(s.masks.grid.shape == s.peaks.grid.shape);
  CHECK(s.peaks.grid.shape[2] == 10);
  CHECK(max_peak_magnitude(s.peaks) == doctest::Approx(1.0));
  CHECK(s.masks.is_binary());
}

}  // TEST_SUITE
