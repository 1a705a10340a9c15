#include <cmath>
#include <numbers>

#include "bundleseg/error.hpp"
#include "bundleseg/metrics.hpp"
#include "bundleseg/phantom.hpp"
#include "doctest.h"

using namespace bundleseg;
using namespace bundleseg::phantom;

namespace {

PhantomSpec straight_tube(double radius) {
  PhantomSpec spec;
  spec.grid = VoxelGrid({32, 32, 40}, {1, 1, 1});
  spec.bundles.push_back({"Tube", {{16, 16, 5}, {16, 16, 20}, {16, 16, 35}}, radius});
  spec.seed = 3;
  return spec;
}

}  // namespace

TEST_SUITE("phantom") {

TEST_CASE("straight tube volume and tangent") {
  const auto spec = straight_tube(3.0);
  const auto s = generate_subject(spec);
  CHECK_NOTHROW(s.validate());
  const double expected = std::numbers::pi * 9 * 30;
  const double vol = mask_volume(MaskView::of(s.masks, 0));
  CHECK(std::abs(vol - expected) / expected < 0.1);

  CHECK(s.masks.at(16, 16, 20, 0) == 1.0f);
  CHECK(s.peaks.at(16, 16, 20, 0) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(std::abs(s.peaks.at(16, 16, 20, 2)) == doctest::Approx(1.0).epsilon(1e-6));
  for (int c = 3; c < 9; ++c) CHECK(s.peaks.at(16, 16, 20, c) == 0.0f);

  // cross-sections are discrete disks
  for (int k = 8; k < 32; ++k) {
    int count = 0;
    for (int j = 0; j < 32; ++j)
      for (int i = 0; i < 32; ++i) count += s.masks.at(i, j, k, 0) != 0.0f;
    CHECK(std::abs(count - std::numbers::pi * 9) <= 2 * std::numbers::pi * 3);
  }
}

TEST_CASE("peaks inside bundles are unit vectors and normalisation keeps them") {
  const auto spec = default_spec(1);
  const auto s = generate_subject(spec);
  const auto n = normalize_peaks(s.peaks);
  const auto& g = s.peaks.grid;
  std::size_t inside = 0;
  for (std::size_t v = 0; v < g.voxel_count(); ++v) {
    bool in = false;
    for (int c = 0; c < s.masks.channel_count(); ++c) in |= s.masks.channel(c)[v] != 0.0f;
    if (!in) {
      if (s.brain_mask.values[v] == 0.0f)
        for (int c = 0; c < 9; ++c) CHECK(s.peaks.channel(c)[v] == 0.0f);
      continue;
    }
    ++inside;
    double norm = 0;
    for (int a = 0; a < 3; ++a) norm += double(s.peaks.channel(a)[v]) * s.peaks.channel(a)[v];
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-5));
    for (int c = 0; c < 9; ++c) CHECK(n.channel(c)[v] == doctest::Approx(s.peaks.channel(c)[v]).epsilon(1e-5));
  }
  CHECK(inside > 0);
  CHECK(s.masks.channel_count() == 3);
  for (std::size_t v = 0; v < g.voxel_count(); ++v)
    for (int c = 0; c < 3; ++c)
      if (s.masks.channel(c)[v] != 0.0f) CHECK(s.brain_mask.values[v] == 1.0f);
}

TEST_CASE("determinism") {
  const auto a = generate_subject(default_spec(5)), b = generate_subject(default_spec(5));
  CHECK(a.peaks.peaks == b.peaks.peaks);
  CHECK(a.masks.data == b.masks.data);
  CHECK(a.brain_mask.values == b.brain_mask.values);
  const auto c = generate_subject(default_spec(6));
  CHECK(a.peaks.peaks != c.peaks.peaks);

  CohortOptions opt;
  opt.n_subjects = 4;
  opt.seed = 2;
  const auto x = generate_cohort(default_spec(), opt), y = generate_cohort(default_spec(), opt);
  REQUIRE(x.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(x[i].record.subject_id == y[i].record.subject_id);
    CHECK(x[i].record.masks.data == y[i].record.masks.data);
    CHECK(x[i].record.peaks.peaks == y[i].record.peaks.peaks);
    for (const auto& v : x[i].record.masks.valid) CHECK(v == 1);
  }
  CHECK(x[0].record.subject_id == "sub-01");
  CHECK(x[0].record.masks.data != x[1].record.masks.data);
}

TEST_CASE("dropped bundles") {
  CohortOptions opt;
  opt.n_subjects = 5;
  opt.drop_probability["Fornix"] = 1.0;
  const auto cohort = generate_cohort(default_spec(), opt);
  std::map<std::string, BundleMaskSet> refs;
  for (const auto& m : cohort) {
    const int f = m.record.masks.find("Fornix");
    REQUIRE(f >= 0);
    CHECK(m.record.masks.valid[f] == 0);
    CHECK(std::all_of(m.record.masks.channel(f), m.record.masks.channel(f) + m.record.masks.grid.voxel_count(),
                      [](float v) { return v == 0.0f; }));
    refs.emplace(m.record.subject_id, m.record.masks);
  }
  const auto rows = evaluate_cohort(refs, refs, refs.begin()->second.channels);
  CHECK(rows.size() == 10);
  for (const auto& r : rows) CHECK(r.bundle != "Fornix");
}

TEST_CASE("streamlines") {
  const auto spec = straight_tube(3.0);
  const auto lines = generate_streamlines(spec, "Tube", 7, 0.0, 1);
  REQUIRE(lines.size() == 7);
  for (const auto& l : lines) {
    CHECK(l.points == lines[0].points);
    CHECK(*streamline_curl(l) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(streamline_length(l) == doctest::Approx(30.0).epsilon(1e-9));
  }
  CHECK(generate_streamlines(spec, "Tube", 2000, 0.5, 1).size() == 2000);
  const auto jittered = generate_streamlines(spec, "Tube", 50, 0.5, 1);
  const auto centre = sample_centerline(spec.bundles[0].control_points);
  double worst = 0;
  for (const auto& l : jittered)
    for (const auto& p : l.points) {
      double best = 1e9;
      for (const auto& q : centre) best = std::min(best, std::hypot(p[0] - q[0], p[1] - q[1], p[2] - q[2]));
      worst = std::max(worst, best);
    }
  CHECK(worst < 3 * 0.5 * 2);
  CHECK_THROWS_AS(generate_streamlines(spec, "Tube", 0, 0.0, 1), Error);
  CHECK_THROWS_AS(generate_streamlines(spec, "Nope", 1, 0.0, 1), Error);
}

TEST_CASE("spec validation") {
  auto thin = straight_tube(0.4);
  CHECK_THROWS_AS(thin.validate(), Error);
  auto outside = straight_tube(3.0);
  outside.bundles[0].control_points.push_back({100, 0, 0});
  CHECK_THROWS_AS(outside.validate(), Error);
  CHECK_NOTHROW(expert16_spec().validate());
  CHECK(expert16_spec().bundles.size() == 16);
  CHECK(default_spec().grid.shape == Index3{64, 64, 40});
}

}  // TEST_SUITE
