#include <random>

#include "bundleseg/error.hpp"
#include "bundleseg/metrics.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace bundleseg;

namespace {

ScalarVolume mask_from(const VoxelGrid& g, const oracle::Voxels& vox) {
  ScalarVolume v(g);
  for (const auto& p : vox) v.at(p[0], p[1], p[2]) = 1.0f;
  return v;
}

void check_same(const std::optional<double>& a, const std::optional<double>& b) {
  REQUIRE(a.has_value() == b.has_value());
  if (a) CHECK(*a == *b);
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("worked examples") {
  const VoxelGrid g({4, 4, 4}, {1, 1, 1});
  // |P| = 4, |G| = 6, |P n G| = 3
  const auto P = mask_from(g, {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 3, 3}});
  const auto G = mask_from(g, {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {0, 1, 0}, {1, 1, 0}, {2, 1, 0}});
  CHECK(*dice(MaskView::of(P), MaskView::of(G)) == doctest::Approx(0.6));
  CHECK(*volume_overlap(MaskView::of(P), MaskView::of(G)) == doctest::Approx(0.5));
  CHECK(*volume_overreach(MaskView::of(P), MaskView::of(G)) == doctest::Approx(1.0 / 6.0));

  const auto far = mask_from(g, {{0, 0, 3}, {1, 0, 3}, {2, 0, 3}, {0, 1, 3}, {1, 1, 3}, {2, 1, 3}});
  CHECK(*volume_overreach(MaskView::of(far), MaskView::of(G)) == doctest::Approx(1.0));
  CHECK(*dice(MaskView::of(far), MaskView::of(G)) == 0.0);
  CHECK(*volume_overlap(MaskView::of(far), MaskView::of(G)) == 0.0);

  const ScalarVolume empty(g);
  CHECK_FALSE(dice(MaskView::of(empty), MaskView::of(empty)).has_value());
  CHECK(*volume_overreach(MaskView::of(empty), MaskView::of(G)) == 0.0);
  CHECK_FALSE(volume_overlap(MaskView::of(P), MaskView::of(empty)).has_value());
  CHECK_FALSE(adjacency(MaskView::of(empty), MaskView::of(G)).has_value());
}

TEST_CASE("adjacency uses 26-connectivity") {
  const VoxelGrid g({6, 6, 6}, {1, 1, 1});
  const auto G = mask_from(g, {{2, 2, 2}});
  CHECK(*adjacency(MaskView::of(mask_from(g, {{3, 3, 3}})), MaskView::of(G)) == 1.0);
  CHECK(*adjacency(MaskView::of(mask_from(g, {{4, 2, 2}})), MaskView::of(G)) == 0.0);
  CHECK(*adjacency(MaskView::of(mask_from(g, {{4, 2, 2}})), MaskView::of(G), 2) == 1.0);
  CHECK(*adjacency(MaskView::of(G), MaskView::of(G)) == 1.0);
}

TEST_CASE("identity gives (1, 1, 0, 1)") {
  std::mt19937_64 rng(1);
  const auto G = testutil::random_mask(VoxelGrid({6, 6, 6}, {1, 1, 1}), 0.3, rng);
  const auto r = compare_masks("s", "b", MaskView::of(G), MaskView::of(G));
  CHECK(*r.dice == 1.0);
  CHECK(*r.overlap == 1.0);
  CHECK(*r.overreach == 0.0);
  CHECK(*r.adjacency == 1.0);
}

TEST_CASE("brute-force equivalence on random masks") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> density(0.0, 0.6);
  const VoxelGrid g({6, 6, 6}, {1, 1, 1});
  for (int t = 0; t < 60; ++t) {
    const auto P = testutil::random_mask(g, t % 10 == 0 ? 0.0 : density(rng), rng);
    const auto G = testutil::random_mask(g, t % 7 == 0 ? 0.0 : density(rng), rng);
    const auto p = oracle::voxels_of(P), q = oracle::voxels_of(G);
    check_same(dice(MaskView::of(P), MaskView::of(G)), oracle::dice(p, q));
    check_same(dice(MaskView::of(G), MaskView::of(P)), oracle::dice(p, q));
    check_same(volume_overlap(MaskView::of(P), MaskView::of(G)), oracle::overlap(p, q));
    check_same(volume_overreach(MaskView::of(P), MaskView::of(G)), oracle::overreach(p, q));
    check_same(adjacency(MaskView::of(P), MaskView::of(G)), oracle::adjacency(p, q));
  }
}

TEST_CASE("grid mismatch is an error") {
  const ScalarVolume a(VoxelGrid({4, 4, 4}, {1, 1, 1})), b(VoxelGrid({4, 4, 5}, {1, 1, 1}));
  CHECK_THROWS_AS(dice(MaskView::of(a), MaskView::of(b)), Error);
}

TEST_CASE("cohort evaluation omits invalid references and keeps undefined values") {
  const VoxelGrid g({4, 4, 4}, {1, 1, 1});
  std::map<std::string, BundleMaskSet> refs, preds;
  for (const char* id : {"s1", "s2"}) {
    BundleMaskSet r(g, {"CC_Body", "Fornix"});
    r.at(1, 1, 1, 0) = 1;
    r.at(2, 2, 2, 1) = 1;
    refs.emplace(id, r);
    preds.emplace(id, r);
  }
  refs.at("s2").valid[1] = 0;
  BundleMaskSet empty_pred(g, {"CC_Body", "Fornix"});
  preds.at("s1") = empty_pred;
  const auto rows = evaluate_cohort(preds, refs, {"CC_Body", "Fornix"});
  CHECK(rows.size() == 3);
  for (const auto& r : rows) {
    CHECK_FALSE((r.subject == "s2" && r.bundle == "Fornix"));
    if (r.subject == "s1") {
      CHECK(*r.dice == 0.0);
      CHECK_FALSE(r.adjacency.has_value());
    } else {
      CHECK(*r.dice == 1.0);
    }
  }
  auto fewer = preds;
  fewer.erase("s2");
  CHECK_THROWS_AS(evaluate_cohort(fewer, refs, {"CC_Body"}), Error);
}

TEST_CASE("comparison CSV writes empty cells for undefined values") {
  testutil::TempDir dir("csv");
  std::vector<MaskComparison> rows{{"s1", "CC_Body", 0.5, 0.25, 1.5, std::nullopt},
                                   {"s2", "Fornix", std::nullopt, std::nullopt, std::nullopt, 1.0}};
  write_comparisons_csv(dir.path / "m.csv", rows);
  const auto back = read_comparisons_csv(dir.path / "m.csv");
  REQUIRE(back.size() == 2);
  CHECK(*back[0].dice == 0.5);
  CHECK_FALSE(back[0].adjacency.has_value());
  CHECK_FALSE(back[1].dice.has_value());
  CHECK(*back[1].adjacency == 1.0);
}

}  // TEST_SUITE
