#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bundleseg/volume.hpp"

namespace bundleseg {

/// Read-only view of one binary mask channel on a grid. Any non-zero value
/// counts as foreground.
struct MaskView {
  VoxelGrid grid;
  std::span<const float> values;

  static MaskView of(const ScalarVolume& v) { return {v.grid, v.values}; }
  static MaskView of(const BundleMaskSet& m, int channel) {
    return {m.grid, {m.channel(channel), m.grid.voxel_count()}};
  }
};

struct OverlapCounts {
  std::size_t pred = 0;          // |P|
  std::size_t ref = 0;           // |G|
  std::size_t intersection = 0;  // |P ∩ G|
};

OverlapCounts count_overlap(const MaskView& pred, const MaskView& ref);

/// 2|P∩G| / (|P|+|G|); empty when both masks are empty.
std::optional<double> dice(const MaskView& pred, const MaskView& ref);
/// |P∩G| / |G|; empty when G is empty.
std::optional<double> volume_overlap(const MaskView& pred, const MaskView& ref);
/// |P \ G| / |G|; empty when G is empty.
std::optional<double> volume_overreach(const MaskView& pred, const MaskView& ref);
/// Fraction of predicted voxels inside the radius-r 26-connected dilation of G;
/// empty when P is empty.
std::optional<double> adjacency(const MaskView& pred, const MaskView& ref, int radius = 1);

struct MaskComparison {
  std::string subject;
  std::string bundle;
  std::optional<double> dice;
  std::optional<double> overlap;
  std::optional<double> overreach;
  std::optional<double> adjacency;
};

MaskComparison compare_masks(const std::string& subject, const std::string& bundle,
                             const MaskView& pred, const MaskView& ref, int adjacency_radius = 1);

/// One row per (subject, bundle) whose reference channel exists and is valid.
/// Bundles absent from a prediction set are an error; subjects must match.
std::vector<MaskComparison> evaluate_cohort(const std::map<std::string, BundleMaskSet>& preds,
                                            const std::map<std::string, BundleMaskSet>& refs,
                                            const std::vector<std::string>& bundles,
                                            int adjacency_radius = 1);

/// CSV with header subject,bundle,dice,overlap,overreach,adjacency.
/// Undefined metrics are written as empty cells.
void write_comparisons_csv(const std::filesystem::path& path,
                           const std::vector<MaskComparison>& rows);
std::vector<MaskComparison> read_comparisons_csv(const std::filesystem::path& path);

/// Metric names in CSV column order.
inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"dice", "overlap", "overreach", "adjacency"};
  return names;
}
std::optional<double> metric_value(const MaskComparison& row, const std::string& metric);

}  // namespace bundleseg
