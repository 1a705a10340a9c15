#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "bundleseg/metrics.hpp"
#include "bundleseg/volume.hpp"

namespace bundleseg {

/// Ordered polyline in millimetres; at least two points, no zero-length segments.
struct Streamline {
  std::vector<Vec3> points;

  void validate() const;
};

double streamline_length(const Streamline& s);
/// length / endpoint distance (>= 1). Empty for closed loops.
std::optional<double> streamline_curl(const Streamline& s);

/// Positive voxel count times voxel volume, mm^3.
double mask_volume(const MaskView& mask);
/// Area of voxel faces separating foreground from background or the grid
/// boundary, mm^2.
double mask_surface_area(const MaskView& mask);

struct BundleShape {
  double surface_area = 0.0;
  double volume = 0.0;
  double mean_length = 0.0;
  std::optional<double> curl;
};

/// Throws ErrorKind::invalid_argument on an empty streamline set.
BundleShape bundle_shape(const MaskView& mask, const std::vector<Streamline>& streamlines);

/// Plain text: one "x y z" point per line, streamlines separated by blank lines.
std::vector<Streamline> read_streamlines(const std::filesystem::path& path);
void write_streamlines(const std::filesystem::path& path, const std::vector<Streamline>& streamlines);

inline const std::vector<std::string>& shape_metric_names() {
  static const std::vector<std::string> names{"surface_area", "volume", "mean_length", "curl"};
  return names;
}

}  // namespace bundleseg
