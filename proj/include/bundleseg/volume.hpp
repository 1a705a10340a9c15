#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace bundleseg {

using Vec3 = std::array<double, 3>;
using Index3 = std::array<int, 3>;

/// Axis-aligned voxel lattice in millimetre world space (RAS+, no rotation).
/// World position of voxel (i,j,k) is origin + (i*sx, j*sy, k*sz).
struct VoxelGrid {
  Index3 shape{1, 1, 1};
  Vec3 voxel_size{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};

  VoxelGrid() = default;
  VoxelGrid(Index3 shape_, Vec3 voxel_size_, Vec3 origin_ = {0.0, 0.0, 0.0});

  /// Throws ErrorKind::invalid_argument if a dimension or voxel size is not positive.
  void validate() const;

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(shape[0]) * shape[1] * shape[2];
  }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * shape[1] + j) * shape[0] + i;
  }
  Vec3 to_world(double i, double j, double k) const {
    return {origin[0] + i * voxel_size[0], origin[1] + j * voxel_size[1],
            origin[2] + k * voxel_size[2]};
  }
  Vec3 to_voxel(const Vec3& world) const {
    return {(world[0] - origin[0]) / voxel_size[0], (world[1] - origin[1]) / voxel_size[1],
            (world[2] - origin[2]) / voxel_size[2]};
  }
  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < shape[0] && j < shape[1] && k < shape[2];
  }
  double voxel_volume() const { return voxel_size[0] * voxel_size[1] * voxel_size[2]; }

  bool operator==(const VoxelGrid&) const = default;
};

/// Same lattice up to a tolerance on the floating-point geometry.
bool same_grid(const VoxelGrid& a, const VoxelGrid& b, double tol = 1e-5);

/// Generic 4-D image: `frames` planes of the grid stored frame-major, x fastest
/// (the on-disk NIfTI order). Typed volumes below convert to and from it.
struct Image4D {
  VoxelGrid grid;
  int frames = 1;
  std::vector<float> data;

  Image4D() = default;
  Image4D(VoxelGrid g, int frames_);

  float* frame(int t) { return data.data() + static_cast<std::size_t>(t) * grid.voxel_count(); }
  const float* frame(int t) const {
    return data.data() + static_cast<std::size_t>(t) * grid.voxel_count();
  }
};

struct ScalarVolume {
  VoxelGrid grid;
  std::vector<float> values;

  ScalarVolume() = default;
  explicit ScalarVolume(VoxelGrid g, float fill = 0.0f);

  float& at(int i, int j, int k) { return values[grid.index(i, j, k)]; }
  float at(int i, int j, int k) const { return values[grid.index(i, j, k)]; }
};

inline constexpr int kPeakChannels = 9;

/// Up to three fibre-orientation peaks per voxel. Channel 3p+a is component a of peak p.
struct PeakVolume {
  VoxelGrid grid;
  std::vector<float> peaks;

  PeakVolume() = default;
  explicit PeakVolume(VoxelGrid g);

  float* channel(int c) { return peaks.data() + static_cast<std::size_t>(c) * grid.voxel_count(); }
  const float* channel(int c) const {
    return peaks.data() + static_cast<std::size_t>(c) * grid.voxel_count();
  }
  float& at(int i, int j, int k, int c) { return channel(c)[grid.index(i, j, k)]; }
  float at(int i, int j, int k, int c) const { return channel(c)[grid.index(i, j, k)]; }
};

/// Multi-channel bundle masks on one grid. `valid[c] == false` means the bundle
/// is missing for this subject and must not contribute to losses or metrics.
struct BundleMaskSet {
  VoxelGrid grid;
  std::vector<std::string> channels;
  std::vector<char> valid;
  std::vector<float> data;

  BundleMaskSet() = default;
  BundleMaskSet(VoxelGrid g, std::vector<std::string> names);

  int channel_count() const { return static_cast<int>(channels.size()); }
  /// Index of `name`, or -1.
  int find(const std::string& name) const;
  float* channel(int c) { return data.data() + static_cast<std::size_t>(c) * grid.voxel_count(); }
  const float* channel(int c) const {
    return data.data() + static_cast<std::size_t>(c) * grid.voxel_count();
  }
  float& at(int i, int j, int k, int c) { return channel(c)[grid.index(i, j, k)]; }
  float at(int i, int j, int k, int c) const { return channel(c)[grid.index(i, j, k)]; }

  /// Checks unique names and matching array sizes.
  void validate() const;
  bool is_binary() const;
};

Image4D to_image(const ScalarVolume& v);
Image4D to_image(const PeakVolume& v);
Image4D to_image(const BundleMaskSet& v);
ScalarVolume scalar_from_image(Image4D img);
PeakVolume peaks_from_image(Image4D img);
BundleMaskSet masks_from_image(Image4D img, std::vector<std::string> names,
                               std::vector<char> valid);

}  // namespace bundleseg
