#pragma once

#include <vector>

#include "bundleseg/volume.hpp"

namespace bundleseg {

enum class Interpolation { nearest, cubic };

/// Grid covering the same physical extent as `source` at the new voxel size.
/// shape = ceil(n * s / t); the low edge of the first voxel is kept fixed.
VoxelGrid resampled_grid(const VoxelGrid& source, const Vec3& target_voxel_size);

/// Frame-wise resampling onto resampled_grid(). Cubic mode is separable
/// Catmull-Rom with clamped borders; nearest picks the closest input centre.
Image4D resample(const Image4D& image, const Vec3& target_voxel_size, Interpolation mode);

ScalarVolume resample(const ScalarVolume& v, const Vec3& target_voxel_size, Interpolation mode);
PeakVolume resample(const PeakVolume& v, const Vec3& target_voxel_size, Interpolation mode);
BundleMaskSet resample(const BundleMaskSet& v, const Vec3& target_voxel_size,
                       Interpolation mode);

/// Channel-major 2-D multi-channel array: element (c, y, x) at (c*height + y)*width + x.
struct Slice2D {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  Slice2D() = default;
  Slice2D(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  bool operator==(const Slice2D&) const = default;
};

struct CropRecord {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;

  bool empty_pad(int padded_h, int padded_w) const {
    return padded_h == height && padded_w == width;
  }
};

/// Zero-pads H and W up to the next multiple; odd remainders go to the high side.
std::pair<Slice2D, CropRecord> pad_to_multiple(const Slice2D& slice, int multiple);
Slice2D crop(const Slice2D& padded, const CropRecord& record);

}  // namespace bundleseg
