#include "bundleseg/volume.hpp"

#include <cmath>
#include <set>

#include "bundleseg/error.hpp"

namespace bundleseg {

VoxelGrid::VoxelGrid(Index3 shape_, Vec3 voxel_size_, Vec3 origin_)
    : shape(shape_), voxel_size(voxel_size_), origin(origin_) {}

void VoxelGrid::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (shape[a] < 1) {
      throw Error(ErrorKind::invalid_argument, "grid dimension " + std::to_string(a) +
                                                   " must be >= 1, got " +
                                                   std::to_string(shape[a]));
    }
    if (!(voxel_size[a] > 0.0) || !std::isfinite(voxel_size[a])) {
      throw Error(ErrorKind::invalid_argument,
                  "voxel size along axis " + std::to_string(a) + " must be positive");
    }
  }
}

bool same_grid(const VoxelGrid& a, const VoxelGrid& b, double tol) {
  if (a.shape != b.shape) return false;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(a.voxel_size[i] - b.voxel_size[i]) > tol) return false;
    if (std::abs(a.origin[i] - b.origin[i]) > tol) return false;
  }
  return true;
}

Image4D::Image4D(VoxelGrid g, int frames_)
    : grid(g), frames(frames_), data(g.voxel_count() * static_cast<std::size_t>(frames_), 0.0f) {}

ScalarVolume::ScalarVolume(VoxelGrid g, float fill) : grid(g), values(g.voxel_count(), fill) {}

PeakVolume::PeakVolume(VoxelGrid g) : grid(g), peaks(g.voxel_count() * kPeakChannels, 0.0f) {}

BundleMaskSet::BundleMaskSet(VoxelGrid g, std::vector<std::string> names)
    : grid(g),
      channels(std::move(names)),
      valid(channels.size(), 1),
      data(g.voxel_count() * channels.size(), 0.0f) {}

int BundleMaskSet::find(const std::string& name) const {
  for (std::size_t c = 0; c < channels.size(); ++c) {
    if (channels[c] == name) return static_cast<int>(c);
  }
  return -1;
}

void BundleMaskSet::validate() const {
  std::set<std::string> seen;
  for (const auto& n : channels) {
    if (!seen.insert(n).second) {
      throw Error(ErrorKind::invalid_argument, "duplicate bundle channel name '" + n + "'");
    }
  }
  if (valid.size() != channels.size()) {
    throw Error(ErrorKind::shape_mismatch, "validity flag count differs from channel count");
  }
  if (data.size() != grid.voxel_count() * channels.size()) {
    throw Error(ErrorKind::shape_mismatch, "mask data size does not match grid x channels");
  }
}

bool BundleMaskSet::is_binary() const {
  for (float v : data) {
    if (v != 0.0f && v != 1.0f) return false;
  }
  return true;
}

Image4D to_image(const ScalarVolume& v) {
  Image4D img;
  img.grid = v.grid;
  img.frames = 1;
  img.data = v.values;
  return img;
}

Image4D to_image(const PeakVolume& v) {
  Image4D img;
  img.grid = v.grid;
  img.frames = kPeakChannels;
  img.data = v.peaks;
  return img;
}

Image4D to_image(const BundleMaskSet& v) {
  Image4D img;
  img.grid = v.grid;
  img.frames = v.channel_count();
  img.data = v.data;
  return img;
}

ScalarVolume scalar_from_image(Image4D img) {
  if (img.frames != 1) {
    throw Error(ErrorKind::shape_mismatch,
                "expected a 3-D volume, got " + std::to_string(img.frames) + " frames");
  }
  ScalarVolume v;
  v.grid = img.grid;
  v.values = std::move(img.data);
  return v;
}

PeakVolume peaks_from_image(Image4D img) {
  if (img.frames != kPeakChannels) {
    throw Error(ErrorKind::shape_mismatch, "peak volume needs 9 frames (3 peaks x 3 components), got " +
                                               std::to_string(img.frames));
  }
  PeakVolume v;
  v.grid = img.grid;
  v.peaks = std::move(img.data);
  return v;
}

BundleMaskSet masks_from_image(Image4D img, std::vector<std::string> names,
                               std::vector<char> valid) {
  if (static_cast<int>(names.size()) != img.frames) {
    throw Error(ErrorKind::shape_mismatch, "mask image has " + std::to_string(img.frames) +
                                               " frames but " + std::to_string(names.size()) +
                                               " channel names");
  }
  BundleMaskSet m;
  m.grid = img.grid;
  m.channels = std::move(names);
  m.valid = valid.empty() ? std::vector<char>(m.channels.size(), 1) : std::move(valid);
  m.data = std::move(img.data);
  m.validate();
  return m;
}

}  // namespace bundleseg
