#include "bundleseg/resample.hpp"

#include <algorithm>
#include <cmath>

#include "bundleseg/error.hpp"

namespace bundleseg {
namespace {

// Catmull-Rom weights for taps at offsets -1, 0, 1, 2 from floor(u).
std::array<double, 4> catmull_rom_weights(double t) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  return {0.5 * (-t3 + 2.0 * t2 - t), 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0), 0.5 * (-3.0 * t3 + 4.0 * t2 + t),
          0.5 * (t3 - t2)};
}

struct AxisTaps {
  std::vector<std::array<int, 4>> index;
  std::vector<std::array<double, 4>> weight;
};

// Continuous source index of output voxel m along one axis.
double source_coordinate(const VoxelGrid& src, const VoxelGrid& dst, int axis, int m) {
  const double offset = (dst.origin[axis] - src.origin[axis]) / src.voxel_size[axis];
  return offset + m * (dst.voxel_size[axis] / src.voxel_size[axis]);
}

AxisTaps cubic_taps(const VoxelGrid& src, const VoxelGrid& dst, int axis) {
  const int n_in = src.shape[axis];
  const int n_out = dst.shape[axis];
  AxisTaps taps;
  taps.index.resize(n_out);
  taps.weight.resize(n_out);
  for (int m = 0; m < n_out; ++m) {
    const double u = source_coordinate(src, dst, axis, m);
    const double base = std::floor(u);
    const auto w = catmull_rom_weights(u - base);
    for (int t = 0; t < 4; ++t) {
      const int idx = static_cast<int>(base) - 1 + t;
      taps.index[m][t] = std::clamp(idx, 0, n_in - 1);
      taps.weight[m][t] = w[t];
    }
  }
  return taps;
}

std::vector<int> nearest_taps(const VoxelGrid& src, const VoxelGrid& dst, int axis) {
  std::vector<int> out(dst.shape[axis]);
  for (int m = 0; m < dst.shape[axis]; ++m) {
    const double u = source_coordinate(src, dst, axis, m);
    out[m] = std::clamp(static_cast<int>(std::floor(u + 0.5)), 0, src.shape[axis] - 1);
  }
  return out;
}

void resample_frame_nearest(const float* in, const VoxelGrid& src, float* out, const VoxelGrid& dst) {
  const auto ix = nearest_taps(src, dst, 0);
  const auto iy = nearest_taps(src, dst, 1);
  const auto iz = nearest_taps(src, dst, 2);
#pragma omp parallel for
  for (int k = 0; k < dst.shape[2]; ++k) {
    for (int j = 0; j < dst.shape[1]; ++j) {
      for (int i = 0; i < dst.shape[0]; ++i) {
        out[dst.index(i, j, k)] = in[src.index(ix[i], iy[j], iz[k])];
      }
    }
  }
}

// Three separable passes: x, then y, then z.
void resample_frame_cubic(const float* in, const VoxelGrid& src, float* out, const VoxelGrid& dst) {
  const auto tx = cubic_taps(src, dst, 0);
  const auto ty = cubic_taps(src, dst, 1);
  const auto tz = cubic_taps(src, dst, 2);
  const int nx = dst.shape[0], ny = dst.shape[1], nz = dst.shape[2];
  const int sy = src.shape[1], sz = src.shape[2];

  std::vector<double> pass_x(static_cast<std::size_t>(nx) * sy * sz);
#pragma omp parallel for
  for (int k = 0; k < sz; ++k) {
    for (int j = 0; j < sy; ++j) {
      const float* row = in + src.index(0, j, k);
      double* dst_row = pass_x.data() + (static_cast<std::size_t>(k) * sy + j) * nx;
      for (int i = 0; i < nx; ++i) {
        double acc = 0.0;
        for (int t = 0; t < 4; ++t) acc += tx.weight[i][t] * row[tx.index[i][t]];
        dst_row[i] = acc;
      }
    }
  }
  std::vector<double> pass_y(static_cast<std::size_t>(nx) * ny * sz);
#pragma omp parallel for
  for (int k = 0; k < sz; ++k) {
    for (int j = 0; j < ny; ++j) {
      double* dst_row = pass_y.data() + (static_cast<std::size_t>(k) * ny + j) * nx;
      for (int i = 0; i < nx; ++i) dst_row[i] = 0.0;
      for (int t = 0; t < 4; ++t) {
        const double w = ty.weight[j][t];
        const double* src_row = pass_x.data() + (static_cast<std::size_t>(k) * sy + ty.index[j][t]) * nx;
        for (int i = 0; i < nx; ++i) dst_row[i] += w * src_row[i];
      }
    }
  }
#pragma omp parallel for
  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < ny; ++j) {
      float* dst_row = out + dst.index(0, j, k);
      for (int i = 0; i < nx; ++i) {
        double acc = 0.0;
        for (int t = 0; t < 4; ++t) {
          acc += tz.weight[k][t] *
                 pass_y[(static_cast<std::size_t>(tz.index[k][t]) * ny + j) * nx + i];
        }
        dst_row[i] = static_cast<float>(acc);
      }
    }
  }
}

}  // namespace

VoxelGrid resampled_grid(const VoxelGrid& source, const Vec3& target_voxel_size) {
  source.validate();
  VoxelGrid out;
  for (int a = 0; a < 3; ++a) {
    if (!(target_voxel_size[a] > 0.0)) {
      throw Error(ErrorKind::invalid_argument, "target voxel size must be positive");
    }
    const double extent = source.shape[a] * source.voxel_size[a];
    // Guard against 200*1.0/1.0 landing a hair above an integer.
    const double cells = extent / target_voxel_size[a];
    out.shape[a] = std::max(1, static_cast<int>(std::ceil(cells - 1e-9)));
    out.voxel_size[a] = target_voxel_size[a];
    out.origin[a] = source.origin[a] - 0.5 * source.voxel_size[a] + 0.5 * target_voxel_size[a];
    if (target_voxel_size[a] == source.voxel_size[a]) out.origin[a] = source.origin[a];
  }
  return out;
}

Image4D resample(const Image4D& image, const Vec3& target_voxel_size, Interpolation mode) {
  if (image.frames < 1 || image.data.size() != image.grid.voxel_count() * image.frames) {
    throw Error(ErrorKind::invalid_argument, "cannot resample a degenerate image");
  }
  Image4D out(resampled_grid(image.grid, target_voxel_size), image.frames);
  for (int t = 0; t < image.frames; ++t) {
    if (mode == Interpolation::nearest) {
      resample_frame_nearest(image.frame(t), image.grid, out.frame(t), out.grid);
    } else {
      resample_frame_cubic(image.frame(t), image.grid, out.frame(t), out.grid);
    }
  }
  return out;
}

ScalarVolume resample(const ScalarVolume& v, const Vec3& target_voxel_size, Interpolation mode) {
  return scalar_from_image(resample(to_image(v), target_voxel_size, mode));
}

PeakVolume resample(const PeakVolume& v, const Vec3& target_voxel_size, Interpolation mode) {
  return peaks_from_image(resample(to_image(v), target_voxel_size, mode));
}

BundleMaskSet resample(const BundleMaskSet& v, const Vec3& target_voxel_size, Interpolation mode) {
  return masks_from_image(resample(to_image(v), target_voxel_size, mode), v.channels, v.valid);
}

std::pair<Slice2D, CropRecord> pad_to_multiple(const Slice2D& slice, int multiple) {
  if (multiple < 1) throw Error(ErrorKind::invalid_argument, "pad multiple must be >= 1");
  const int ph = (slice.height + multiple - 1) / multiple * multiple;
  const int pw = (slice.width + multiple - 1) / multiple * multiple;
  CropRecord rec;
  rec.top = (ph - slice.height) / 2;
  rec.left = (pw - slice.width) / 2;
  rec.height = slice.height;
  rec.width = slice.width;
  if (ph == slice.height && pw == slice.width) return {slice, rec};
  Slice2D out(ph, pw, slice.channels);
  for (int c = 0; c < slice.channels; ++c) {
    for (int y = 0; y < slice.height; ++y) {
      const float* src = &slice.data[(static_cast<std::size_t>(c) * slice.height + y) * slice.width];
      std::copy(src, src + slice.width, &out.at(c, y + rec.top, rec.left));
    }
  }
  return {std::move(out), rec};
}

Slice2D crop(const Slice2D& padded, const CropRecord& record) {
  if (record.top + record.height > padded.height || record.left + record.width > padded.width) {
    throw Error(ErrorKind::shape_mismatch, "crop record does not fit the padded slice");
  }
  if (record.empty_pad(padded.height, padded.width)) return padded;
  Slice2D out(record.height, record.width, padded.channels);
  for (int c = 0; c < padded.channels; ++c) {
    for (int y = 0; y < record.height; ++y) {
      const float* src = &padded.data[(static_cast<std::size_t>(c) * padded.height + y + record.top) *
                                          padded.width +
                                      record.left];
      std::copy(src, src + record.width, &out.at(c, y, 0));
    }
  }
  return out;
}

}  // namespace bundleseg
