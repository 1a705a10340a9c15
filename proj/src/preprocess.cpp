#include "bundleseg/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "bundleseg/error.hpp"

namespace bundleseg {

void SubjectRecord::validate() const {
  if (!same_grid(peaks.grid, masks.grid) || !same_grid(peaks.grid, brain_mask.grid)) {
    throw Error(ErrorKind::shape_mismatch,
                "subject " + subject_id + ": peaks, masks and brain mask grids differ");
  }
  masks.validate();
}

double max_peak_magnitude(const PeakVolume& peaks) {
  const std::size_t n = peaks.grid.voxel_count();
  double best = 0.0;
#pragma omp parallel for reduction(max : best)
  for (std::size_t v = 0; v < n; ++v) {
    for (int p = 0; p < 3; ++p) {
      double sq = 0.0;
      for (int a = 0; a < 3; ++a) {
        const double x = peaks.channel(3 * p + a)[v];
        if (!std::isnan(x)) sq += x * x;
      }
      best = std::max(best, std::sqrt(sq));
    }
  }
  return best;
}

PeakVolume normalize_peaks(PeakVolume peaks) {
  for (float& x : peaks.peaks) {
    if (std::isnan(x)) x = 0.0f;
  }
  const double peak_max = max_peak_magnitude(peaks);
  if (peak_max == 0.0) return peaks;
  const double scale = 1.0 / peak_max;
  for (float& x : peaks.peaks) x = static_cast<float>(x * scale);
  return peaks;
}

BundleMaskSet binarize_masks(BundleMaskSet masks, double threshold) {
  for (float& v : masks.data) v = v >= threshold ? 1.0f : 0.0f;
  return masks;
}

ScalarVolume brain_mask_from_peaks(const PeakVolume& peaks) {
  ScalarVolume mask(peaks.grid, 0.0f);
  const std::size_t n = peaks.grid.voxel_count();
  for (int c = 0; c < kPeakChannels; ++c) {
    const float* ch = peaks.channel(c);
    for (std::size_t v = 0; v < n; ++v) {
      if (ch[v] != 0.0f && !std::isnan(ch[v])) mask.values[v] = 1.0f;
    }
  }
  return mask;
}

std::vector<SliceSample> extract_slices(const SubjectRecord& subject) {
  subject.validate();
  const VoxelGrid& g = subject.peaks.grid;
  const int nx = g.shape[0], ny = g.shape[1], nz = g.shape[2];
  const int nc = subject.masks.channel_count();
  const std::size_t plane = static_cast<std::size_t>(nx) * ny;

  std::vector<SliceSample> out(nz);
#pragma omp parallel for
  for (int k = 0; k < nz; ++k) {
    SliceSample& s = out[k];
    s.subject_id = subject.subject_id;
    s.slice_index = k;
    s.input = Slice2D(ny, nx, kPeakChannels);
    s.target = Slice2D(ny, nx, nc);
    s.loss_mask = Slice2D(ny, nx, nc);
    const std::size_t base = static_cast<std::size_t>(k) * plane;
    for (int c = 0; c < kPeakChannels; ++c) {
      const float* src = subject.peaks.channel(c) + base;
      float* dst = s.input.data.data() + c * plane;
      for (std::size_t v = 0; v < plane; ++v) dst[v] = std::isnan(src[v]) ? 0.0f : src[v];
    }
    const float* brain = subject.brain_mask.values.data() + base;
    bool any_positive = false;
    for (int c = 0; c < nc; ++c) {
      const float* src = subject.masks.channel(c) + base;
      float* tgt = s.target.data.data() + c * plane;
      float* lm = s.loss_mask.data.data() + c * plane;
      const bool valid = subject.masks.valid[c] != 0;
      for (std::size_t v = 0; v < plane; ++v) {
        tgt[v] = src[v];
        lm[v] = valid && brain[v] != 0.0f ? 1.0f : 0.0f;
        if (valid && src[v] != 0.0f) any_positive = true;
      }
    }
    s.used_in_training = any_positive;
  }
  return out;
}

SubjectRecord preprocess_subject(std::string subject_id, const PeakVolume& peaks,
                                 const BundleMaskSet& masks, double target_voxel_mm,
                                 double threshold) {
  const Vec3 target{target_voxel_mm, target_voxel_mm, target_voxel_mm};
  SubjectRecord rec;
  rec.subject_id = std::move(subject_id);
  // NaN must not leak into the cubic kernel's neighbours.
  PeakVolume clean = peaks;
  for (float& x : clean.peaks) {
    if (std::isnan(x)) x = 0.0f;
  }
  rec.peaks = normalize_peaks(resample(clean, target, Interpolation::cubic));
  rec.masks = binarize_masks(resample(masks, target, Interpolation::nearest), threshold);
  rec.brain_mask = brain_mask_from_peaks(rec.peaks);
  rec.validate();
  return rec;
}

}  // namespace bundleseg
