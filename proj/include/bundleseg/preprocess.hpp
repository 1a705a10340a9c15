#pragma once

#include <string>
#include <vector>

#include "bundleseg/resample.hpp"
#include "bundleseg/volume.hpp"

namespace bundleseg {

struct SubjectRecord {
  std::string subject_id;
  PeakVolume peaks;
  BundleMaskSet masks;
  ScalarVolume brain_mask;

  /// Throws ErrorKind::shape_mismatch if the three volumes do not share a grid.
  void validate() const;
};

/// One axial slice. Rows run along y, columns along x (height = ny, width = nx).
struct SliceSample {
  std::string subject_id;
  int slice_index = 0;
  Slice2D input;      // 9 channels
  Slice2D target;     // C channels, {0,1}
  Slice2D loss_mask;  // C channels, {0,1}
  bool used_in_training = false;
};

/// Zeroes NaN components, then scales every component by the inverse of the
/// largest peak norm found anywhere in the volume.
PeakVolume normalize_peaks(PeakVolume peaks);

/// Largest norm over all voxels and all three peaks.
double max_peak_magnitude(const PeakVolume& peaks);

/// value >= threshold -> 1, else 0. Validity flags are left alone.
BundleMaskSet binarize_masks(BundleMaskSet masks, double threshold = 0.5);

/// Voxels where any of the three peaks has non-zero length.
ScalarVolume brain_mask_from_peaks(const PeakVolume& peaks);

/// One sample per axial index in order. A slice is training-eligible iff some
/// valid channel has a positive voxel in it.
std::vector<SliceSample> extract_slices(const SubjectRecord& subject);

/// Resampling to isotropic voxels (cubic for peaks, nearest for masks), NaN
/// zeroing, normalisation and binarisation in one call.
SubjectRecord preprocess_subject(std::string subject_id, const PeakVolume& peaks,
                                 const BundleMaskSet& masks, double target_voxel_mm = 1.0,
                                 double threshold = 0.5);

}  // namespace bundleseg
