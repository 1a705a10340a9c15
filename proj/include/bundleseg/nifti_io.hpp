#pragma once

#include <filesystem>

#include "bundleseg/volume.hpp"

namespace bundleseg {

enum class StorageType { float32, uint8 };

/// Reads a NIfTI-1 single file (.nii or .nii.gz). Voxel sizes come from pixdim,
/// the origin from the sform (or qform offsets when no sform is set). Any
/// dim[4..7] are folded into the frame count.
Image4D read_nifti(const std::filesystem::path& path);

/// Writes a NIfTI-1 single file; gzip-compressed when the name ends in .gz.
void write_nifti(const Image4D& image, const std::filesystem::path& path,
                 StorageType storage = StorageType::float32);

ScalarVolume load_scalar(const std::filesystem::path& path);
/// Requires exactly nine frames.
PeakVolume load_peaks(const std::filesystem::path& path);
/// Channel names and validity come from the labels sidecar when present,
/// otherwise channels are named "0".."C-1" and all valid. If
/// `expected_channels` is positive the frame count must match it.
BundleMaskSet load_masks(const std::filesystem::path& path, int expected_channels = -1);

void save_volume(const ScalarVolume& v, const std::filesystem::path& path);
void save_volume(const PeakVolume& v, const std::filesystem::path& path);
/// Binary mask sets are stored as uint8, anything else as float32. Also writes
/// the labels sidecar.
void save_volume(const BundleMaskSet& v, const std::filesystem::path& path);

/// `dir/bundles.nii.gz` -> `dir/bundles.labels.json`.
std::filesystem::path labels_sidecar_path(const std::filesystem::path& image_path);

}  // namespace bundleseg
