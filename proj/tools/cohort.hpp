#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "bundleseg/preprocess.hpp"

namespace bundleseg::cli {

namespace fs = std::filesystem;

// <root>/<subject>/peaks.nii.gz
//                  bundles.nii.gz + bundles.labels.json
//                  brain_mask.nii.gz (optional)
//                  streamlines/<bundle>.txt (optional)
inline const char* kPeaksFile = "peaks.nii.gz";
inline const char* kBundlesFile = "bundles.nii.gz";
inline const char* kBrainFile = "brain_mask.nii.gz";
inline const char* kStreamlineDir = "streamlines";

/// Sorted subject directory names under `root` holding `file`.
std::vector<std::string> list_subjects(const fs::path& root, const std::string& file);

/// Loads a subject already on the target grid. Peaks are normalised and masks
/// binarised again (both idempotent); a missing brain mask is derived from the
/// peaks. Masks are optional when `require_masks` is false.
SubjectRecord load_subject(const fs::path& dir, const std::string& id, double threshold,
                           bool require_masks = true);

void save_subject(const SubjectRecord& s, const fs::path& dir);

std::map<std::string, BundleMaskSet> load_mask_sets(const fs::path& root);

void require_directory(const fs::path& p, const std::string& what);

}  // namespace bundleseg::cli
