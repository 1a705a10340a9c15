#include "cohort.hpp"

#include <algorithm>

#include "bundleseg/error.hpp"
#include "bundleseg/nifti_io.hpp"

namespace bundleseg::cli {

void require_directory(const fs::path& p, const std::string& what) {
  if (p.empty()) throw Error(ErrorKind::config, what + " is not set");
  if (!fs::is_directory(p)) throw Error(ErrorKind::io, what + " " + p.string() + " is not a directory");
}

std::vector<std::string> list_subjects(const fs::path& root, const std::string& file) {
  require_directory(root, "directory");
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / file)) ids.push_back(entry.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

SubjectRecord load_subject(const fs::path& dir, const std::string& id, double threshold, bool require_masks) {
  SubjectRecord s;
  s.subject_id = id;
  s.peaks = normalize_peaks(load_peaks(dir / kPeaksFile));
  if (fs::exists(dir / kBundlesFile)) {
    s.masks = binarize_masks(load_masks(dir / kBundlesFile), threshold);
  } else if (require_masks) {
    throw Error(ErrorKind::io, "missing " + (dir / kBundlesFile).string());
  } else {
    s.masks = BundleMaskSet(s.peaks.grid, {});
  }
  if (fs::exists(dir / kBrainFile)) {
    s.brain_mask = load_scalar(dir / kBrainFile);
  } else {
    s.brain_mask = brain_mask_from_peaks(s.peaks);
  }
  s.validate();
  return s;
}

void save_subject(const SubjectRecord& s, const fs::path& dir) {
  fs::create_directories(dir);
  save_volume(s.peaks, dir / kPeaksFile);
  save_volume(s.masks, dir / kBundlesFile);
  save_volume(s.brain_mask, dir / kBrainFile);
}

std::map<std::string, BundleMaskSet> load_mask_sets(const fs::path& root) {
  std::map<std::string, BundleMaskSet> out;
  for (const auto& id : list_subjects(root, kBundlesFile)) out.emplace(id, load_masks(root / id / kBundlesFile));
  return out;
}

}  // namespace bundleseg::cli
