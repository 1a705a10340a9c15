#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "bundleseg/volume.hpp"

namespace bundleseg {

struct MergeRule {
  std::string target;
  std::vector<std::string> sources;
};

struct BundleCatalog {
  std::vector<std::string> expert_16;
  std::vector<std::string> tractseg_44;
  /// Bundles the comparison method (TractSeg) can produce after merging.
  std::vector<std::string> comparison_catalog;
  std::vector<MergeRule> merge_rules;

  /// expert_16 followed by tractseg_44.
  std::vector<std::string> merged_catalog_60() const;
  /// Sizes, name uniqueness and one-rule-per-source.
  void validate() const;
};

/// Built-in catalog; the same content ships as data/bundles.json.
const BundleCatalog& default_catalog();
BundleCatalog load_catalog(const std::filesystem::path& json_path);
void save_catalog(const BundleCatalog& catalog, const std::filesystem::path& json_path);

/// Each rule's target becomes the voxelwise OR of its sources; channels not
/// used as a source pass through unchanged. Target validity is the OR of the
/// source flags. Output order: rule targets, then pass-through channels.
BundleMaskSet merge_tractseg_masks(const BundleMaskSet& tractseg, const std::vector<MergeRule>& rules);

/// 60-channel set: expert channels (validity kept) then the 44 appended
/// channels in catalog order, each invalid when entirely empty.
BundleMaskSet assemble_60(const BundleMaskSet& expert, const BundleMaskSet& tractseg,
                          const BundleCatalog& catalog = default_catalog());

struct ExclusionReport {
  /// (subject, bundle) pairs whose reference is missing or invalid.
  std::vector<std::pair<std::string, std::string>> missing;
  std::map<std::string, int> missing_count;
  /// Missing in more than `threshold` of subjects.
  std::set<std::string> cohort_excluded;
  /// Not producible by the comparison method.
  std::set<std::string> comparison_excluded;
};

/// A subject counts as missing a bundle when its reference set lacks the
/// channel, flags it invalid, or the channel is entirely empty.
ExclusionReport exclusion_filter(const std::map<std::string, BundleMaskSet>& cohort_refs,
                                 const std::vector<std::string>& bundles,
                                 const std::vector<std::string>& comparison_catalog,
                                 double threshold = 1.0 / 3.0);

/// Marks missing bundles invalid in-place (empty channels become invalid).
void mark_missing_invalid(BundleMaskSet& masks);

}  // namespace bundleseg
