#include "bundleseg/bundles.hpp"

#include <algorithm>
#include <fstream>

#include "bundleseg/error.hpp"
#include "json.hpp"

namespace bundleseg {
namespace {

// Keep in sync with data/bundles.json (checked by the registry tests).
constexpr const char* kDefaultCatalogJson = R"json({
  "expert_16": [
    "CC_Body", "CC_Splenium", "CC_Genu", "L_Cingulum", "R_Cingulum", "L_SLF", "R_SLF",
    "L_IFO", "R_IFO", "R_Pyramidal", "L_Pyramidal", "Fornix", "L_ILF", "R_ILF",
    "L_Uncinate", "R_Uncinate"
  ],
  "tractseg_44": [
    "AF_left", "AF_right", "ATR_left", "ATR_right", "CA", "CST_left", "CST_right",
    "FPT_left", "FPT_right", "ICP_left", "ICP_right", "MCP", "MLF_left", "MLF_right",
    "OR_left", "OR_right", "POPT_left", "POPT_right", "SCP_left", "SCP_right",
    "STR_left", "STR_right", "ST_FO_left", "ST_FO_right", "ST_PREF_left", "ST_PREF_right",
    "ST_PREC_left", "ST_PREC_right", "ST_PAR_left", "ST_PAR_right", "ST_OCC_left",
    "ST_OCC_right", "ST_POSTC_left", "ST_POSTC_right", "T_PREM_left", "T_PREM_right",
    "T_PREC_left", "T_PREC_right", "T_POSTC_left", "T_POSTC_right", "T_PAR_left",
    "T_PAR_right", "T_OCC_left", "T_OCC_right"
  ],
  "comparison_catalog": [
    "CC_Body", "CC_Splenium", "CC_Genu", "L_Cingulum", "R_Cingulum", "L_SLF", "R_SLF",
    "L_IFO", "R_IFO", "Fornix", "L_ILF", "R_ILF", "L_Uncinate", "R_Uncinate"
  ],
  "merge_rules": [
    {"target": "CC_Body", "sources": ["CC_3", "CC_4", "CC_5"]},
    {"target": "CC_Genu", "sources": ["CC_1", "CC_2"]},
    {"target": "CC_Splenium", "sources": ["CC_6", "CC_7"]},
    {"target": "L_SLF", "sources": ["SLF_I_left", "SLF_II_left", "SLF_III_left"]},
    {"target": "R_SLF", "sources": ["SLF_I_right", "SLF_II_right", "SLF_III_right"]},
    {"target": "L_Cingulum", "sources": ["CG_left"]},
    {"target": "R_Cingulum", "sources": ["CG_right"]},
    {"target": "L_IFO", "sources": ["IFO_left"]},
    {"target": "R_IFO", "sources": ["IFO_right"]},
    {"target": "Fornix", "sources": ["FX_left", "FX_right"]},
    {"target": "L_ILF", "sources": ["ILF_left"]},
    {"target": "R_ILF", "sources": ["ILF_right"]},
    {"target": "L_Uncinate", "sources": ["UF_left"]},
    {"target": "R_Uncinate", "sources": ["UF_right"]}
  ]
}
)json";

BundleCatalog catalog_from_json(const nlohmann::json& doc) {
  BundleCatalog c;
  try {
    c.expert_16 = doc.at("expert_16").get<std::vector<std::string>>();
    c.tractseg_44 = doc.at("tractseg_44").get<std::vector<std::string>>();
    c.comparison_catalog = doc.value("comparison_catalog", std::vector<std::string>{});
    for (const auto& r : doc.at("merge_rules")) {
      c.merge_rules.push_back({r.at("target").get<std::string>(),
                               r.at("sources").get<std::vector<std::string>>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, std::string("bundle catalog: ") + e.what());
  }
  c.validate();
  return c;
}

void require_unique(const std::vector<std::string>& names, const std::string& what) {
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (!seen.insert(n).second) throw Error(ErrorKind::config, what + ": duplicate name '" + n + "'");
  }
}

}  // namespace

std::vector<std::string> BundleCatalog::merged_catalog_60() const {
  std::vector<std::string> out = expert_16;
  out.insert(out.end(), tractseg_44.begin(), tractseg_44.end());
  return out;
}

void BundleCatalog::validate() const {
  if (expert_16.size() != 16) throw Error(ErrorKind::config, "expert catalog must list 16 bundles");
  if (tractseg_44.size() != 44) throw Error(ErrorKind::config, "appended catalog must list 44 bundles");
  require_unique(expert_16, "expert catalog");
  require_unique(tractseg_44, "appended catalog");
  require_unique(merged_catalog_60(), "60-bundle catalog");
  std::set<std::string> used;
  for (const auto& rule : merge_rules) {
    if (rule.sources.empty()) {
      throw Error(ErrorKind::config, "merge rule for '" + rule.target + "' has no sources");
    }
    for (const auto& s : rule.sources) {
      if (!used.insert(s).second) {
        throw Error(ErrorKind::config, "merge source '" + s + "' appears in more than one rule");
      }
    }
  }
}

const BundleCatalog& default_catalog() {
  static const BundleCatalog catalog = catalog_from_json(nlohmann::json::parse(kDefaultCatalogJson));
  return catalog;
}

BundleCatalog load_catalog(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + json_path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, json_path.string() + ": " + e.what());
  }
  return catalog_from_json(doc);
}

void save_catalog(const BundleCatalog& catalog, const std::filesystem::path& json_path) {
  nlohmann::json doc;
  doc["expert_16"] = catalog.expert_16;
  doc["tractseg_44"] = catalog.tractseg_44;
  doc["comparison_catalog"] = catalog.comparison_catalog;
  auto& rules = doc["merge_rules"] = nlohmann::json::array();
  for (const auto& r : catalog.merge_rules) rules.push_back({{"target", r.target}, {"sources", r.sources}});
  std::ofstream out(json_path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + json_path.string());
  out << doc.dump(2) << '\n';
}

BundleMaskSet merge_tractseg_masks(const BundleMaskSet& tractseg, const std::vector<MergeRule>& rules) {
  tractseg.validate();
  std::set<std::string> consumed;
  std::vector<std::string> names;
  for (const auto& rule : rules) {
    for (const auto& s : rule.sources) {
      if (tractseg.find(s) < 0) {
        throw Error(ErrorKind::data, "merge source channel '" + s + "' (for " + rule.target +
                                         ") is missing from the input");
      }
      consumed.insert(s);
    }
    names.push_back(rule.target);
  }
  std::vector<int> passthrough;
  for (int c = 0; c < tractseg.channel_count(); ++c) {
    if (!consumed.contains(tractseg.channels[c])) {
      names.push_back(tractseg.channels[c]);
      passthrough.push_back(c);
    }
  }
  BundleMaskSet out(tractseg.grid, names);
  out.validate();
  const std::size_t n = tractseg.grid.voxel_count();
  int oc = 0;
  for (const auto& rule : rules) {
    float* dst = out.channel(oc);
    bool any_valid = false;
    for (const auto& s : rule.sources) {
      const int sc = tractseg.find(s);
      any_valid = any_valid || tractseg.valid[sc];
      const float* src = tractseg.channel(sc);
      for (std::size_t v = 0; v < n; ++v) {
        if (src[v] != 0.0f) dst[v] = std::max(dst[v], src[v]);
      }
    }
    out.valid[oc] = any_valid ? 1 : 0;
    ++oc;
  }
  for (int c : passthrough) {
    std::copy(tractseg.channel(c), tractseg.channel(c) + n, out.channel(oc));
    out.valid[oc] = tractseg.valid[c];
    ++oc;
  }
  return out;
}

BundleMaskSet assemble_60(const BundleMaskSet& expert, const BundleMaskSet& tractseg,
                          const BundleCatalog& catalog) {
  if (!same_grid(expert.grid, tractseg.grid)) {
    throw Error(ErrorKind::shape_mismatch, "expert and TractSeg masks are on different grids");
  }
  if (expert.channel_count() != 16) {
    throw Error(ErrorKind::shape_mismatch, "expected 16 expert channels, got " +
                                               std::to_string(expert.channel_count()));
  }
  BundleMaskSet out(expert.grid, catalog.merged_catalog_60());
  const std::size_t n = expert.grid.voxel_count();
  for (int c = 0; c < 16; ++c) {
    const int src = expert.find(catalog.expert_16[c]);
    const int from = src >= 0 ? src : c;
    std::copy(expert.channel(from), expert.channel(from) + n, out.channel(c));
    out.valid[c] = expert.valid[from];
  }
  for (int t = 0; t < 44; ++t) {
    const int src = tractseg.find(catalog.tractseg_44[t]);
    if (src < 0) {
      throw Error(ErrorKind::shape_mismatch, "TractSeg input lacks channel '" + catalog.tractseg_44[t] + "'");
    }
    const float* s = tractseg.channel(src);
    float* d = out.channel(16 + t);
    bool any = false;
    for (std::size_t v = 0; v < n; ++v) {
      d[v] = s[v];
      any = any || s[v] != 0.0f;
    }
    out.valid[16 + t] = any && tractseg.valid[src] ? 1 : 0;
  }
  return out;
}

void mark_missing_invalid(BundleMaskSet& masks) {
  const std::size_t n = masks.grid.voxel_count();
  for (int c = 0; c < masks.channel_count(); ++c) {
    const float* ch = masks.channel(c);
    if (std::none_of(ch, ch + n, [](float v) { return v != 0.0f; })) masks.valid[c] = 0;
  }
}

ExclusionReport exclusion_filter(const std::map<std::string, BundleMaskSet>& cohort_refs,
                                 const std::vector<std::string>& bundles,
                                 const std::vector<std::string>& comparison_catalog,
                                 double threshold) {
  ExclusionReport rep;
  for (const auto& b : bundles) rep.missing_count[b] = 0;
  for (const auto& [subject, masks] : cohort_refs) {
    const std::size_t n = masks.grid.voxel_count();
    for (const auto& b : bundles) {
      const int c = masks.find(b);
      bool missing = c < 0 || !masks.valid[c];
      if (!missing) {
        const float* ch = masks.channel(c);
        missing = std::none_of(ch, ch + n, [](float v) { return v != 0.0f; });
      }
      if (missing) {
        rep.missing.emplace_back(subject, b);
        ++rep.missing_count[b];
      }
    }
  }
  const double subjects = static_cast<double>(cohort_refs.size());
  for (const auto& [b, count] : rep.missing_count) {
    if (subjects > 0 && static_cast<double>(count) > threshold * subjects) rep.cohort_excluded.insert(b);
  }
  if (!comparison_catalog.empty()) {
    for (const auto& b : bundles) {
      if (std::find(comparison_catalog.begin(), comparison_catalog.end(), b) == comparison_catalog.end()) {
        rep.comparison_excluded.insert(b);
      }
    }
  }
  return rep;
}

}  // namespace bundleseg
