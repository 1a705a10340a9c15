#include "bundleseg/metrics.hpp"

#include <algorithm>

#include "bundleseg/csv.hpp"
#include "bundleseg/error.hpp"

namespace bundleseg {
namespace {

void require_same_grid(const MaskView& a, const MaskView& b) {
  if (!same_grid(a.grid, b.grid) || a.values.size() != b.values.size()) {
    throw Error(ErrorKind::shape_mismatch, "masks are defined on different grids");
  }
}

// Chebyshev-radius dilation as three separable 1-D max filters.
std::vector<char> dilate(const MaskView& m, int radius) {
  const auto& s = m.grid.shape;
  const std::size_t n = m.grid.voxel_count();
  std::vector<char> cur(n), next(n);
  for (std::size_t v = 0; v < n; ++v) cur[v] = m.values[v] != 0.0f;
  if (radius <= 0) return cur;
  const std::size_t stride[3] = {1, static_cast<std::size_t>(s[0]),
                                 static_cast<std::size_t>(s[0]) * s[1]};
  for (int axis = 0; axis < 3; ++axis) {
    const long long len = static_cast<long long>(n);
#pragma omp parallel for
    for (long long v = 0; v < len; ++v) {
      const int coord = static_cast<int>((v / static_cast<long long>(stride[axis])) % s[axis]);
      char hit = 0;
      for (int d = -radius; d <= radius && !hit; ++d) {
        const int c = coord + d;
        if (c < 0 || c >= s[axis]) continue;
        hit = cur[static_cast<std::size_t>(v + static_cast<long long>(d) * static_cast<long long>(stride[axis]))];
      }
      next[static_cast<std::size_t>(v)] = hit;
    }
    std::swap(cur, next);
  }
  return cur;
}

}  // namespace

OverlapCounts count_overlap(const MaskView& pred, const MaskView& ref) {
  require_same_grid(pred, ref);
  std::size_t p = 0, g = 0, both = 0;
  const long long n = static_cast<long long>(pred.values.size());
#pragma omp parallel for reduction(+ : p, g, both)
  for (long long v = 0; v < n; ++v) {
    const bool a = pred.values[v] != 0.0f;
    const bool b = ref.values[v] != 0.0f;
    p += a;
    g += b;
    both += a && b;
  }
  return {p, g, both};
}

std::optional<double> dice(const MaskView& pred, const MaskView& ref) {
  const auto c = count_overlap(pred, ref);
  if (c.pred + c.ref == 0) return std::nullopt;
  return 2.0 * static_cast<double>(c.intersection) / static_cast<double>(c.pred + c.ref);
}

std::optional<double> volume_overlap(const MaskView& pred, const MaskView& ref) {
  const auto c = count_overlap(pred, ref);
  if (c.ref == 0) return std::nullopt;
  return static_cast<double>(c.intersection) / static_cast<double>(c.ref);
}

std::optional<double> volume_overreach(const MaskView& pred, const MaskView& ref) {
  const auto c = count_overlap(pred, ref);
  if (c.ref == 0) return std::nullopt;
  return static_cast<double>(c.pred - c.intersection) / static_cast<double>(c.ref);
}

std::optional<double> adjacency(const MaskView& pred, const MaskView& ref, int radius) {
  require_same_grid(pred, ref);
  const auto grown = dilate(ref, radius);
  std::size_t p = 0, near = 0;
  const long long n = static_cast<long long>(pred.values.size());
#pragma omp parallel for reduction(+ : p, near)
  for (long long v = 0; v < n; ++v) {
    if (pred.values[v] == 0.0f) continue;
    ++p;
    near += grown[static_cast<std::size_t>(v)] != 0;
  }
  if (p == 0) return std::nullopt;
  return static_cast<double>(near) / static_cast<double>(p);
}

MaskComparison compare_masks(const std::string& subject, const std::string& bundle,
                             const MaskView& pred, const MaskView& ref, int adjacency_radius) {
  MaskComparison row;
  row.subject = subject;
  row.bundle = bundle;
  const auto c = count_overlap(pred, ref);
  if (c.pred + c.ref > 0) {
    row.dice = 2.0 * static_cast<double>(c.intersection) / static_cast<double>(c.pred + c.ref);
  }
  if (c.ref > 0) {
    row.overlap = static_cast<double>(c.intersection) / static_cast<double>(c.ref);
    row.overreach = static_cast<double>(c.pred - c.intersection) / static_cast<double>(c.ref);
  }
  row.adjacency = adjacency(pred, ref, adjacency_radius);
  return row;
}

std::vector<MaskComparison> evaluate_cohort(const std::map<std::string, BundleMaskSet>& preds,
                                            const std::map<std::string, BundleMaskSet>& refs,
                                            const std::vector<std::string>& bundles,
                                            int adjacency_radius) {
  if (preds.size() != refs.size() ||
      !std::equal(preds.begin(), preds.end(), refs.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; })) {
    throw Error(ErrorKind::data, "prediction and reference subject sets differ");
  }
  std::vector<MaskComparison> rows;
  for (const auto& [subject, ref] : refs) {
    const BundleMaskSet& pred = preds.at(subject);
    for (const auto& bundle : bundles) {
      const int rc = ref.find(bundle);
      if (rc < 0 || !ref.valid[rc]) continue;
      const int pc = pred.find(bundle);
      if (pc < 0) {
        throw Error(ErrorKind::data, "subject " + subject + ": prediction has no channel '" + bundle + "'");
      }
      rows.push_back(compare_masks(subject, bundle, MaskView::of(pred, pc), MaskView::of(ref, rc),
                                   adjacency_radius));
    }
  }
  return rows;
}

std::optional<double> metric_value(const MaskComparison& row, const std::string& metric) {
  if (metric == "dice") return row.dice;
  if (metric == "overlap") return row.overlap;
  if (metric == "overreach") return row.overreach;
  if (metric == "adjacency") return row.adjacency;
  throw Error(ErrorKind::invalid_argument, "unknown metric '" + metric + "'");
}

void write_comparisons_csv(const std::filesystem::path& path,
                           const std::vector<MaskComparison>& rows) {
  csv::Table t;
  t.header = {"subject", "bundle", "dice", "overlap", "overreach", "adjacency"};
  for (const auto& r : rows) {
    t.rows.push_back({r.subject, r.bundle, csv::format_optional(r.dice),
                      csv::format_optional(r.overlap), csv::format_optional(r.overreach),
                      csv::format_optional(r.adjacency)});
  }
  csv::write(path, t);
}

std::vector<MaskComparison> read_comparisons_csv(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const auto s = t.column("subject"), b = t.column("bundle");
  std::vector<MaskComparison> rows;
  for (const auto& r : t.rows) {
    MaskComparison m;
    m.subject = r[s];
    m.bundle = r[b];
    m.dice = csv::parse_optional(r[t.column("dice")]);
    m.overlap = csv::parse_optional(r[t.column("overlap")]);
    m.overreach = csv::parse_optional(r[t.column("overreach")]);
    m.adjacency = csv::parse_optional(r[t.column("adjacency")]);
    rows.push_back(std::move(m));
  }
  return rows;
}

}  // namespace bundleseg
