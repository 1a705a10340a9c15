#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "bundleseg/stats.hpp"

namespace statoracle {

inline std::vector<double> nonzero_diffs(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] - b[i] != 0.0) d.push_back(a[i] - b[i]);
  return d;
}

inline std::vector<double> mid_ranks(const std::vector<double>& d) {
  std::vector<double> r(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    double below = 0, same = 0;
    for (double x : d) {
      if (std::abs(x) < std::abs(d[i])) below += 1;
      if (std::abs(x) == std::abs(d[i])) same += 1;
    }
    r[i] = below + (same + 1) / 2;
  }
  return r;
}

// Visits all 2^n sign patterns of the ranks.
inline std::optional<double> enumerate_wilcoxon(const std::vector<double>& a, const std::vector<double>& b,
                                                bundleseg::stats::Alternative alt) {
  const auto d = nonzero_diffs(a, b);
  if (d.empty()) return std::nullopt;
  const auto r = mid_ranks(d);
  const std::size_t n = d.size();
  double w = 0, total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += r[i];
    if (d[i] > 0) w += r[i];
  }
  const double mean = total / 2;
  std::size_t hits = 0;
  const std::size_t patterns = std::size_t{1} << n;
  for (std::size_t mask = 0; mask < patterns; ++mask) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) s += r[i];
    bool hit = false;
    switch (alt) {
      case bundleseg::stats::Alternative::two_sided: hit = std::abs(s - mean) >= std::abs(w - mean) - 1e-9; break;
      case bundleseg::stats::Alternative::greater: hit = s >= w - 1e-9; break;
      case bundleseg::stats::Alternative::less: hit = s <= w + 1e-9; break;
    }
    hits += hit;
  }
  return double(hits) / double(patterns);
}

inline double normal_wilcoxon(const std::vector<double>& a, const std::vector<double>& b) {
  const auto d = nonzero_diffs(a, b);
  const auto r = mid_ranks(d);
  const double n = double(d.size());
  double w = 0, ties = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] > 0) w += r[i];
    double t = 0;
    for (double x : d) t += std::abs(x) == std::abs(d[i]);
    ties += (t * t * t - t) / t;  // each tie group counted once overall
  }
  const double var = n * (n + 1) * (2 * n + 1) / 24 - ties / 48;
  const double z = std::max(0.0, std::abs(w - n * (n + 1) / 4) - 0.5) / std::sqrt(var);
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

inline std::vector<bool> step_up(const std::vector<double>& p, double alpha) {
  const std::size_t m = p.size();
  std::vector<double> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  double cutoff = -1;
  for (std::size_t i = m; i >= 1; --i)
    if (sorted[i - 1] <= double(i) * alpha / double(m)) {
      cutoff = sorted[i - 1];
      break;
    }
  std::vector<bool> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = p[i] <= cutoff;
  return out;
}

inline double cohens_d(const std::vector<double>& x, const std::vector<double>& y) {
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double e : v) s += e;
    return s / double(v.size());
  };
  auto ss = [](const std::vector<double>& v, double m) {
    double s = 0;
    for (double e : v) s += (e - m) * (e - m);
    return s;
  };
  const double mx = mean(x), my = mean(y);
  return (mx - my) / std::sqrt((ss(x, mx) + ss(y, my)) / double(x.size() + y.size() - 2));
}

}  // namespace statoracle
