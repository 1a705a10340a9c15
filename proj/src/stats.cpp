#include "bundleseg/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>

#include "bundleseg/csv.hpp"
#include "bundleseg/error.hpp"

namespace bundleseg::stats {
namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

struct RankedDifferences {
  std::vector<double> ranks;  // mid-ranks of |d|
  std::vector<bool> positive;
  double tie_term = 0.0;  // sum over tie groups of t^3 - t
};

RankedDifferences rank_nonzero(std::span<const double> a, std::span<const double> b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    if (diff != 0.0) d.push_back(diff);
  }
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return std::abs(d[i]) < std::abs(d[j]); });
  RankedDifferences r;
  r.ranks.resize(d.size());
  r.positive.resize(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) r.positive[i] = d[i] > 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r.ranks[order[t]] = mid;
    const double t = static_cast<double>(j - i + 1);
    r.tie_term += t * t * t - t;
    i = j + 1;
  }
  return r;
}

// Null distribution of 2*W+: counts[s] = number of sign assignments whose
// doubled positive-rank sum is s. Doubling makes mid-ranks integral.
std::vector<std::uint64_t> doubled_rank_sum_counts(const std::vector<int>& doubled_ranks) {
  const int total = std::accumulate(doubled_ranks.begin(), doubled_ranks.end(), 0);
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(total) + 1, 0);
  counts[0] = 1;
  int reach = 0;
  for (int r : doubled_ranks) {
    for (int s = reach; s >= 0; --s) {
      if (counts[s]) counts[s + r] += counts[s];
    }
    reach += r;
  }
  return counts;
}

}  // namespace

std::string to_string(TestMethod m) {
  return m == TestMethod::exact ? "exact" : "normal-approximation";
}

std::optional<TestResult> wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                               Alternative alternative) {
  if (a.empty()) throw Error(ErrorKind::invalid_argument, "Wilcoxon test needs at least one pair");
  if (a.size() != b.size()) {
    throw Error(ErrorKind::shape_mismatch, "Wilcoxon test needs equally long paired samples");
  }
  const RankedDifferences r = rank_nonzero(a, b);
  const int n = static_cast<int>(r.ranks.size());
  if (n == 0) return std::nullopt;

  TestResult res;
  res.n_effective = n;
  for (int i = 0; i < n; ++i) (r.positive[i] ? res.w_plus : res.w_minus) += r.ranks[i];
  res.statistic = alternative == Alternative::two_sided ? std::min(res.w_plus, res.w_minus) : res.w_plus;

  if (n <= kExactLimit) {
    res.method = TestMethod::exact;
    std::vector<int> doubled(n);
    for (int i = 0; i < n; ++i) doubled[i] = static_cast<int>(std::lround(2.0 * r.ranks[i]));
    const auto counts = doubled_rank_sum_counts(doubled);
    const double total = std::ldexp(1.0, n);
    const int observed = static_cast<int>(std::lround(2.0 * res.w_plus));
    auto cdf = [&](int s) {  // P(2W+ <= s)
      std::uint64_t c = 0;
      for (int t = 0; t <= s && t < static_cast<int>(counts.size()); ++t) c += counts[t];
      return static_cast<double>(c) / total;
    };
    auto sf = [&](int s) {  // P(2W+ >= s)
      std::uint64_t c = 0;
      for (int t = std::max(s, 0); t < static_cast<int>(counts.size()); ++t) c += counts[t];
      return static_cast<double>(c) / total;
    };
    switch (alternative) {
      case Alternative::two_sided: {
        const int lower = static_cast<int>(std::lround(2.0 * std::min(res.w_plus, res.w_minus)));
        res.p_value = std::min(1.0, 2.0 * cdf(lower));
        break;
      }
      case Alternative::greater: res.p_value = sf(observed); break;
      case Alternative::less: res.p_value = cdf(observed); break;
    }
  } else {
    res.method = TestMethod::normal_approximation;
    const double nn = n;
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - r.tie_term / 48.0;
    const double sd = std::sqrt(var);
    const double dev = res.w_plus - mean;
    switch (alternative) {
      case Alternative::two_sided: {
        const double z = std::max(0.0, std::abs(dev) - 0.5) / sd;
        res.p_value = std::min(1.0, 2.0 * (1.0 - normal_cdf(z)));
        break;
      }
      case Alternative::greater: res.p_value = 1.0 - normal_cdf((dev - 0.5) / sd); break;
      case Alternative::less: res.p_value = normal_cdf((dev + 0.5) / sd); break;
    }
  }
  return res;
}

FdrResult fdr_bh(std::span<const double> p_values, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorKind::invalid_argument, "FDR level must lie in (0, 1)");
  }
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error(ErrorKind::invalid_argument, "p-value outside [0, 1]");
    }
  }
  const std::size_t m = p_values.size();
  FdrResult out;
  out.rejected.assign(m, false);
  out.adjusted.assign(m, 1.0);
  if (m == 0) return out;
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return p_values[i] < p_values[j]; });
  std::size_t cutoff = 0;  // number of rejections
  for (std::size_t rank = 1; rank <= m; ++rank) {
    if (p_values[order[rank - 1]] <= static_cast<double>(rank) * alpha / static_cast<double>(m)) {
      cutoff = rank;
    }
  }
  for (std::size_t rank = 1; rank <= cutoff; ++rank) out.rejected[order[rank - 1]] = true;
  double running = 1.0;
  for (std::size_t rank = m; rank >= 1; --rank) {
    const double scaled = static_cast<double>(m) * p_values[order[rank - 1]] / static_cast<double>(rank);
    running = std::min(running, scaled);
    out.adjusted[order[rank - 1]] = std::min(1.0, running);
  }
  return out;
}

std::optional<double> cohens_d(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 2 || y.size() < 2) {
    throw Error(ErrorKind::invalid_argument, "Cohen's d needs at least two values per sample");
  }
  auto mean = [](std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  auto ss = [](std::span<const double> v, double mu) {
    double acc = 0.0;
    for (double t : v) acc += (t - mu) * (t - mu);
    return acc;
  };
  const double mx = mean(x), my = mean(y);
  const double pooled = (ss(x, mx) + ss(y, my)) / static_cast<double>(x.size() + y.size() - 2);
  if (!(pooled > 0.0)) return std::nullopt;
  return (mx - my) / std::sqrt(pooled);
}

std::vector<MethodComparison> compare_methods(const std::vector<MaskComparison>& method_a,
                                              const std::vector<MaskComparison>& method_b,
                                              const std::vector<std::string>& metrics,
                                              double alpha, FdrFamily family) {
  using Key = std::pair<std::string, std::string>;  // (bundle, subject)
  std::map<Key, const MaskComparison*> a_rows;
  for (const auto& r : method_a) a_rows[{r.bundle, r.subject}] = &r;
  std::map<std::string, std::vector<std::pair<const MaskComparison*, const MaskComparison*>>> by_bundle;
  std::vector<std::string> bundle_order;
  for (const auto& r : method_b) {
    if (!by_bundle.contains(r.bundle)) bundle_order.push_back(r.bundle);
    auto& list = by_bundle[r.bundle];
    auto it = a_rows.find({r.bundle, r.subject});
    if (it != a_rows.end()) list.emplace_back(it->second, &r);
  }
  for (const auto& r : method_a) {
    if (!by_bundle.contains(r.bundle)) {
      bundle_order.push_back(r.bundle);
      by_bundle[r.bundle];
    }
  }

  std::vector<MethodComparison> out;
  for (const auto& metric : metrics) {
    for (const auto& bundle : bundle_order) {
      MethodComparison mc;
      mc.bundle = bundle;
      mc.metric = metric;
      std::vector<double> a, b;
      for (const auto& [ra, rb] : by_bundle[bundle]) {
        const auto va = metric_value(*ra, metric);
        const auto vb = metric_value(*rb, metric);
        if (va && vb) {
          a.push_back(*va);
          b.push_back(*vb);
        } else {
          ++mc.n_dropped;
        }
      }
      mc.n_pairs = static_cast<int>(a.size());
      if (a.empty()) {
        mc.status = "untestable";
      } else {
        mc.test = wilcoxon_signed_rank(b, a, Alternative::two_sided);
        mc.status = mc.test ? "tested" : "no_difference";
      }
      out.push_back(std::move(mc));
    }
  }

  auto correct = [&](const std::vector<std::size_t>& members) {
    std::vector<double> p;
    for (std::size_t i : members) p.push_back(out[i].test->p_value);
    const auto fdr = fdr_bh(p, alpha);
    for (std::size_t t = 0; t < members.size(); ++t) {
      out[members[t]].p_adjusted = fdr.adjusted[t];
      out[members[t]].significant = fdr.rejected[t];
    }
  };
  if (family == FdrFamily::global) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out[i].test) members.push_back(i);
    }
    correct(members);
  } else {
    for (const auto& metric : metrics) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i].metric == metric && out[i].test) members.push_back(i);
      }
      correct(members);
    }
  }
  return out;
}

void write_comparison_csv(const std::filesystem::path& path,
                          const std::vector<MethodComparison>& rows) {
  csv::Table t;
  t.header = {"bundle", "metric", "W", "p_raw", "p_adjusted", "n_effective", "significant",
              "n_pairs", "n_dropped", "method", "status"};
  for (const auto& r : rows) {
    t.rows.push_back({r.bundle, r.metric,
                      r.test ? csv::format_optional(r.test->statistic) : "",
                      r.test ? csv::format_optional(r.test->p_value) : "",
                      csv::format_optional(r.p_adjusted),
                      r.test ? std::to_string(r.test->n_effective) : "",
                      r.significant ? "1" : "0", std::to_string(r.n_pairs),
                      std::to_string(r.n_dropped), r.test ? to_string(r.test->method) : "",
                      r.status});
  }
  csv::write(path, t);
}

}  // namespace bundleseg::stats
