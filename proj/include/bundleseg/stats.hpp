#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bundleseg/metrics.hpp"

namespace bundleseg::stats {

enum class Alternative { two_sided, greater, less };
enum class TestMethod { exact, normal_approximation };

std::string to_string(TestMethod m);

/// Sample sizes up to this use the exact null distribution.
inline constexpr int kExactLimit = 25;

struct TestResult {
  double statistic = 0.0;  // min(W+, W-) for two-sided, W+ otherwise
  double w_plus = 0.0;
  double w_minus = 0.0;
  double p_value = 1.0;
  int n_effective = 0;  // pairs left after dropping zero differences
  TestMethod method = TestMethod::exact;
};

/// Wilcoxon signed-rank test on d = a - b. Zero differences are discarded,
/// tied |d| get mid-ranks. n_effective <= 25 uses the exact distribution of W+
/// over all 2^n sign assignments; larger samples use the tie-corrected normal
/// approximation with a 0.5 continuity correction. Returns nothing when every
/// difference is zero; throws on empty or unequal-length input.
std::optional<TestResult> wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                               Alternative alternative = Alternative::two_sided);

struct FdrResult {
  std::vector<bool> rejected;
  std::vector<double> adjusted;
};

/// Benjamini-Hochberg step-up at level alpha. Results are in input order.
FdrResult fdr_bh(std::span<const double> p_values, double alpha);

/// Standardised mean difference with pooled sample standard deviation.
/// Empty when the pooled variance is zero; throws if either sample has < 2 values.
std::optional<double> cohens_d(std::span<const double> x, std::span<const double> y);

enum class FdrFamily { per_metric, global };

struct MethodComparison {
  std::string bundle;
  std::string metric;
  int n_pairs = 0;       // pairs with both values defined
  int n_dropped = 0;     // pairs dropped for an undefined value on either side
  std::optional<TestResult> test;  // empty: untestable or all differences zero
  std::optional<double> p_adjusted;
  bool significant = false;
  std::string status;  // "tested", "no_difference" or "untestable"
};

/// One paired test per (bundle, metric) on B - A over shared (subject, bundle)
/// keys, then BH-FDR within each family. Untestable and zero-difference tests
/// are reported but take no part in the correction.
std::vector<MethodComparison> compare_methods(const std::vector<MaskComparison>& method_a,
                                              const std::vector<MaskComparison>& method_b,
                                              const std::vector<std::string>& metrics,
                                              double alpha = 0.05,
                                              FdrFamily family = FdrFamily::per_metric);

/// bundle,metric,W,p_raw,p_adjusted,n_effective,significant,n_pairs,n_dropped,method,status
void write_comparison_csv(const std::filesystem::path& path,
                          const std::vector<MethodComparison>& rows);

}  // namespace bundleseg::stats
