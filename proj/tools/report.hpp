#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace bundleseg::cli {

struct BoxStats {
  double q1 = 0, median = 0, q3 = 0;
  double whisker_low = 0, whisker_high = 0;  // furthest points within 1.5 IQR
  std::vector<double> outliers;
};

/// Quartiles by linear interpolation between order statistics.
BoxStats box_stats(std::vector<double> values);

struct BoxGroup {
  std::string bundle;
  std::vector<std::vector<double>> series;  // one per method
  bool significant = false;
};

void write_box_plot(const std::filesystem::path& path, const std::vector<std::string>& methods,
                    const std::vector<BoxGroup>& groups, const std::string& metric, int width);

/// cells[r][c] is |d| for bundle r and metric c; empty cells render as "n/a".
void write_heatmap(const std::filesystem::path& path, const std::vector<std::string>& bundles,
                   const std::vector<std::string>& metrics,
                   const std::vector<std::vector<std::optional<double>>>& cells, int width);

}  // namespace bundleseg::cli
