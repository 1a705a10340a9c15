#include "report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bundleseg/error.hpp"

namespace bundleseg::cli {
namespace {

const char* kPalette[] = {"#8da0cb", "#fc8d62", "#66c2a5", "#e78ac3", "#a6d854"};

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << text;
}

}  // namespace

BoxStats box_stats(std::vector<double> v) {
  if (v.empty()) throw Error(ErrorKind::invalid_argument, "box plot of an empty sample");
  std::sort(v.begin(), v.end());
  BoxStats b;
  b.q1 = quantile(v, 0.25);
  b.median = quantile(v, 0.5);
  b.q3 = quantile(v, 0.75);
  const double iqr = b.q3 - b.q1;
  const double lo = b.q1 - 1.5 * iqr, hi = b.q3 + 1.5 * iqr;
  b.whisker_low = b.q1;
  b.whisker_high = b.q3;
  for (double x : v) {
    if (x < lo || x > hi) {
      b.outliers.push_back(x);
    } else {
      b.whisker_low = std::min(b.whisker_low, x);
      b.whisker_high = std::max(b.whisker_high, x);
    }
  }
  return b;
}

void write_box_plot(const std::filesystem::path& path, const std::vector<std::string>& methods,
                    const std::vector<BoxGroup>& groups, const std::string& metric, int width) {
  if (groups.empty()) throw Error(ErrorKind::data, "nothing to plot");
  const double left = 60, right = 20, top = 40, plot_h = 300, bottom = 110;
  const double height = top + plot_h + bottom;
  const double group_w = (width - left - right) / static_cast<double>(groups.size());
  const double m = static_cast<double>(std::max<std::size_t>(methods.size(), 1));
  const double box_w = std::min(40.0, group_w * 0.8 / m);

  // Dice-like metrics live in [0,1]; widen only if the data demands it.
  double vmin = 0.0, vmax = 1.0;
  for (const auto& g : groups) {
    for (const auto& s : g.series) {
      for (double x : s) {
        vmin = std::min(vmin, x);
        vmax = std::max(vmax, x);
      }
    }
  }
  auto ypos = [&](double v) { return top + plot_h * (1.0 - (v - vmin) / (vmax - vmin)); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
    << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = vmin + (vmax - vmin) * t / 4.0;
    o << "<text x=\"" << left - 6 << "\" y=\"" << num(ypos(v) + 4) << "\" text-anchor=\"end\">" << num(v)
      << "</text>\n";
    o << "<line x1=\"" << left << "\" y1=\"" << num(ypos(v)) << "\" x2=\"" << width - right << "\" y2=\""
      << num(ypos(v)) << "\" stroke=\"#ddd\"/>\n";
  }
  o << "<text transform=\"translate(16," << top + plot_h / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(metric) << "</text>\n";

  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& g = groups[gi];
    const double gx = left + group_w * static_cast<double>(gi);
    const double start = gx + (group_w - box_w * m) / 2.0;
    double top_of_group = ypos(vmin);
    for (std::size_t si = 0; si < g.series.size(); ++si) {
      if (g.series[si].empty()) continue;
      const BoxStats b = box_stats(g.series[si]);
      const double x0 = start + box_w * static_cast<double>(si);
      const double cx = x0 + box_w / 2.0;
      const char* fill = kPalette[si % std::size(kPalette)];
      o << "<g class=\"box\" data-bundle=\"" << escape(g.bundle) << "\">\n";
      o << "  <line x1=\"" << num(cx) << "\" y1=\"" << num(ypos(b.whisker_low)) << "\" x2=\"" << num(cx)
        << "\" y2=\"" << num(ypos(b.whisker_high)) << "\" stroke=\"black\"/>\n";
      o << "  <rect x=\"" << num(x0 + 2) << "\" y=\"" << num(ypos(b.q3)) << "\" width=\"" << num(box_w - 4)
        << "\" height=\"" << num(std::max(ypos(b.q1) - ypos(b.q3), 0.5)) << "\" fill=\"" << fill
        << "\" stroke=\"black\"/>\n";
      o << "  <line x1=\"" << num(x0 + 2) << "\" y1=\"" << num(ypos(b.median)) << "\" x2=\""
        << num(x0 + box_w - 2) << "\" y2=\"" << num(ypos(b.median)) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
      for (double x : b.outliers) {
        o << "  <circle cx=\"" << num(cx) << "\" cy=\"" << num(ypos(x)) << "\" r=\"2\" fill=\"none\" stroke=\"black\"/>\n";
      }
      o << "</g>\n";
      top_of_group = std::min(top_of_group, ypos(b.whisker_high));
      if (!b.outliers.empty()) {
        top_of_group = std::min(top_of_group, ypos(*std::max_element(b.outliers.begin(), b.outliers.end())));
      }
    }
    if (g.significant) {
      o << "<text class=\"star\" x=\"" << num(gx + group_w / 2) << "\" y=\"" << num(std::max(top_of_group - 6, 14.0))
        << "\" text-anchor=\"middle\" font-size=\"16\">*</text>\n";
    }
    o << "<text transform=\"translate(" << num(gx + group_w / 2) << "," << top + plot_h + 12
      << ") rotate(45)\">" << escape(g.bundle) << "</text>\n";
  }
  for (std::size_t si = 0; si < methods.size(); ++si) {
    const double lx = left + 10 + 120.0 * static_cast<double>(si);
    o << "<rect x=\"" << lx << "\" y=\"12\" width=\"12\" height=\"12\" fill=\"" << kPalette[si % std::size(kPalette)]
      << "\" stroke=\"black\"/><text x=\"" << lx + 16 << "\" y=\"22\">" << escape(methods[si]) << "</text>\n";
  }
  o << "</svg>\n";
  write_file(path, o.str());
}

void write_heatmap(const std::filesystem::path& path, const std::vector<std::string>& bundles,
                   const std::vector<std::string>& metrics,
                   const std::vector<std::vector<std::optional<double>>>& cells, int width) {
  if (bundles.empty()) throw Error(ErrorKind::data, "nothing to plot");
  const double left = 120, top = 60, cell_h = 36;
  const double cell_w = (width - left - 20) / static_cast<double>(metrics.size());
  const double height = top + cell_h * static_cast<double>(bundles.size()) + 30;
  constexpr double kScaleMax = 1.5;

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << left << "\" y=\"20\">|Cohen's d|</text>\n";
  for (std::size_t c = 0; c < metrics.size(); ++c) {
    o << "<text x=\"" << num(left + cell_w * (c + 0.5)) << "\" y=\"" << top - 8
      << "\" text-anchor=\"middle\">" << escape(metrics[c]) << "</text>\n";
  }
  for (std::size_t r = 0; r < bundles.size(); ++r) {
    const double y = top + cell_h * static_cast<double>(r);
    o << "<text x=\"" << left - 8 << "\" y=\"" << num(y + cell_h / 2 + 4) << "\" text-anchor=\"end\">"
      << escape(bundles[r]) << "</text>\n";
    for (std::size_t c = 0; c < metrics.size(); ++c) {
      const auto& v = cells[r][c];
      std::string fill = "#cccccc", label = "n/a";
      if (v) {
        const double t = std::clamp(std::abs(*v) / kScaleMax, 0.0, 1.0);
        const int g = static_cast<int>(std::lround(255 * (1.0 - t)));
        char buf[16];
        std::snprintf(buf, sizeof buf, "#ff%02x%02x", g, g);
        fill = buf;
        label = num(std::abs(*v));
      }
      const double x = left + cell_w * static_cast<double>(c);
      o << "<g class=\"cell\" data-bundle=\"" << escape(bundles[r]) << "\" data-metric=\"" << escape(metrics[c])
        << "\"><rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(cell_w) << "\" height=\""
        << cell_h << "\" fill=\"" << fill << "\" stroke=\"white\"/><text x=\"" << num(x + cell_w / 2)
        << "\" y=\"" << num(y + cell_h / 2 + 4) << "\" text-anchor=\"middle\">" << label << "</text></g>\n";
    }
  }
  o << "</svg>\n";
  write_file(path, o.str());
}

}  // namespace bundleseg::cli
