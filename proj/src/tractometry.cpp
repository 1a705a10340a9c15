#include "bundleseg/tractometry.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "bundleseg/error.hpp"

namespace bundleseg {
namespace {

double distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

void Streamline::validate() const {
  if (points.size() < 2) {
    throw Error(ErrorKind::invalid_argument, "a streamline needs at least two points");
  }
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i] == points[i - 1]) {
      throw Error(ErrorKind::invalid_argument, "streamline has a zero-length segment");
    }
  }
}

double streamline_length(const Streamline& s) {
  if (s.points.size() < 2) {
    throw Error(ErrorKind::invalid_argument, "a streamline needs at least two points");
  }
  double len = 0.0;
  for (std::size_t i = 1; i < s.points.size(); ++i) len += distance(s.points[i - 1], s.points[i]);
  return len;
}

std::optional<double> streamline_curl(const Streamline& s) {
  const double len = streamline_length(s);
  const double chord = distance(s.points.front(), s.points.back());
  if (chord == 0.0) return std::nullopt;
  const double c = len / chord;
  // segment sums along a straight polyline land a few ulp off 1
  return std::abs(c - 1.0) < 1e-12 ? 1.0 : c;
}

double mask_volume(const MaskView& mask) {
  std::size_t n = 0;
  for (float v : mask.values) n += v != 0.0f;
  return static_cast<double>(n) * mask.grid.voxel_volume();
}

double mask_surface_area(const MaskView& mask) {
  const auto& g = mask.grid;
  const auto& s = g.shape;
  const double face[3] = {g.voxel_size[1] * g.voxel_size[2], g.voxel_size[0] * g.voxel_size[2],
                          g.voxel_size[0] * g.voxel_size[1]};
  auto on = [&](int i, int j, int k) {
    return g.contains(i, j, k) && mask.values[g.index(i, j, k)] != 0.0f;
  };
  long long exposed[3] = {0, 0, 0};
  for (int k = 0; k < s[2]; ++k) {
    for (int j = 0; j < s[1]; ++j) {
      for (int i = 0; i < s[0]; ++i) {
        if (!on(i, j, k)) continue;
        exposed[0] += !on(i - 1, j, k) + !on(i + 1, j, k);
        exposed[1] += !on(i, j - 1, k) + !on(i, j + 1, k);
        exposed[2] += !on(i, j, k - 1) + !on(i, j, k + 1);
      }
    }
  }
  return exposed[0] * face[0] + exposed[1] * face[1] + exposed[2] * face[2];
}

BundleShape bundle_shape(const MaskView& mask, const std::vector<Streamline>& streamlines) {
  if (streamlines.empty()) {
    throw Error(ErrorKind::invalid_argument, "bundle shape needs at least one streamline");
  }
  BundleShape shape;
  shape.surface_area = mask_surface_area(mask);
  shape.volume = mask_volume(mask);
  double len_sum = 0.0, curl_sum = 0.0;
  std::size_t curl_n = 0;
  for (const auto& s : streamlines) {
    len_sum += streamline_length(s);
    if (auto c = streamline_curl(s)) {
      curl_sum += *c;
      ++curl_n;
    }
  }
  shape.mean_length = len_sum / static_cast<double>(streamlines.size());
  if (curl_n > 0) shape.curl = curl_sum / static_cast<double>(curl_n);
  return shape;
}

std::vector<Streamline> read_streamlines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::vector<Streamline> out;
  Streamline cur;
  std::string line;
  std::size_t line_no = 0;
  auto flush = [&] {
    if (cur.points.empty()) return;
    if (cur.points.size() < 2) {
      throw Error(ErrorKind::format, path.string() + ": streamline ending at line " +
                                         std::to_string(line_no) + " has fewer than 2 points");
    }
    out.push_back(std::move(cur));
    cur = {};
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      flush();
      continue;
    }
    std::istringstream ss(line);
    Vec3 p;
    if (!(ss >> p[0] >> p[1] >> p[2])) {
      throw Error(ErrorKind::format, path.string() + ":" + std::to_string(line_no) + ": expected 'x y z'");
    }
    cur.points.push_back(p);
  }
  flush();
  return out;
}

void write_streamlines(const std::filesystem::path& path, const std::vector<Streamline>& streamlines) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < streamlines.size(); ++i) {
    if (i) out << '\n';
    for (const auto& p : streamlines[i].points) out << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
  }
}

}  // namespace bundleseg
