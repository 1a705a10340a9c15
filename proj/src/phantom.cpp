#include "bundleseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "bundleseg/bundles.hpp"
#include "bundleseg/error.hpp"

namespace bundleseg::phantom {
namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

struct Projection {
  double distance = std::numeric_limits<double>::infinity();
  Vec3 tangent{0, 0, 0};
  bool inside_caps = false;
};

// Closest point on the polyline; caps are flat, so points projecting past
// either end are outside the tube.
Projection project(const std::vector<Vec3>& line, const Vec3& p) {
  Projection best;
  const std::size_t segs = line.size() - 1;
  for (std::size_t s = 0; s < segs; ++s) {
    const Vec3 d = sub(line[s + 1], line[s]);
    const double len2 = dot(d, d);
    if (len2 == 0.0) continue;
    const double t_raw = dot(sub(p, line[s]), d) / len2;
    const double t = std::clamp(t_raw, 0.0, 1.0);
    const Vec3 q{line[s][0] + t * d[0], line[s][1] + t * d[1], line[s][2] + t * d[2]};
    const double dist = norm(sub(p, q));
    if (dist < best.distance) {
      best.distance = dist;
      const double l = std::sqrt(len2);
      best.tangent = {d[0] / l, d[1] / l, d[2] / l};
      best.inside_caps = !((s == 0 && t_raw < 0.0) || (s + 1 == segs && t_raw > 1.0));
    }
  }
  return best;
}

std::vector<char> dilate_cube(const std::vector<char>& in, const VoxelGrid& g, int radius) {
  std::vector<char> cur = in, next(in.size());
  const auto& s = g.shape;
  const std::size_t stride[3] = {1, static_cast<std::size_t>(s[0]), static_cast<std::size_t>(s[0]) * s[1]};
  for (int axis = 0; axis < 3; ++axis) {
    for (std::size_t v = 0; v < cur.size(); ++v) {
      const int coord = static_cast<int>((v / stride[axis]) % s[axis]);
      char hit = 0;
      for (int d = -radius; d <= radius && !hit; ++d) {
        const int c = coord + d;
        if (c >= 0 && c < s[axis]) hit = cur[v + static_cast<std::ptrdiff_t>(d) * static_cast<std::ptrdiff_t>(stride[axis])];
      }
      next[v] = hit;
    }
    std::swap(cur, next);
  }
  return cur;
}

std::vector<Vec3> jitter(const std::vector<Vec3>& pts, double sigma, std::mt19937_64& rng) {
  if (sigma <= 0.0) return pts;
  std::normal_distribution<double> n(0.0, sigma);
  std::vector<Vec3> out = pts;
  for (auto& p : out) {
    for (double& c : p) c += n(rng);
  }
  return out;
}

}  // namespace

void PhantomSpec::validate() const {
  grid.validate();
  if (noise_sigma < 0.0 || noise_sigma >= 1.0) {
    throw Error(ErrorKind::invalid_argument, "phantom noise_sigma must lie in [0, 1)");
  }
  const double max_voxel = std::max({grid.voxel_size[0], grid.voxel_size[1], grid.voxel_size[2]});
  for (const auto& b : bundles) {
    if (b.control_points.size() < 2) {
      throw Error(ErrorKind::invalid_argument, "bundle " + b.name + " needs >= 2 control points");
    }
    if (b.radius_mm < max_voxel) {
      throw Error(ErrorKind::invalid_argument, "bundle " + b.name + " radius is below one voxel");
    }
    for (const auto& p : b.control_points) {
      const Vec3 v = grid.to_voxel(p);
      for (int a = 0; a < 3; ++a) {
        if (v[a] < -0.5 || v[a] > grid.shape[a] - 0.5) {
          throw Error(ErrorKind::invalid_argument, "bundle " + b.name + " leaves the grid");
        }
      }
    }
  }
}

std::vector<Vec3> sample_centerline(const std::vector<Vec3>& cp, int samples_per_segment) {
  if (cp.size() < 2) throw Error(ErrorKind::invalid_argument, "centreline needs >= 2 control points");
  std::vector<Vec3> out;
  const std::size_t n = cp.size();
  for (std::size_t s = 0; s + 1 < n; ++s) {
    const Vec3& p0 = cp[s == 0 ? 0 : s - 1];
    const Vec3& p1 = cp[s];
    const Vec3& p2 = cp[s + 1];
    const Vec3& p3 = cp[std::min(s + 2, n - 1)];
    for (int k = 0; k < samples_per_segment; ++k) {
      const double t = static_cast<double>(k) / samples_per_segment;
      const double t2 = t * t, t3 = t2 * t;
      Vec3 q;
      for (int a = 0; a < 3; ++a) {
        q[a] = 0.5 * ((2.0 * p1[a]) + (-p0[a] + p2[a]) * t + (2.0 * p0[a] - 5.0 * p1[a] + 4.0 * p2[a] - p3[a]) * t2 +
                      (-p0[a] + 3.0 * p1[a] - 3.0 * p2[a] + p3[a]) * t3);
      }
      if (out.empty() || q != out.back()) out.push_back(q);
    }
  }
  if (cp.back() != out.back()) out.push_back(cp.back());
  return out;
}

SubjectRecord generate_subject(const PhantomSpec& spec, const std::string& subject_id) {
  spec.validate();
  const VoxelGrid& g = spec.grid;
  std::vector<std::string> names;
  for (const auto& b : spec.bundles) names.push_back(b.name);

  SubjectRecord rec;
  rec.subject_id = subject_id;
  rec.peaks = PeakVolume(g);
  rec.masks = BundleMaskSet(g, names);
  rec.masks.validate();
  rec.brain_mask = ScalarVolume(g, 0.0f);

  const std::size_t nvox = g.voxel_count();
  std::vector<double> owner_distance(nvox, std::numeric_limits<double>::infinity());
  std::vector<Vec3> owner_tangent(nvox, Vec3{0, 0, 0});
  std::vector<char> in_any(nvox, 0);

  for (std::size_t b = 0; b < spec.bundles.size(); ++b) {
    const auto& bundle = spec.bundles[b];
    const auto line = sample_centerline(bundle.control_points);
    Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    for (const auto& p : line) {
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], p[a] - bundle.radius_mm);
        hi[a] = std::max(hi[a], p[a] + bundle.radius_mm);
      }
    }
    const Vec3 vlo = g.to_voxel(lo), vhi = g.to_voxel(hi);
    int imin[3], imax[3];
    for (int a = 0; a < 3; ++a) {
      imin[a] = std::max(0, static_cast<int>(std::floor(vlo[a])));
      imax[a] = std::min(g.shape[a] - 1, static_cast<int>(std::ceil(vhi[a])));
    }
    float* mask = rec.masks.channel(static_cast<int>(b));
#pragma omp parallel for
    for (int k = imin[2]; k <= imax[2]; ++k) {
      for (int j = imin[1]; j <= imax[1]; ++j) {
        for (int i = imin[0]; i <= imax[0]; ++i) {
          const auto pr = project(line, g.to_world(i, j, k));
          if (!pr.inside_caps || pr.distance > bundle.radius_mm) continue;
          const std::size_t v = g.index(i, j, k);
          mask[v] = 1.0f;
          in_any[v] = 1;
          if (pr.distance < owner_distance[v]) {
            owner_distance[v] = pr.distance;
            owner_tangent[v] = pr.tangent;
          }
        }
      }
    }
  }

  const auto brain = dilate_cube(in_any, g, spec.brain_dilation);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t v = 0; v < nvox; ++v) {
    if (!brain[v]) continue;
    rec.brain_mask.values[v] = 1.0f;
    // Draw for every brain voxel so the stream does not depend on tube layout.
    Vec3 dir{normal(rng), normal(rng), normal(rng)};
    if (in_any[v]) {
      for (int a = 0; a < 3; ++a) rec.peaks.channel(a)[v] = static_cast<float>(owner_tangent[v][a]);
      continue;
    }
    const double len = norm(dir);
    if (len == 0.0 || spec.noise_sigma == 0.0) continue;
    for (int a = 0; a < 3; ++a) {
      rec.peaks.channel(a)[v] = static_cast<float>(spec.noise_sigma * dir[a] / len);
    }
  }
  return rec;
}

std::vector<Streamline> generate_streamlines(const PhantomSpec& spec, const std::string& bundle, int n,
                                             double jitter_sigma_mm, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorKind::invalid_argument, "streamline count must be >= 1");
  auto it = std::find_if(spec.bundles.begin(), spec.bundles.end(),
                         [&](const TubeBundle& b) { return b.name == bundle; });
  if (it == spec.bundles.end()) throw Error(ErrorKind::invalid_argument, "no phantom bundle '" + bundle + "'");
  // samples per control interval chosen for ~1 mm spacing along the base curve
  double span = 0.0;
  for (std::size_t i = 1; i < it->control_points.size(); ++i) {
    span += norm(sub(it->control_points[i], it->control_points[i - 1]));
  }
  const int per_segment = std::max(
      2, static_cast<int>(std::ceil(span / static_cast<double>(it->control_points.size() - 1))));
  std::mt19937_64 rng(seed);
  std::vector<Streamline> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    Streamline sl;
    sl.points = sample_centerline(jitter(it->control_points, jitter_sigma_mm, rng), per_segment);
    out.push_back(std::move(sl));
  }
  return out;
}

std::vector<CohortMember> generate_cohort(const PhantomSpec& base, const CohortOptions& options) {
  if (options.n_subjects < 1) throw Error(ErrorKind::invalid_argument, "cohort needs >= 1 subject");
  std::vector<CohortMember> out;
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int s = 0; s < options.n_subjects; ++s) {
    CohortMember m;
    m.spec = base;
    m.spec.seed = rng();
    for (auto& b : m.spec.bundles) {
      auto moved = jitter(b.control_points, options.control_jitter_mm, rng);
      // Stay inside the grid.
      for (auto& p : moved) {
        const Vec3 v = base.grid.to_voxel(p);
        for (int a = 0; a < 3; ++a) {
          const double clamped = std::clamp(v[a], 0.0, static_cast<double>(base.grid.shape[a] - 1));
          p[a] = base.grid.origin[a] + clamped * base.grid.voxel_size[a];
        }
      }
      b.control_points = std::move(moved);
    }
    std::vector<char> drop(m.spec.bundles.size(), 0);
    for (std::size_t b = 0; b < m.spec.bundles.size(); ++b) {
      auto it = options.drop_probability.find(m.spec.bundles[b].name);
      const double p = it != options.drop_probability.end() ? it->second : options.default_drop_probability;
      drop[b] = unit(rng) < p ? 1 : 0;
    }
    char id[16];
    std::snprintf(id, sizeof(id), "sub-%02d", s + 1);
    m.record = generate_subject(m.spec, id);
    for (std::size_t b = 0; b < drop.size(); ++b) {
      if (!drop[b]) continue;
      float* ch = m.record.masks.channel(static_cast<int>(b));
      std::fill(ch, ch + m.record.masks.grid.voxel_count(), 0.0f);
      m.record.masks.valid[b] = 0;
    }
    out.push_back(std::move(m));
  }
  return out;
}

PhantomSpec default_spec(std::uint64_t seed) {
  PhantomSpec s;
  s.grid = VoxelGrid({64, 64, 40}, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0});
  s.seed = seed;
  s.bundles = {
      {"CC_Body", {{12, 32, 20}, {22, 32, 25}, {32, 32, 27}, {42, 32, 25}, {52, 32, 20}}, 3.0},
      {"L_Pyramidal", {{20, 40, 4}, {19, 41, 20}, {20, 42, 36}}, 3.0},
      {"Fornix", {{44, 14, 10}, {46, 24, 13}, {45, 34, 16}, {44, 44, 13}}, 2.5},
  };
  return s;
}

PhantomSpec expert16_spec(std::uint64_t seed) {
  PhantomSpec s;
  s.grid = VoxelGrid({64, 64, 40}, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0});
  s.seed = seed;
  const auto& names = default_catalog().expert_16;
  // Short straight tubes on a 4x4 lattice, alternating orientation.
  for (int b = 0; b < 16; ++b) {
    const double cx = 8.0 + 16.0 * (b % 4);
    const double cy = 8.0 + 16.0 * (b / 4);
    const double cz = 12.0 + 2.0 * (b % 8);
    TubeBundle t;
    t.name = names[b];
    t.radius_mm = 2.0;
    switch (b % 3) {
      case 0: t.control_points = {{cx - 5, cy, cz}, {cx + 5, cy, cz}}; break;
      case 1: t.control_points = {{cx, cy - 5, cz}, {cx, cy + 5, cz}}; break;
      default: t.control_points = {{cx, cy, cz - 8}, {cx, cy, cz + 8}}; break;
    }
    s.bundles.push_back(std::move(t));
  }
  return s;
}

}  // namespace bundleseg::phantom
