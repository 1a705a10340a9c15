#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bundleseg/preprocess.hpp"
#include "bundleseg/tractometry.hpp"

namespace bundleseg::phantom {

struct TubeBundle {
  std::string name;
  std::vector<Vec3> control_points;  // mm, world space
  double radius_mm = 3.0;
};

struct PhantomSpec {
  VoxelGrid grid;
  std::vector<TubeBundle> bundles;
  double noise_sigma = 0.05;  // magnitude of background peak vectors
  int brain_dilation = 4;     // voxels around the bundle union
  std::uint64_t seed = 0;

  void validate() const;
};

/// Catmull-Rom curve through the control points (end points duplicated),
/// sampled with `samples_per_segment` steps per control-point interval.
std::vector<Vec3> sample_centerline(const std::vector<Vec3>& control_points,
                                    int samples_per_segment = 32);

/// Tube masks (flat-capped cylinders around the centreline), unit tangent
/// first peaks inside tubes, random background peaks of magnitude
/// noise_sigma inside the brain, zero elsewhere.
SubjectRecord generate_subject(const PhantomSpec& spec, const std::string& subject_id = "phantom");

/// `n` centrelines with Gaussian jitter on the control points, sampled at
/// roughly 1 mm spacing.
std::vector<Streamline> generate_streamlines(const PhantomSpec& spec, const std::string& bundle, int n,
                                             double jitter_sigma_mm, std::uint64_t seed);

struct CohortOptions {
  int n_subjects = 10;
  double control_jitter_mm = 1.5;
  double default_drop_probability = 0.0;
  std::map<std::string, double> drop_probability;  // per bundle, overrides the default
  std::uint64_t seed = 0;
};

struct CohortMember {
  PhantomSpec spec;  // the perturbed anatomy of this subject
  SubjectRecord record;
};

/// Subjects "sub-01", "sub-02", ... with seeded control-point perturbations.
/// A dropped bundle keeps its peaks but has an empty, invalid mask channel.
std::vector<CohortMember> generate_cohort(const PhantomSpec& base, const CohortOptions& options);

/// 64x64x40 at 1 mm with three non-touching tubes: CC_Body (left-right arch),
/// L_Pyramidal (inferior-superior), Fornix (anterior-posterior).
PhantomSpec default_spec(std::uint64_t seed = 0);

/// One tube per expert bundle name on the same grid, for 16/60-channel runs.
PhantomSpec expert16_spec(std::uint64_t seed = 0);

}  // namespace bundleseg::phantom
