#pragma once

#include "adassm/volume.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace adassm {

/// Real orthonormal spherical harmonics for l = 1..3, ordered (l, m = -l..l).
inline constexpr int kHarmonicCount = 15;
constexpr int harmonic_index(int l, int m) { return l * l - 1 + (m + l); }

/// Evaluate every harmonic at unit direction u.
std::array<double, kHarmonicCount> real_harmonics(const Vec3& u);

enum class GroupLabel { control, pathology };
std::string to_string(GroupLabel g);
GroupLabel group_from_string(const std::string& s);

/// Raised when parameters make the radius function non-positive or the
/// shape does not fit its grid.
class ShapeRejected : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ShapeParams {
  Vec3 radii{1.0, 1.0, 1.0};
  std::vector<double> bump_coeffs = std::vector<double>(kHarmonicCount, 0.0);
  GroupLabel group = GroupLabel::control;
  Vec3 rotation = Vec3::Zero();     // Euler angles (x, y, z), radians
  Vec3 translation = Vec3::Zero();  // world units

  bool operator==(const ShapeParams&) const = default;
};

void to_json(nlohmann::json& j, const ShapeParams& p);
void from_json(const nlohmann::json& j, ShapeParams& p);

/// Rotation matrix Rz * Ry * Rx of the pose.
Eigen::Matrix3d pose_rotation(const ShapeParams& p);

/// Star-shaped radius r(u) = ellipsoid(u) * (1 + sum c_lm Y_lm(u)) in the object frame.
double radius_function(const ShapeParams& p, const Vec3& u);

/// Throws ShapeRejected naming the offending radius or coefficient when the
/// radius function is not strictly positive.
void validate_params(const ShapeParams& p);

/// Spherical angle pair (theta = polar, phi = azimuth).
struct Angles {
  double theta;
  double phi;
};
Vec3 direction(const Angles& a);

/// Fixed Fibonacci-sphere anchor angles shared by every cohort member.
std::vector<Angles> anchor_angles(int m);

/// Surface points along the given object-frame directions, posed into world coordinates.
CorrespondenceSet surface_points(const ShapeParams& p, const std::vector<Angles>& angles);

/// Ground-truth correspondences: surface points at anchor_angles(m).
CorrespondenceSet generate_shape(const ShapeParams& p, int m);

/// Binary occupancy from the analytic implicit function. Requires a >= 2 voxel margin.
Volume voxelize(const ShapeParams& p, Dims dims, double spacing);

bool inside_shape(const ShapeParams& p, const Vec3& world);

struct TextureConfig {
  double foreground = 100.0;
  double background = 40.0;
  double contrast_jitter = 0.15;  // relative per-sample jitter of fg/bg
  double gradient_amplitude = 30.0;
  int blob_count = 4;
  double blob_intensity = 60.0;
  double blob_radius = 3.0;  // voxels
  double noise_std = 5.0;

  bool operator==(const TextureConfig&) const = default;
};

void to_json(nlohmann::json& j, const TextureConfig& t);
void from_json(const nlohmann::json& j, TextureConfig& t);

/// Voxel centres (i, j, k) of distractor blobs chosen by apply_texture for `seed`.
std::vector<std::array<int, 3>> blob_centers(const Volume& occupancy, const TextureConfig& cfg,
                                             std::uint64_t seed);

/// Texture an occupancy volume. Blobs are placed outside the mask and only
/// touch background voxels.
Volume apply_texture(const Volume& occupancy, const TextureConfig& cfg, std::uint64_t seed);

struct ShapeDistribution {
  Vec3 base_radii{11.0, 9.0, 8.0};
  double radius_jitter = 0.15;  // relative, uniform
  double bump_std = 0.04;
  int pathology_index = harmonic_index(2, 0);
  double pathology_threshold = 0.15;
  double pathology_fraction = 0.4;
  double pathology_amplitude = 0.3;   // centre of the pathology coefficient
  double rotation_jitter = 0.08;      // radians, uniform
  double translation_jitter = 1.5;    // world units, uniform

  bool operator==(const ShapeDistribution&) const = default;
};

void to_json(nlohmann::json& j, const ShapeDistribution& s);
void from_json(const nlohmann::json& j, ShapeDistribution& s);

struct CohortSpec {
  int n_samples = 60;
  Dims dims{48, 48, 48};
  double spacing = 1.0;
  int num_points = 128;
  TextureConfig texture;
  ShapeDistribution shapes;
  std::array<double, 3> splits{0.6, 0.2, 0.2};
  std::uint64_t seed = 1234;

  void validate() const;
  bool operator==(const CohortSpec&) const = default;
};

void to_json(nlohmann::json& j, const CohortSpec& s);
void from_json(const nlohmann::json& j, CohortSpec& s);

enum class Split { train, val, test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

GroupLabel label_for(const ShapeParams& p, const ShapeDistribution& dist);

struct GroundTruthSample {
  std::string id;
  Split split = Split::train;
  bool augmented = false;
  std::string source_id;  // training sample an augmented volume was warped from
  ShapeParams params;
  Volume volume;
  CorrespondenceSet correspondences;
};

/// Shape parameters for cohort member `index`; a pure function of (spec, index).
ShapeParams sample_params(const CohortSpec& spec, int index);

/// Cohort member `index` with params, textured volume and correspondences (split unset).
GroundTruthSample generate_sample(const CohortSpec& spec, int index);

/// Deterministic split assignment: train/val/test counts from the fractions.
std::vector<Split> assign_splits(const CohortSpec& spec);

struct Cohort {
  CohortSpec spec;
  std::vector<GroundTruthSample> samples;

  std::vector<const GroundTruthSample*> split(Split s) const;
};

Cohort generate_cohort(const CohortSpec& spec);

/// Writes manifest.json, vol_<id>.f32 and corr_<id>.particles.
void save_cohort(const Cohort& cohort, const std::filesystem::path& dir);
Cohort load_cohort(const std::filesystem::path& dir);

}  // namespace adassm
