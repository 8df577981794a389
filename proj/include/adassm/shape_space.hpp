#pragma once

#include "adassm/synthetic_cohort.hpp"
#include "adassm/volume.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace adassm {

/// Linear shape space over flattened correspondences.
struct PCAModel {
  Eigen::VectorXd mean;        // 3M
  Eigen::MatrixXd components;  // K x 3M, orthonormal rows
  Eigen::VectorXd eigenvalues; // K, descending
  double total_variance = 0.0;

  int num_components() const { return static_cast<int>(components.rows()); }
  int dimension() const { return static_cast<int>(mean.size()); }
  double explained_variance() const;

  Eigen::VectorXd project(const CorrespondenceSet& c) const;
};

/// Fit by SVD of the centred data. K is the smallest count reaching
/// `variance_threshold` of total variance (threshold 1.0 keeps the full rank),
/// optionally capped at `max_components`.
PCAModel fit_pca(const std::vector<CorrespondenceSet>& train, double variance_threshold = 0.95,
                 int max_components = -1);

CorrespondenceSet reconstruct_correspondences(const PCAModel& pca, const Eigen::VectorXd& scores);

void save_pca(const PCAModel& pca, const std::filesystem::path& dir);
PCAModel load_pca(const std::filesystem::path& dir);

/// Isotropic Gaussian KDE over PCA scores.
struct KDEModel {
  Eigen::MatrixXd training_scores;  // n x K
  double bandwidth = 0.0;
};

/// Mean nearest-neighbour distance among rows of `scores`.
double mean_nearest_neighbor_distance(const Eigen::MatrixXd& scores);

/// Bandwidth defaults to the mean nearest-neighbour distance; pass >= 0 to override.
KDEModel fit_kde(const Eigen::MatrixXd& scores, double bandwidth = -1.0);

/// n x K samples: a uniformly chosen training row plus N(0, bandwidth^2 I).
Eigen::MatrixXd sample_kde(const KDEModel& kde, int n, std::uint64_t seed);

/// Thin-plate spline R^3 -> R^3 interpolating displacements at control points
/// (kernel U(r) = r with an affine part).
class ThinPlateSpline {
 public:
  /// Fits f with f(src_i) = dst_i. Throws on coincident or degenerate control points.
  ThinPlateSpline(const CorrespondenceSet& src, const CorrespondenceSet& dst);

  Vec3 operator()(const Vec3& p) const;
  bool is_identity() const { return identity_; }

 private:
  Eigen::MatrixX3d centers_;
  Eigen::MatrixX3d weights_;  // kernel weights
  Eigen::Matrix<double, 4, 3> affine_;
  bool identity_ = false;
};

struct WarpOptions {
  double max_displacement_fraction = 0.25;  // of the largest grid extent
};

/// Dense inverse-warp field (voxel units per voxel, 3 x count) used by tps_warp.
std::vector<Vec3> warp_field(const Dims& dims, double spacing, const CorrespondenceSet& src,
                             const CorrespondenceSet& dst);

/// Resample `vol` so that structure at `src` moves to `dst`. Trilinear, border clamped.
Volume tps_warp(const Volume& vol, const CorrespondenceSet& src, const CorrespondenceSet& dst,
                const WarpOptions& opts = {});

struct KdeAugmentation {
  std::vector<GroundTruthSample> samples;
  Eigen::MatrixXd sampled_scores;     // n x K, row i generated samples[i]
  std::vector<std::string> source_ids;  // training volume warped for each sample
  PCAModel pca;
  KDEModel kde;
};

/// Offline KDE augmentation from the training split only: sample scores,
/// reconstruct correspondences, warp the nearest training volume onto them.
KdeAugmentation kde_augment(const Cohort& cohort, int n_aug, std::uint64_t seed,
                            double variance_threshold = 0.95);

}  // namespace adassm
