#pragma once

#include "adassm/synthetic_cohort.hpp"
#include "adassm/volume.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace adassm {

class ImageToSSMNetImpl;

/// Mean of the three per-axis RMSEs.
double axis_rmse(const CorrespondenceSet& pred, const CorrespondenceSet& gt);

/// sqrt((dx^2 + dy^2 + dz^2) / 3) for each point.
Eigen::VectorXd per_point_rmse(const CorrespondenceSet& pred, const CorrespondenceSet& gt);

struct SurfaceDistance {
  double mean = 0.0;             // mean over dense GT surface points of |warp(p) - p|
  Eigen::VectorXd per_vertex;    // one entry per dense surface point
  Eigen::MatrixX3d gt_surface;   // dense GT surface points
  double symmetric_nn = 0.0;     // symmetric mean nearest-point distance between the two surfaces
};

/// Dense GT surface (n_surface_pts points from the analytic shape) warped by
/// the TPS taking GT correspondences to predicted ones.
SurfaceDistance surface_distance(const CorrespondenceSet& pred, const GroundTruthSample& gt,
                                 int n_surface_pts = 2000);

/// 0.5 * (mean_a min_b |a - b| + mean_b min_a |a - b|).
double symmetric_nn_distance(const Eigen::MatrixX3d& a, const Eigen::MatrixX3d& b);

struct Selection {
  std::string best, median, worst;
};

/// By ascending score; median is element (n - 1) / 2. Ties broken by id.
Selection select_best_median_worst(const std::vector<std::pair<std::string, double>>& scores);

struct GroupDifference {
  Eigen::MatrixX3d vectors;      // mean(g1) - mean(g2) per point
  Eigen::VectorXd magnitudes;    // |vectors| / max |vectors| (zeros when all vanish)
  Eigen::MatrixX3d reference;    // mean of both groups, for overlay
  int argmax = 0;
};

GroupDifference group_difference(const std::vector<CorrespondenceSet>& g1,
                                 const std::vector<CorrespondenceSet>& g2);

/// Whether direction u lies where |Y_index(u)| >= fraction * max |Y_index|.
bool in_harmonic_support(int harmonic, const Vec3& u, double fraction = 0.5);

struct DownstreamOptions {
  int folds = 5;
  int hidden = 16;
  int epochs = 300;
  double lr = 1e-2;
  double variance_threshold = 0.95;
  std::uint64_t seed = 0;
};

struct DownstreamResult {
  std::vector<double> fold_accuracy;
  double mean = 0.0;
  double spread = 0.0;  // sample standard deviation over folds
};

/// Stratified k-fold: PCA fitted on the training fold, scores standardised,
/// one-hidden-layer MLP trained full batch with Adam.
DownstreamResult classify_downstream(const std::vector<CorrespondenceSet>& shapes,
                                     const std::vector<int>& labels, const DownstreamOptions& opts = {});

/// Same classifier on precomputed feature rows (no PCA step).
DownstreamResult classify_features(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                                   const DownstreamOptions& opts = {});

/// Stratified fold index per sample; throws when a class cannot fill the folds.
std::vector<int> stratified_folds(const std::vector<int>& labels, int folds, std::uint64_t seed);

struct SampleEvaluation {
  std::string id;
  GroupLabel group = GroupLabel::control;
  double rmse = 0.0;
  double surface = 0.0;
  double surface_nn = 0.0;
  Eigen::VectorXd per_point;
  Eigen::MatrixX3d surface_points;
  Eigen::VectorXd surface_per_vertex;
};

struct EvalReport {
  std::string run;
  std::vector<SampleEvaluation> samples;
  double mean_rmse = 0.0;
  double median_rmse = 0.0;
  double mean_surface = 0.0;
  double median_surface = 0.0;
  Selection selection;
  std::optional<DownstreamResult> downstream;
};

nlohmann::json to_json(const EvalReport& r);

/// Metrics of `model` on every sample of the given split.
EvalReport evaluate_model(ImageToSSMNetImpl& model, const Cohort& cohort, Split split = Split::test,
                          int n_surface_pts = 2000);

/// Predicted correspondences for a list of samples.
std::vector<CorrespondenceSet> predict_all(ImageToSSMNetImpl& model,
                                           const std::vector<const GroundTruthSample*>& samples);

/// eval_report.json plus heatmap_<id>.csv (x,y,z,distance per dense surface point).
void write_eval_outputs(const EvalReport& r, const std::filesystem::path& dir);

/// groupdiff.csv: point, reference xyz, difference vector, normalised magnitude.
std::string groupdiff_csv(const GroupDifference& g);

}  // namespace adassm
