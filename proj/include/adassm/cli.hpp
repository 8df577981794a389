#pragma once

#include "adassm/evaluation.hpp"
#include "adassm/report.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace adassm {

/// Exit codes: 0 success, 1 usage error, 2 runtime failure.
int run_cli(int argc, const char* const* argv);

/// Loads <run>/checkpoint, evaluates the split and writes eval_report.json and heatmaps into the run directory.
EvalReport evaluate_run(const std::filesystem::path& run_dir, const Cohort& cohort, Split split = Split::test,
                        int n_surface_pts = 2000);

struct DownstreamReport {
  DownstreamResult accuracy;
  GroupDifference difference;
  bool argmax_in_support = false;
};

/// Classifies pathology vs control from the run's predicted correspondences on
/// every original (non-augmented) cohort sample; writes downstream.json and groupdiff.csv.
DownstreamReport downstream_run(const std::filesystem::path& run_dir, const Cohort& cohort,
                                const DownstreamOptions& opts = {});

struct MatrixOptions {
  std::optional<std::uint64_t> seed;  // replaces every run's seed
  bool evaluate = true;
  int surface_points = 2000;
};

/// Trains (and evaluates) each run into out_dir/runs/<name>, then emits out_dir/report.
ReportResult run_matrix(const ExperimentMatrix& matrix, const Cohort& cohort, const std::filesystem::path& out_dir,
                        const MatrixOptions& opts = {});

}  // namespace adassm
