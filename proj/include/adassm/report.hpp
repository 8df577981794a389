#pragma once

#include "adassm/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace adassm {

struct RunEntry {
  std::string name;
  TrainConfig config;
};

/// Named training runs sharing one cohort.
struct ExperimentMatrix {
  std::vector<RunEntry> runs;

  void validate() const;  // unique, filesystem-safe names
};

/// NoAug, Gaussian sigma 1 and 10, KDE, ADASSM and its BC / PC / BC+PC variants,
/// each starting from `base` (a partial training config).
ExperimentMatrix default_matrix(const nlohmann::json& base);

/// {"base": {...}, "runs": [{"name": ..., "config": {...}}]}; runs default to default_matrix.
ExperimentMatrix matrix_from_json(const nlohmann::json& j);

struct RunSummary {
  std::string name;
  std::string mode;
  bool has_eval = false;
  double mean_rmse = 0.0;
  double median_rmse = 0.0;
  double mean_surface = 0.0;
  double median_surface = 0.0;
  std::string best, median, worst;
  bool has_timing = false;
  double offline_augmentation_seconds = 0.0;
  double on_the_fly_augmentation_seconds = 0.0;  // already inside training_seconds
  double training_seconds = 0.0;
  double total_seconds = 0.0;
};

/// Reads eval_report.json and summary.json of a run directory; missing files are reported in `warnings`.
RunSummary read_run(const std::filesystem::path& run_dir, std::vector<std::string>& warnings);

struct BarChart {
  std::string title;
  std::string axis_label;
  std::vector<std::pair<std::string, double>> bars;
};

/// Deterministic SVG; every bar rect carries data-run, data-value and the
/// chart's data-scale (pixels per unit) so heights can be parsed back.
std::string bar_chart_svg(const BarChart& chart);

std::string comparison_csv(const std::vector<RunSummary>& runs);
/// total_seconds = offline_augmentation_seconds + training_seconds on every row.
std::string timing_csv(const std::vector<RunSummary>& runs);

struct ReportResult {
  std::vector<RunSummary> runs;
  std::vector<std::string> warnings;
};

/// comparison.csv, rmse.svg, surface.svg, timing.csv, heatmaps/<run>_{best,median,worst}.csv
/// and warnings.txt under `out_dir`. Runs are ordered by name.
ReportResult emit_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir);

}  // namespace adassm
