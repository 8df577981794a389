#include "adassm/cli.hpp"

#include "adassm/shape_space.hpp"
#include "adassm/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <iostream>
#include <stdexcept>

namespace adassm {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json(const fs::path& p) {
  if (!fs::exists(p)) throw std::runtime_error("file not found: " + p.string());
  try {
    return json::parse(read_text(p));
  } catch (const json::parse_error& e) {
    throw std::runtime_error("invalid JSON in " + p.string() + ": " + e.what());
  }
}

std::string run_name(const fs::path& dir) {
  auto n = dir.filename().string();
  return n.empty() ? dir.parent_path().filename().string() : n;
}

TrainConfig load_train_config(const fs::path& path, const CohortSpec& spec, std::optional<std::uint64_t> seed) {
  auto cfg = read_json(path).get<TrainConfig>();
  apply_seed_override(cfg);
  if (seed) cfg.seed = *seed;
  fit_config_to_cohort(cfg, spec);
  return cfg;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path q(p);
  return q.is_absolute() ? q : base / q;
}

}  // namespace

EvalReport evaluate_run(const fs::path& run_dir, const Cohort& cohort, Split split, int n_surface_pts) {
  auto nets = load_networks(run_dir / "checkpoint");
  auto report = evaluate_model(*nets.model, cohort, split, n_surface_pts);
  report.run = run_name(run_dir);
  write_eval_outputs(report, run_dir);
  return report;
}

DownstreamReport downstream_run(const fs::path& run_dir, const Cohort& cohort, const DownstreamOptions& opts) {
  auto nets = load_networks(run_dir / "checkpoint");
  std::vector<const GroundTruthSample*> samples;
  for (const auto& s : cohort.samples) {
    if (!s.augmented) samples.push_back(&s);
  }
  const auto preds = predict_all(*nets.model, samples);
  std::vector<int> labels;
  std::vector<CorrespondenceSet> patho, control;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const bool p = samples[i]->params.group == GroupLabel::pathology;
    labels.push_back(p ? 1 : 0);
    (p ? patho : control).push_back(preds[i]);
  }
  DownstreamReport r;
  r.accuracy = classify_downstream(preds, labels, opts);
  r.difference = group_difference(patho, control);
  const auto angles = anchor_angles(cohort.spec.num_points);
  r.argmax_in_support = in_harmonic_support(cohort.spec.shapes.pathology_index,
                                            direction(angles[static_cast<std::size_t>(r.difference.argmax)]));
  write_text(run_dir / "groupdiff.csv", groupdiff_csv(r.difference));
  write_text(run_dir / "downstream.json", json{{"accuracy_mean", r.accuracy.mean},
                                               {"accuracy_spread", r.accuracy.spread},
                                               {"fold_accuracy", r.accuracy.fold_accuracy},
                                               {"n_samples", samples.size()},
                                               {"n_pathology", patho.size()},
                                               {"groupdiff_argmax_point", r.difference.argmax},
                                               {"groupdiff_argmax_in_support", r.argmax_in_support}}
                                                  .dump(2) +
                                              "\n");
  return r;
}

ReportResult run_matrix(const ExperimentMatrix& matrix, const Cohort& cohort, const fs::path& out_dir,
                        const MatrixOptions& opts) {
  matrix.validate();
  std::vector<fs::path> dirs;
  for (const auto& run : matrix.runs) {
    TrainConfig cfg = run.config;
    if (opts.seed) cfg.seed = *opts.seed;
    fit_config_to_cohort(cfg, cohort.spec);
    const auto dir = out_dir / "runs" / run.name;
    std::cerr << "[matrix] " << run.name << " (" << to_string(cfg.mode) << ", " << cfg.epochs << " epochs)\n";
    train(cfg, cohort, dir);
    if (opts.evaluate) evaluate_run(dir, cohort, Split::test, opts.surface_points);
    dirs.push_back(dir);
  }
  return emit_report(dirs, out_dir / "report");
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Adversarial augmentation for image-to-shape-model regression on synthetic cohorts"};
  app.require_subcommand(1);

  std::string spec_path, out, cohort_dir, config_path, run_dir, split_name = "test";
  std::vector<std::string> run_dirs;
  std::uint64_t seed = 0;
  int factor = 3, folds = 5, surface_points = 2000;

  auto* gen = app.add_subcommand("generate", "Generate a synthetic cohort");
  gen->add_option("--spec", spec_path, "Cohort spec JSON (defaults when omitted)");
  gen->add_option("--out", out, "Output cohort directory")->required();
  auto* gen_seed = gen->add_option("--seed", seed, "Override the spec seed");

  auto* tr = app.add_subcommand("train", "Train one configuration");
  tr->add_option("--config", config_path, "Training config JSON")->required();
  tr->add_option("--cohort", cohort_dir, "Cohort directory")->required();
  tr->add_option("--out", out, "Run output directory")->required();
  auto* tr_seed = tr->add_option("--seed", seed, "Override the config seed");

  auto* aug = app.add_subcommand("augment", "Offline KDE augmentation of a cohort");
  aug->add_option("--cohort", cohort_dir, "Cohort directory")->required();
  aug->add_option("--out", out, "Augmented cohort directory")->required();
  aug->add_option("--factor", factor, "Augmented samples per training sample")->check(CLI::PositiveNumber);
  auto* aug_seed = aug->add_option("--seed", seed, "Sampling seed");

  auto* ev = app.add_subcommand("evaluate", "Evaluate a trained run");
  ev->add_option("--run", run_dir, "Run directory")->required();
  ev->add_option("--cohort", cohort_dir, "Cohort directory")->required();
  ev->add_option("--split", split_name, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--surface-points", surface_points, "Dense surface samples")->check(CLI::PositiveNumber);

  auto* ds = app.add_subcommand("downstream", "Group classification and group difference");
  ds->add_option("--run", run_dir, "Run directory")->required();
  ds->add_option("--cohort", cohort_dir, "Cohort directory")->required();
  ds->add_option("--folds", folds, "Cross-validation folds")->check(CLI::Range(2, 100));
  auto* ds_seed = ds->add_option("--seed", seed, "Fold and classifier seed");

  auto* mx = app.add_subcommand("matrix", "Run the experiment matrix and report");
  mx->add_option("--config", config_path, "Matrix JSON")->required();
  mx->add_option("--out", out, "Output directory (overrides the config)");
  auto* mx_seed = mx->add_option("--seed", seed, "Seed for every run");

  auto* rp = app.add_subcommand("report", "Emit comparison report from run directories");
  rp->add_option("--runs", run_dirs, "Run directories")->required();
  rp->add_option("--out", out, "Report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      CohortSpec spec = spec_path.empty() ? CohortSpec{} : read_json(spec_path).get<CohortSpec>();
      if (*gen_seed) spec.seed = seed;
      spec.validate();
      const auto cohort = generate_cohort(spec);
      save_cohort(cohort, out);
      std::cout << "wrote " << cohort.samples.size() << " samples to " << out << "\n";
    } else if (tr->parsed()) {
      const auto cohort = load_cohort(cohort_dir);
      const auto cfg = load_train_config(config_path, cohort.spec,
                                         *tr_seed ? std::optional<std::uint64_t>(seed) : std::nullopt);
      const auto r = train(cfg, cohort, fs::path(out));
      std::cout << "best epoch " << r.best_epoch << ", validation RMSE " << r.best_val_rmse << "\n";
    } else if (aug->parsed()) {
      const auto cohort = load_cohort(cohort_dir);
      TrainConfig cfg;
      cfg.kde_factor = factor;
      if (*aug_seed) cfg.seed = seed;
      const auto t0 = std::chrono::steady_clock::now();
      const auto r = build_kde_cohort(cfg, cohort);
      save_cohort(r.augmented, out);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      write_text(fs::path(out) / "augment_summary.json",
                 json{{"factor", factor},
                      {"n_augmented", r.sampled_scores.rows()},
                      {"pca_components", r.pca.num_components()},
                      {"augmentation_seconds", secs}}
                         .dump(2) +
                     "\n");
      std::cout << "wrote " << r.augmented.samples.size() << " samples (" << r.sampled_scores.rows()
                << " augmented) to " << out << "\n";
    } else if (ev->parsed()) {
      const auto cohort = load_cohort(cohort_dir);
      const auto r = evaluate_run(run_dir, cohort, split_from_string(split_name), surface_points);
      std::cout << "mean RMSE " << r.mean_rmse << ", mean surface distance " << r.mean_surface << "\n";
    } else if (ds->parsed()) {
      const auto cohort = load_cohort(cohort_dir);
      DownstreamOptions opts;
      opts.folds = folds;
      if (*ds_seed) opts.seed = seed;
      const auto r = downstream_run(run_dir, cohort, opts);
      std::cout << "accuracy " << r.accuracy.mean << " +- " << r.accuracy.spread << "\n";
    } else if (mx->parsed()) {
      const auto j = read_json(config_path);
      const fs::path base = fs::path(config_path).parent_path();
      fs::path out_dir = !out.empty() ? fs::path(out) : resolve(base, j.value("out", std::string("matrix_out")));
      Cohort cohort;
      if (j.contains("cohort")) {
        cohort = load_cohort(resolve(base, j.at("cohort").get<std::string>()));
      } else {
        cohort = generate_cohort(j.value("cohort_spec", json::object()).get<CohortSpec>());
        save_cohort(cohort, out_dir / "cohort");
      }
      MatrixOptions opts;
      if (*mx_seed) opts.seed = seed;
      if (j.contains("seed") && !opts.seed) opts.seed = j.at("seed").get<std::uint64_t>();
      opts.evaluate = j.value("evaluate", true);
      opts.surface_points = j.value("surface_points", 2000);
      const auto r = run_matrix(matrix_from_json(j), cohort, out_dir, opts);
      for (const auto& w : r.warnings) std::cerr << "[warn] " << w << "\n";
      std::cout << "report written to " << (out_dir / "report").string() << "\n";
    } else if (rp->parsed()) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      const auto r = emit_report(dirs, out);
      for (const auto& w : r.warnings) std::cerr << "[warn] " << w << "\n";
      std::cout << "report for " << r.runs.size() << " runs written to " << out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace adassm
