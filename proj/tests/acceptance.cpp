// Acceptance checks 1-11. Usage: acceptance [properties|training|all]
// Prints one PASS/FAIL line per criterion; exit status is non-zero on any failure.

#include "adassm/cli.hpp"
#include "adassm/trainer.hpp"

#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <iostream>
#include <random>
#include <sstream>

using namespace adassm;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

const Cohort& default_cohort() {
  static const Cohort c = generate_cohort(CohortSpec{});
  return c;
}

fs::path scratch() {
  static const fs::path p = [] {
    auto d = fs::temp_directory_path() / "adassm_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

torch::Tensor rows_tensor(const std::vector<oracle::Field>& rows, std::vector<int64_t> shape) {
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  shape.insert(shape.begin(), static_cast<int64_t>(rows.size()));
  return torch::tensor(flat, torch::kFloat64).view(shape);
}

CorrespondenceSet as_set(const oracle::Field& f) {
  CorrespondenceSet c(static_cast<int>(f.size() / 3));
  for (std::size_t i = 0; i < f.size(); ++i) {
    c.points(static_cast<Eigen::Index>(i / 3), static_cast<Eigen::Index>(i % 3)) = f[i];
  }
  return c;
}

// 1 -------------------------------------------------------------------------
Outcome gradient_reversal() {
  const auto t0 = Clock::now();
  // micro generator: noise = tanh(G z); micro model: points = x_hat W
  torch::manual_seed(11);
  const double range = 3.0, lambda = 0.6;
  const auto z = torch::randn({5}, torch::kFloat64);
  const auto x = torch::randn({4, 3}, torch::kFloat64);
  const auto w = torch::randn({3, 3}, torch::kFloat64);
  const auto y = torch::randn({4, 3}, torch::kFloat64);
  const auto g0 = torch::randn({4, 5}, torch::kFloat64) * 0.3;
  auto loss = [&](const torch::Tensor& g, bool reverse) {
    auto x_hat = x + range * torch::tanh(torch::matmul(g, z)).unsqueeze(1);
    if (reverse) x_hat = grad_reverse(x_hat, lambda);
    return rmse_loss(torch::matmul(x_hat, w), y);
  };
  auto grad = [&](bool reverse) {
    auto g = g0.clone().requires_grad_(true);
    loss(g, reverse).backward();
    return g.grad().contiguous();
  };
  const auto plain = grad(false), reversed = grad(true);
  oracle::Field flat(static_cast<std::size_t>(g0.numel()));
  std::copy(g0.data_ptr<double>(), g0.data_ptr<double>() + g0.numel(), flat.begin());
  auto scalar = [&](const oracle::Field& v) {
    return loss(torch::tensor(v, torch::kFloat64).view({4, 5}), false).item<double>();
  };
  double worst_fd = 0.0, worst_sign = 0.0;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double fd = oracle::central_difference(scalar, flat, i, 1e-6);
    const double r = reversed.data_ptr<double>()[i], p = plain.data_ptr<double>()[i];
    const double scale = std::max(std::abs(lambda * fd), 1e-10);
    worst_fd = std::max(worst_fd, std::abs(r + lambda * fd) / scale);
    worst_sign = std::max(worst_sign, std::abs(r + lambda * p) / std::max(std::abs(lambda * p), 1e-10));
  }
  const double secs = seconds_since(t0);
  return {worst_fd <= 1e-3 && worst_sign <= 1e-3 && secs < 10.0,
          fmt("max rel err vs finite differences %.2e, vs -lambda*unreversed %.2e, %.2f s", worst_fd, worst_sign, secs)};
}

// 2 -------------------------------------------------------------------------
Outcome loss_oracles() {
  std::mt19937_64 rng(2024);
  const int trials = 100;
  double e_tv = 0, e_rmse = 0, e_axis = 0, e_point = 0, e_gan = 0, e_con = 0;
  for (int t = 0; t < trials; ++t) {
    const int b = 1 + t % 4, m = 1 + t % 9;
    std::vector<oracle::Field> fields, pred, gt;
    for (int i = 0; i < b; ++i) {
      fields.push_back(oracle::random_field(rng, 2 * 3 * 2));
      pred.push_back(oracle::random_field(rng, static_cast<std::size_t>(3 * m), -5, 5));
      gt.push_back(oracle::random_field(rng, static_cast<std::size_t>(3 * m), -5, 5));
    }
    e_tv = std::max(e_tv, std::abs(tv_loss(rows_tensor(fields, {1, 2, 3, 2})).item<double>() - oracle::noise_norm(fields)));
    e_rmse = std::max(e_rmse, std::abs(rmse_loss(rows_tensor(pred, {m, 3}), rows_tensor(gt, {m, 3})).item<double>() -
                                       oracle::rmse_batch(pred, gt)));
    e_axis = std::max(e_axis, std::abs(axis_rmse(as_set(pred[0]), as_set(gt[0])) - oracle::per_axis_rmse_mean(pred[0], gt[0])));
    const auto pp = per_point_rmse(as_set(pred[0]), as_set(gt[0]));
    const auto op = oracle::per_point(pred[0], gt[0]);
    for (std::size_t i = 0; i < op.size(); ++i) e_point = std::max(e_point, std::abs(pp(static_cast<Eigen::Index>(i)) - op[i]));

    const auto dr = oracle::random_field(rng, static_cast<std::size_t>(b), 0.01, 0.99);
    const auto dn = oracle::random_field(rng, static_cast<std::size_t>(1 + t % 3), 0.01, 0.99);
    const double beta = oracle::random_field(rng, 1, 0, 1)[0], tv = oracle::random_field(rng, 1, 0, 10)[0];
    const auto o = oracle::gan(dr, dn, beta, tv);
    const auto g = gan_losses(torch::tensor(dr, torch::kFloat64), torch::tensor(dn, torch::kFloat64), beta,
                              torch::tensor(tv, torch::kFloat64));
    e_gan = std::max({e_gan, std::abs(g.discriminator.item<double>() - o.d), std::abs(g.generator.item<double>() - o.g)});

    const int n = 2 + t % 5, d = 1 + t % 7;
    std::vector<oracle::Field> c, z;
    for (int i = 0; i < n; ++i) {
      c.push_back(oracle::random_field(rng, static_cast<std::size_t>(d)));
      z.push_back(oracle::random_field(rng, static_cast<std::size_t>(d)));
    }
    e_con = std::max(e_con, std::abs(contrastive_loss(rows_tensor(c, {d}), rows_tensor(z, {d})).item<double>() -
                                     oracle::contrastive(c, z)));
  }
  double e_logn = 0.0;
  for (int n = 2; n <= 16; ++n) {
    auto e = torch::full({n, 6}, 0.7, torch::kFloat64);
    e_logn = std::max(e_logn, std::abs(contrastive_loss(e, e).item<double>() - std::log(double(n))));
  }
  const double worst = std::max({e_tv, e_rmse, e_axis, e_point, e_gan, e_con, e_logn});
  std::ostringstream os;
  os << trials << " random cases each; max abs err tv " << e_tv << ", rmse " << e_rmse << ", axis " << e_axis
     << ", per-point " << e_point << ", gan " << e_gan << ", contrastive " << e_con << ", log N " << e_logn;
  return {worst <= 1e-6, os.str()};
}

// 3 -------------------------------------------------------------------------
Outcome noise_bound() {
  const auto& cohort = default_cohort();
  GeneratorConfig gcfg;
  gcfg.input = cohort.spec.dims;
  torch::manual_seed(3);
  NoiseGenerator gen(gcfg);
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> uscale(0.1, 20.0), urange(0.5, 500.0);
  const auto train = cohort.split(Split::train);
  double worst_ratio = 0.0;
  torch::NoGradGuard guard;
  for (int trial = 0; trial < 1000; ++trial) {
    const double s = uscale(rng);
    for (auto& p : gen->parameters()) p.normal_(0.0, s * 0.1);
    const auto* sample = train[static_cast<std::size_t>(trial) % train.size()];
    auto x = volume_tensor({&sample->volume}) * uscale(rng) + torch::randn({1, 1, 1, 1, 1}) * 50;
    const double range = urange(rng);
    const auto noise = gen->forward(torch::randn({1, gcfg.latent_dim}) * s, x);
    const auto xd = x.to(torch::kFloat64);
    const auto x_hat = apply_noise(xd, noise.to(torch::kFloat64), range);
    worst_ratio = std::max(worst_ratio, (x_hat - xd).abs().max().item<double>() / range);
  }

  // Targets of adversarial samples: the training step never alters ground truth.
  auto cfg = preset_config("desk", Mode::adassm_bc_pc);
  fit_config_to_cohort(cfg, cohort.spec);
  torch::AutoGradMode enable(true);
  TrainingState st(cfg, make_networks(cfg));
  std::vector<CorrespondenceSet> before;
  for (const auto* s : train) before.push_back(s->correspondences);
  for (std::size_t i = 0; i + 4 <= train.size() && i < 16; i += 4) train_step(st, {train.begin() + i, train.begin() + i + 4});
  bool identical = true;
  for (std::size_t i = 0; i < train.size(); ++i) identical = identical && train[i]->correspondences == before[i];

  // float rounding of x + R*n can exceed R*|n| by one ulp of |x| + R
  return {worst_ratio <= 1.0 + 1e-9 && identical,
          fmt("1000 states: max |x_hat - x| / R = %.12f; ground truth unchanged: ", worst_ratio) +
              (identical ? "yes" : "no")};
}

// 4 -------------------------------------------------------------------------
Outcome kde_statistics() {
  const auto train = default_cohort().split(Split::train);
  std::vector<CorrespondenceSet> corrs;
  for (const auto* s : train) corrs.push_back(s->correspondences);
  const auto pca = fit_pca(corrs, 0.95);
  Eigen::MatrixXd scores(static_cast<Eigen::Index>(corrs.size()), pca.num_components());
  for (std::size_t i = 0; i < corrs.size(); ++i) scores.row(static_cast<Eigen::Index>(i)) = pca.project(corrs[i]).transpose();
  const auto kde = fit_kde(scores);
  const int n = 100000;
  const auto s = sample_kde(kde, n, 4);
  double worst_se = 0.0, worst_var = 0.0;
  for (int k = 0; k < scores.cols(); ++k) {
    const double mu = scores.col(k).mean();
    const double var_train = (scores.col(k).array() - mu).square().mean();
    const double expected = var_train + kde.bandwidth * kde.bandwidth;
    const double m = s.col(k).mean();
    const double v = (s.col(k).array() - m).square().sum() / (n - 1);
    worst_se = std::max(worst_se, std::abs(m - mu) / std::sqrt(expected / n));
    worst_var = std::max(worst_var, std::abs(v - expected) / expected);
  }
  return {worst_se <= 3.0 && worst_var <= 0.05,
          fmt("%.0f components, bandwidth %.4f: max mean deviation %.2f SE, max variance error %.2f%%",
              double(scores.cols()), kde.bandwidth, worst_se, 100 * worst_var)};
}

// 5 -------------------------------------------------------------------------
Outcome pca_tps_roundtrip() {
  const auto& cohort = default_cohort();
  const auto train = cohort.split(Split::train);
  std::vector<CorrespondenceSet> corrs;
  for (const auto* s : train) corrs.push_back(s->correspondences);
  const auto pca = fit_pca(corrs, 1.0);
  double worst_rec = 0.0;
  for (const auto& c : corrs) {
    worst_rec = std::max(worst_rec, (reconstruct_correspondences(pca, pca.project(c)).points - c.points).cwiseAbs().maxCoeff());
  }

  const auto& s = *train[0];
  const bool identity = tps_warp(s.volume, s.correspondences, s.correspondences) == s.volume;
  auto dst = s.correspondences;
  dst.points.col(0).array() += 2.0 * s.volume.spacing;
  const auto w = tps_warp(s.volume, s.correspondences, dst);
  double worst_shift = 0.0;
  const auto d = s.volume.dims;
  for (int k = 2; k < d.z - 2; ++k) {
    for (int j = 2; j < d.y - 2; ++j) {
      for (int i = 4; i < d.x - 2; ++i) {
        worst_shift = std::max(worst_shift, double(std::abs(w.at(i, j, k) - s.volume.at(i - 2, j, k))));
      }
    }
  }
  return {worst_rec <= 1e-6 && identity && worst_shift <= 1e-4,
          fmt("full rank K=%.0f: max reconstruction err %.2e; translation max interior err %.2e; identity warp ",
              double(pca.num_components()), worst_rec, worst_shift) +
              (identity ? "exact" : "NOT exact")};
}

// 6 -------------------------------------------------------------------------
Outcome metric_identities() {
  const auto& cohort = default_cohort();
  std::mt19937_64 rng(6);
  double worst_mse = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto a = oracle::random_field(rng, 3 * (1 + static_cast<std::size_t>(t) % 40), -3, 3);
    const auto b = oracle::random_field(rng, a.size(), -3, 3);
    double overall = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) overall += (a[i] - b[i]) * (a[i] - b[i]);
    overall /= static_cast<double>(a.size());
    const double via_points = per_point_rmse(as_set(a), as_set(b)).array().square().mean();
    worst_mse = std::max(worst_mse, std::abs(via_points - overall) / overall);
  }
  double worst_zero = 0.0, worst_shift = 0.0;
  for (const auto* s : cohort.split(Split::test)) {
    worst_zero = std::max(worst_zero, surface_distance(s->correspondences, *s).mean);
    auto moved = s->correspondences;
    moved.points.col(0).array() += 1.0;
    worst_shift = std::max(worst_shift, std::abs(surface_distance(moved, *s).mean - 1.0));
  }
  return {worst_mse <= 1e-12 && worst_zero == 0.0 && worst_shift <= 0.02,
          fmt("per-point MSE identity rel err %.1e; surface(pred=gt) max %.1e; unit translation max deviation %.2f%%",
              worst_mse, worst_zero, 100 * worst_shift)};
}

// 7 -------------------------------------------------------------------------
Outcome overfit() {
  const auto t0 = Clock::now();
  CohortSpec spec;
  spec.n_samples = 10;
  spec.splits = {0.8, 0.1, 0.1};
  const auto cohort = generate_cohort(spec);
  auto cfg = preset_config("desk", Mode::noaug);
  cfg.epochs = 300;
  fit_config_to_cohort(cfg, spec);
  torch::manual_seed(cfg.seed);
  TrainingState st(cfg, make_networks(cfg));
  const auto train_set = cohort.split(Split::train);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    train_step(st, {train_set.begin(), train_set.begin() + 4});
    train_step(st, {train_set.begin() + 4, train_set.end()});
  }
  const double rmse = evaluate_rmse(*st.nets().model, train_set);
  const double secs = seconds_since(t0);
  return {rmse < 0.5 && secs < 900,
          fmt("%.0f training samples, %.0f epochs: training RMSE %.3f voxel, %.0f s", double(train_set.size()),
              double(cfg.epochs), rmse, secs)};
}

// 8, 9 ------------------------------------------------------------------------
struct HeadlineRuns {
  std::map<std::string, std::vector<double>> test_rmse;
  Networks pc_nets;  // ADASSM+PC, first seed
  double seconds = 0.0;
};

HeadlineRuns& headline() {
  static HeadlineRuns h = [] {
    HeadlineRuns out;
    const auto t0 = Clock::now();
    const auto& cohort = default_cohort();
    for (const auto& [name, mode] : std::vector<std::pair<std::string, Mode>>{
             {"noaug", Mode::noaug}, {"gaussian_s1", Mode::gaussian}, {"adassm_pc", Mode::adassm_pc}}) {
      for (std::uint64_t seed : {0, 1, 2}) {
        auto cfg = preset_config("desk", mode);
        cfg.gaussian_sigma = 1.0;
        cfg.seed = seed;
        fit_config_to_cohort(cfg, cohort.spec);
        Networks nets = make_networks(cfg);
        train(cfg, cohort, nets);
        const auto rep = evaluate_model(*nets.model, cohort, Split::test, 500);
        out.test_rmse[name].push_back(rep.mean_rmse);
        std::cerr << "  " << name << " seed " << seed << ": test RMSE " << rep.mean_rmse << "\n";
        if (mode == Mode::adassm_pc && seed == 0) out.pc_nets = nets;
      }
    }
    out.seconds = seconds_since(t0);
    return out;
  }();
  return h;
}

Outcome headline_claim() {
  auto& h = headline();
  const double pc = median(h.test_rmse["adassm_pc"]);
  const double noaug = median(h.test_rmse["noaug"]);
  const double gauss = median(h.test_rmse["gaussian_s1"]);
  return {pc <= noaug && pc <= gauss && h.seconds < 7200,
          fmt("median test RMSE over 3 seeds: ADASSM+PC %.4f, NoAug %.4f, Gaussian(1) %.4f; %.0f s", pc, noaug, gauss,
              h.seconds)};
}

Outcome downstream() {
  auto& h = headline();
  const auto& cohort = default_cohort();
  std::vector<const GroundTruthSample*> samples;
  for (const auto& s : cohort.samples) samples.push_back(&s);
  const auto preds = predict_all(*h.pc_nets.model, samples);
  std::vector<int> labels;
  std::vector<CorrespondenceSet> patho, control;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const bool p = samples[i]->params.group == GroupLabel::pathology;
    labels.push_back(p);
    (p ? patho : control).push_back(preds[i]);
  }
  const auto acc = classify_downstream(preds, labels);
  const auto diff = group_difference(patho, control);
  const auto angles = anchor_angles(cohort.spec.num_points);
  const bool in_support = in_harmonic_support(cohort.spec.shapes.pathology_index,
                                              direction(angles[static_cast<std::size_t>(diff.argmax)]));
  return {acc.mean >= 0.80 && in_support,
          fmt("%.0f samples (%.0f pathology): accuracy %.3f +- %.3f", double(samples.size()), double(patho.size()),
              acc.mean, acc.spread) +
              "; group-difference argmax point " + std::to_string(diff.argmax) +
              (in_support ? " inside" : " outside") + " the pathology support"};
}

// 10 ------------------------------------------------------------------------
Outcome timing() {
  const auto& cohort = default_cohort();
  ExperimentMatrix m;
  for (const auto& [name, mode] : std::vector<std::pair<std::string, Mode>>{{"kde", Mode::kde_offline},
                                                                            {"adassm", Mode::adassm}}) {
    m.runs.push_back({name, preset_config("desk", mode)});
  }
  MatrixOptions opts;
  opts.surface_points = 200;
  const auto out = scratch() / "timing";
  const auto r = run_matrix(m, cohort, out, opts);
  double kde = -1, ada = -1, kde_aug = 0, kde_train = 0;
  for (const auto& s : r.runs) {
    if (s.name == "kde") {
      kde = s.total_seconds;
      kde_aug = s.offline_augmentation_seconds;
      kde_train = s.training_seconds;
    }
    if (s.name == "adassm") ada = s.total_seconds;
  }
  return {ada > 0 && kde > 0 && ada < kde,
          fmt("same %.0f-epoch budget: ADASSM total %.1f s vs offline KDE %.1f s (augmentation %.1f + training ",
              double(preset_config("desk", Mode::adassm).epochs), ada, kde, kde_aug) +
              fmt("%.1f s)", kde_train)};
}

// 11 ------------------------------------------------------------------------
Outcome determinism() {
  CohortSpec spec;
  spec.n_samples = 12;
  const auto cohort_dir = scratch() / "det_cohort";
  save_cohort(generate_cohort(spec), cohort_dir);
  const auto cfg_path = scratch() / "det_config.json";
  write_text(cfg_path, nlohmann::json{{"mode", "adassm_bc_pc"}, {"epochs", 3}, {"seed", 5}}.dump());
  std::vector<std::string> logs;
  for (const char* run : {"a", "b"}) {
    const auto out = (scratch() / "det" / run).string();
    const std::vector<std::string> args = {"adassm", "train", "--config", cfg_path.string(), "--cohort",
                                           cohort_dir.string(), "--out", out};
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    if (run_cli(static_cast<int>(argv.size()), argv.data()) != 0) return {false, "train command failed"};
    logs.push_back(read_text(fs::path(out) / "runlog.csv"));
  }
  std::size_t lines = static_cast<std::size_t>(std::count(logs[0].begin(), logs[0].end(), '\n'));
  return {logs[0] == logs[1] && lines > 1, "two train runs, " + std::to_string(lines - 1) + " logged steps, runlog.csv " +
                                              (logs[0] == logs[1] ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string which = argc > 1 ? argv[1] : "all";
  if (which != "properties" && which != "training" && which != "all") {
    std::cerr << "usage: acceptance [properties|training|all]\n";
    return 1;
  }
  torch::set_num_threads(1);
  std::vector<std::pair<int, std::pair<std::string, std::function<Outcome()>>>> criteria;
  if (which != "training") {
    criteria.push_back({1, {"gradient reversal", gradient_reversal}});
    criteria.push_back({2, {"loss oracles", loss_oracles}});
    criteria.push_back({3, {"noise bound", noise_bound}});
    criteria.push_back({4, {"KDE statistics", kde_statistics}});
    criteria.push_back({5, {"PCA and TPS round trip", pca_tps_roundtrip}});
    criteria.push_back({6, {"metric identities", metric_identities}});
  }
  if (which != "properties") {
    criteria.push_back({7, {"overfit sanity", overfit}});
    criteria.push_back({8, {"adversarial augmentation beats baselines", headline_claim}});
    criteria.push_back({9, {"downstream classification", downstream}});
    criteria.push_back({10, {"on-the-fly vs offline timing", timing}});
    criteria.push_back({11, {"determinism", determinism}});
  }
  int failures = 0;
  for (const auto& [id, c] : criteria) {
    Outcome o;
    try {
      o = c.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << c.first << "): " << o.detail << std::endl;
  }
  fs::remove_all(scratch());
  return failures == 0 ? 0 : 1;
}
