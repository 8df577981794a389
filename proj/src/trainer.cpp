#include "adassm/trainer.hpp"

#include "adassm/checkpoint.hpp"
#include "adassm/evaluation.hpp"
#include "adassm/rng.hpp"
#include "adassm/shape_space.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace adassm {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct ModeName {
  Mode mode;
  const char* name;
};

constexpr ModeName kModeNames[] = {
    {Mode::noaug, "noaug"},         {Mode::gaussian, "gaussian"},
    {Mode::kde_offline, "kde_offline"}, {Mode::adassm, "adassm"},
    {Mode::adassm_bc, "adassm_bc"}, {Mode::adassm_pc, "adassm_pc"},
    {Mode::adassm_bc_pc, "adassm_bc_pc"},
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NonFiniteLoss(std::string("non-finite ") + what);
}

// Zeroes weights the mode does not use, warning about each.
TrainConfig effective_config(const TrainConfig& cfg, std::vector<std::string>& warnings) {
  TrainConfig out = cfg;
  auto drop = [&](double& w, const char* name) {
    if (w != 0.0) {
      warnings.push_back(std::string(name) + " = " + std::to_string(w) + " ignored in mode " +
                         to_string(cfg.mode));
      std::cerr << "[warn] " << warnings.back() << "\n";
      w = 0.0;
    }
  };
  if (!uses_bottleneck_contrastive(cfg.mode)) drop(out.weights.lambda_bc, "lambda_bc");
  if (!uses_correspondence_contrastive(cfg.mode)) drop(out.weights.lambda_pc, "lambda_pc");
  return out;
}

torch::Tensor index_tensor(const std::vector<int>& idx) {
  std::vector<int64_t> v(idx.begin(), idx.end());
  return torch::tensor(v, torch::kLong);
}

}  // namespace

std::string to_string(Mode m) {
  for (const auto& n : kModeNames) {
    if (n.mode == m) return n.name;
  }
  throw std::invalid_argument("unknown mode");
}

Mode mode_from_string(const std::string& s) {
  for (const auto& n : kModeNames) {
    if (s == n.name) return n.mode;
  }
  throw std::invalid_argument("unknown training mode '" + s +
                              "' (expected noaug, gaussian, kde_offline, adassm, adassm_bc, "
                              "adassm_pc, adassm_bc_pc)");
}

bool is_adversarial(Mode m) {
  return m == Mode::adassm || m == Mode::adassm_bc || m == Mode::adassm_pc || m == Mode::adassm_bc_pc;
}
bool uses_bottleneck_contrastive(Mode m) { return m == Mode::adassm_bc || m == Mode::adassm_bc_pc; }
bool uses_correspondence_contrastive(Mode m) { return m == Mode::adassm_pc || m == Mode::adassm_bc_pc; }

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (batch_size < 2 && (is_adversarial(mode) || mode == Mode::gaussian)) {
    throw std::invalid_argument("mode " + to_string(mode) + " needs batch_size >= 2 to split X1/X2");
  }
  if (!(lr_model >= 0 && lr_gen >= 0 && lr_disc >= 0)) throw std::invalid_argument("learning rates must be >= 0");
  if (!(noise_range >= 0)) throw std::invalid_argument("noise_range must be >= 0");
  if (!(gaussian_sigma >= 0)) throw std::invalid_argument("gaussian_sigma must be >= 0");
  if (kde_factor < 1) throw std::invalid_argument("kde_factor must be >= 1");
  if (!(lambda_rev >= 0)) throw std::invalid_argument("lambda_rev must be >= 0");
  if (!(pca_variance > 0 && pca_variance <= 1)) throw std::invalid_argument("pca_variance must be in (0, 1]");
  weights.validate();
  net.validate();
  generator.validate();
  discriminator.validate();
}

TrainConfig preset_config(const std::string& preset, Mode mode) {
  TrainConfig c;
  c.mode = mode;
  c.preset = preset;
  c.weights.alpha = 1.0;
  c.weights.beta = 0.1;
  if (preset == "desk") {
    c.epochs = 60;
    c.batch_size = 4;
    c.lr_model = 5e-4;
    c.lr_gen = 1e-3;
    c.lr_disc = 1e-3;
    c.noise_range = 20.0;
    if (mode == Mode::adassm_bc) c.weights.lambda_bc = 0.5;
    if (mode == Mode::adassm_pc) c.weights.lambda_pc = 0.5;
    if (mode == Mode::adassm_bc_pc) c.weights.lambda_bc = c.weights.lambda_pc = 0.5;
  } else if (preset == "femur") {
    c.epochs = 1500;
    c.batch_size = 4;
    c.noise_range = 500.0;
    c.lr_model = mode == Mode::adassm ? 1e-5 : 5e-5;
    c.lr_gen = c.lr_disc = mode == Mode::adassm_bc_pc ? 1e-3 : 5e-3;
    if (mode == Mode::adassm_bc) c.weights.lambda_bc = 0.5;
    if (mode == Mode::adassm_pc) c.weights.lambda_pc = 0.1;
    if (mode == Mode::adassm_bc_pc) c.weights.lambda_bc = c.weights.lambda_pc = 0.5;
  } else if (preset == "left_atrium") {
    c.epochs = 1000;
    c.batch_size = 6;
    c.noise_range = 100.0;
    c.lr_model = mode == Mode::adassm ? 5e-3 : 1e-4;
    c.lr_gen = c.lr_disc = 5e-3;
    if (mode == Mode::adassm_bc) c.weights.lambda_bc = 0.001;
    if (mode == Mode::adassm_pc) c.weights.lambda_pc = 0.05;
    if (mode == Mode::adassm_bc_pc) c.weights.lambda_bc = c.weights.lambda_pc = 0.05;
  } else {
    throw std::invalid_argument("unknown preset '" + preset +
                                "' (expected desk, femur, left_atrium)");
  }
  return c;
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"mode", to_string(c.mode)},
           {"preset", c.preset},
           {"gaussian_sigma", c.gaussian_sigma},
           {"kde_factor", c.kde_factor},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"lr_model", c.lr_model},
           {"lr_gen", c.lr_gen},
           {"lr_disc", c.lr_disc},
           {"noise_range", c.noise_range},
           {"alpha", c.weights.alpha},
           {"beta", c.weights.beta},
           {"lambda_bc", c.weights.lambda_bc},
           {"lambda_pc", c.weights.lambda_pc},
           {"lambda_rev", c.lambda_rev},
           {"seed", c.seed},
           {"deterministic", c.deterministic},
           {"spatial_tv", c.spatial_tv},
           {"non_saturating", c.non_saturating},
           {"pca_variance", c.pca_variance},
           {"net", c.net},
           {"generator", c.generator},
           {"discriminator", c.discriminator}};
}

void from_json(const json& j, TrainConfig& c) {
  static const std::set<std::string> known{
      "mode",      "preset",    "gaussian_sigma", "kde_factor", "epochs",       "batch_size",
      "lr_model",  "lr_gen",    "lr_disc",        "noise_range", "alpha",       "beta",
      "lambda_bc", "lambda_pc", "lambda_rev",     "seed",        "deterministic", "spatial_tv",
      "non_saturating", "pca_variance", "net", "generator", "discriminator"};
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw std::invalid_argument("unknown training config key '" + k + "'");
  }
  const Mode mode = mode_from_string(j.value("mode", std::string("noaug")));
  TrainConfig d = preset_config(j.value("preset", std::string("desk")), mode);
  c = d;
  c.gaussian_sigma = j.value("gaussian_sigma", d.gaussian_sigma);
  c.kde_factor = j.value("kde_factor", d.kde_factor);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lr_model = j.value("lr_model", d.lr_model);
  c.lr_gen = j.value("lr_gen", d.lr_gen);
  c.lr_disc = j.value("lr_disc", d.lr_disc);
  c.noise_range = j.value("noise_range", d.noise_range);
  c.weights.alpha = j.value("alpha", d.weights.alpha);
  c.weights.beta = j.value("beta", d.weights.beta);
  c.weights.lambda_bc = j.value("lambda_bc", d.weights.lambda_bc);
  c.weights.lambda_pc = j.value("lambda_pc", d.weights.lambda_pc);
  c.lambda_rev = j.value("lambda_rev", d.lambda_rev);
  c.seed = j.value("seed", d.seed);
  c.deterministic = j.value("deterministic", d.deterministic);
  c.spatial_tv = j.value("spatial_tv", d.spatial_tv);
  c.non_saturating = j.value("non_saturating", d.non_saturating);
  c.pca_variance = j.value("pca_variance", d.pca_variance);
  if (j.contains("net")) c.net = j.at("net").get<NetConfig>();
  if (j.contains("generator")) c.generator = j.at("generator").get<GeneratorConfig>();
  if (j.contains("discriminator")) c.discriminator = j.at("discriminator").get<DiscriminatorConfig>();
  c.validate();
}

void apply_seed_override(TrainConfig& cfg) {
  const char* env = std::getenv("ADASSM_SEED");
  if (env == nullptr || *env == '\0') return;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument(env);
    cfg.seed = v;
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string("ADASSM_SEED is not an unsigned integer: '") + env + "'");
  }
}

void fit_config_to_cohort(TrainConfig& cfg, const CohortSpec& spec) {
  cfg.net.input = spec.dims;
  cfg.net.num_points = spec.num_points;
  cfg.generator.input = spec.dims;
  cfg.discriminator.input = spec.dims;
}

BatchPartition partition_batch(int batch_size, std::mt19937_64& rng) {
  if (batch_size < 2) throw std::invalid_argument("partition_batch needs a batch of at least 2");
  std::vector<int> order(static_cast<std::size_t>(batch_size));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n1 = static_cast<std::ptrdiff_t>((batch_size + 1) / 2);
  BatchPartition p;
  p.x1.assign(order.begin(), order.begin() + n1);
  p.x2.assign(order.begin() + n1, order.end());
  std::sort(p.x1.begin(), p.x1.end());
  std::sort(p.x2.begin(), p.x2.end());
  return p;
}

std::string RunLog::runlog_csv() const {
  std::string s = runlog_header();
  for (const auto& st : steps) s += runlog_row(st.step, st.epoch, st.losses);
  return s;
}

std::string RunLog::epochs_csv() const {
  std::ostringstream os;
  os.precision(9);
  os << "epoch,train_rmse,val_rmse\n";
  for (const auto& e : epochs) os << e.epoch << ',' << e.train_rmse << ',' << e.val_rmse << '\n';
  return os.str();
}

Networks make_networks(const TrainConfig& cfg) {
  torch::manual_seed(cfg.seed);
  Networks n;
  n.model = ImageToSSMNet(cfg.net);
  n.generator = NoiseGenerator(cfg.generator);
  n.discriminator = Discriminator(cfg.discriminator);
  return n;
}

TrainingState::TrainingState(const TrainConfig& cfg, Networks nets)
    : cfg_(cfg),
      nets_(std::move(nets)),
      rng_(mix_seed(cfg.seed, 0x7061727469)),
      noise_gen_(at::detail::createCPUGenerator(mix_seed(cfg.seed, 0x6e6f697365))) {
  auto adam = [](const std::vector<torch::Tensor>& params, double lr) {
    return std::make_unique<torch::optim::Adam>(
        params, torch::optim::AdamOptions(lr).betas({0.9, 0.999}).eps(1e-8));
  };
  opt_model_ = adam(nets_.model->parameters(), cfg_.lr_model);
  opt_gen_ = adam(nets_.generator->parameters(), cfg_.lr_gen);
  opt_disc_ = adam(nets_.discriminator->parameters(), cfg_.lr_disc);
}

torch::Tensor TrainingState::randn(at::IntArrayRef sizes) {
  return torch::randn(sizes, noise_gen_, torch::TensorOptions().dtype(torch::kFloat32));
}

LossBreakdown train_step(TrainingState& st, const std::vector<const GroundTruthSample*>& batch) {
  const TrainConfig& cfg = st.config();
  auto& nets = st.nets();
  auto& model = *nets.model;
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");

  std::vector<const Volume*> vols;
  std::vector<const CorrespondenceSet*> corrs;
  for (const auto* s : batch) {
    vols.push_back(&s->volume);
    corrs.push_back(&s->correspondences);
  }
  const auto x = volume_tensor(vols);
  const auto y = correspondence_tensor(corrs);
  LossBreakdown b;

  if (cfg.mode == Mode::noaug || cfg.mode == Mode::kde_offline) {
    auto loss = rmse_loss(model.forward(x).points, y);
    b.rmse_clean = loss.item<double>();
    check_finite(b.rmse_clean, "L_RMSE");
    st.model_optimizer().zero_grad();
    loss.backward();
    st.model_optimizer().step();
    b.total = total_loss(b, cfg.weights);
    return b;
  }

  const auto part = partition_batch(static_cast<int>(batch.size()), st.rng());
  const auto idx1 = index_tensor(part.x1);
  const auto idx2 = index_tensor(part.x2);
  const auto n1 = static_cast<int64_t>(part.x1.size());
  for (int i : part.x1) st.augmented_ids().insert(batch[static_cast<std::size_t>(i)]->id);
  const auto x1 = x.index_select(0, idx1);
  const auto y1 = y.index_select(0, idx1);

  if (cfg.mode == Mode::gaussian) {
    const auto t0 = Clock::now();
    const auto x1_hat = x1 + cfg.gaussian_sigma * st.randn(x1.sizes());
    st.augmentation_seconds += seconds_since(t0);
    auto out = model.forward(torch::cat({x1_hat, x}, 0));
    auto noisy = rmse_loss(out.points.narrow(0, 0, n1), y1);
    auto clean = rmse_loss(out.points.narrow(0, n1, x.size(0)), y);
    b.rmse_noisy = noisy.item<double>();
    b.rmse_clean = clean.item<double>();
    b.total = total_loss(b, cfg.weights);
    check_finite(b.total, "gaussian-mode loss");
    st.model_optimizer().zero_grad();
    (noisy + clean).backward();
    st.model_optimizer().step();
    return b;
  }

  auto& gen = *nets.generator;
  auto& disc = *nets.discriminator;
  const auto x2 = x.index_select(0, idx2);

  // (a) noisy copies of X1
  const auto t0 = Clock::now();
  const auto z = st.randn({n1, gen.config().latent_dim});
  const auto noise = gen.forward(z, x1);
  const auto x1_hat = apply_noise(x1, noise, cfg.noise_range);
  st.augmentation_seconds += seconds_since(t0);
  const auto tv = cfg.spatial_tv ? spatial_tv_loss(noise) : tv_loss(noise);

  // (b) discriminator on X2 versus detached x-hat
  // one pass over both halves; D has no batch statistics
  const auto d_all = disc.forward(torch::cat({x2, x1_hat.detach()}, 0));
  const auto d_ref = d_all.narrow(0, 0, x2.size(0));
  auto d_losses = gan_losses(d_ref, d_all.narrow(0, x2.size(0), n1), cfg.weights.beta, tv.detach(),
                             cfg.non_saturating);
  b.gan_d = d_losses.discriminator.item<double>();
  check_finite(b.gan_d, "L_GAN_D");
  st.discriminator_optimizer().zero_grad();
  d_losses.discriminator.backward();
  st.discriminator_optimizer().step();

  // (c) joint generator + model objective; D weights frozen so backward skips their grads
  for (auto& p : disc.parameters()) p.requires_grad_(false);
  auto g_loss = gan_losses(d_ref.detach(), disc.forward(x1_hat), cfg.weights.beta, tv,
                           cfg.non_saturating).generator;
  for (auto& p : disc.parameters()) p.requires_grad_(true);
  // separate passes: only the noisy half needs input gradients
  auto noisy_out = model.forward(grad_reverse(x1_hat, cfg.lambda_rev));
  auto clean_out = model.forward(x);
  const auto& noisy_points = noisy_out.points;
  const auto& clean_points = clean_out.points;
  auto rmse_noisy = rmse_loss(noisy_points, y1);
  auto rmse_clean = rmse_loss(clean_points, y);
  auto objective = cfg.weights.alpha * g_loss + rmse_noisy + rmse_clean;

  const bool pairs = n1 >= 2;
  if (cfg.weights.lambda_bc > 0 && pairs) {
    auto bc = contrastive_loss(clean_out.bottleneck.index_select(0, idx1), noisy_out.bottleneck);
    b.bc = bc.item<double>();
    objective = objective + cfg.weights.lambda_bc * bc;
  }
  if (cfg.weights.lambda_pc > 0 && pairs) {
    auto pc = contrastive_loss(clean_points.index_select(0, idx1), noisy_points);
    b.pc = pc.item<double>();
    objective = objective + cfg.weights.lambda_pc * pc;
  }
  b.tv = tv.item<double>();
  b.gan_g = g_loss.item<double>();
  b.rmse_noisy = rmse_noisy.item<double>();
  b.rmse_clean = rmse_clean.item<double>();
  b.total = total_loss(b, cfg.weights);
  check_finite(b.total, "total loss");

  st.generator_optimizer().zero_grad();
  st.model_optimizer().zero_grad();
  objective.backward();
  st.generator_optimizer().step();
  st.model_optimizer().step();
  return b;
}

double evaluate_rmse(ImageToSSMNetImpl& model, const std::vector<const GroundTruthSample*>& samples) {
  if (samples.empty()) throw std::invalid_argument("evaluate_rmse: no samples");
  const auto preds = predict_all(model, samples);
  double sum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) sum += axis_rmse(preds[i], samples[i]->correspondences);
  return sum / static_cast<double>(samples.size());
}

void save_networks(Networks& nets, const std::filesystem::path& dir) {
  save_net(*nets.model, dir);
  write_text(dir / "generator_config.json", json(nets.generator->config()).dump(2) + "\n");
  save_parameters(*nets.generator, dir, "generator");
  write_text(dir / "discriminator_config.json", json(nets.discriminator->config()).dump(2) + "\n");
  save_parameters(*nets.discriminator, dir, "discriminator");
}

Networks load_networks(const std::filesystem::path& dir) {
  Networks n;
  n.model = load_net(dir);
  n.generator = NoiseGenerator(json::parse(read_text(dir / "generator_config.json")).get<GeneratorConfig>());
  load_parameters(*n.generator, dir, "generator");
  n.discriminator =
      Discriminator(json::parse(read_text(dir / "discriminator_config.json")).get<DiscriminatorConfig>());
  load_parameters(*n.discriminator, dir, "discriminator");
  return n;
}

namespace {

std::vector<std::vector<const GroundTruthSample*>> make_batches(
    const std::vector<const GroundTruthSample*>& train, int batch_size, std::mt19937_64& rng) {
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<const GroundTruthSample*>> batches;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    std::vector<const GroundTruthSample*> b;
    for (std::size_t k = i; k < std::min(order.size(), i + static_cast<std::size_t>(batch_size)); ++k) {
      b.push_back(train[order[k]]);
    }
    batches.push_back(std::move(b));
  }
  // A trailing single sample cannot be split into X1/X2; fold it into the previous batch.
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

void write_run_outputs(const std::filesystem::path& dir, const TrainConfig& cfg, const TrainResult& r) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config.json", json(cfg).dump(2) + "\n");
  write_text(dir / "runlog.csv", r.log.runlog_csv());
  write_text(dir / "epochs.csv", r.log.epochs_csv());
  write_text(dir / "summary.json", r.summary.dump(2) + "\n");
}

TrainResult train_impl(const TrainConfig& requested, const Cohort& cohort, Networks& nets,
                       const std::optional<std::filesystem::path>& out_dir, double offline_seconds) {
  requested.validate();
  RunLog log;
  TrainConfig cfg = effective_config(requested, log.warnings);
  // Offline KDE trains as plain regression on the enlarged training split.
  TrainConfig step_cfg = cfg;
  if (cfg.mode == Mode::kde_offline) step_cfg.mode = Mode::noaug;

  const auto train_set = cohort.split(Split::train);
  const auto val_set = cohort.split(Split::val);
  if (train_set.empty()) throw std::invalid_argument("train: cohort has no training samples");
  if (val_set.empty()) throw std::invalid_argument("train: cohort has no validation samples");
  std::set<std::string> holdout;
  for (const auto* s : val_set) holdout.insert(s->id);
  for (const auto* s : cohort.split(Split::test)) holdout.insert(s->id);

  if (cfg.deterministic) torch::set_num_threads(1);

  {
    std::vector<CorrespondenceSet> corrs;
    double sum = 0.0, sq = 0.0, count = 0.0;
    for (const auto* s : train_set) {
      corrs.push_back(s->correspondences);
      for (float v : s->volume.data) {
        sum += v;
        sq += double(v) * v;
      }
      count += static_cast<double>(s->volume.data.size());
    }
    const double mean = sum / count;
    const double sd = std::sqrt(std::max(sq / count - mean * mean, 1e-12));
    nets.discriminator->set_normalization(mean, 1.0 / sd);
    const int cap = std::min(cfg.net.latent_dim, static_cast<int>(corrs.size()) - 1);
    if (cap >= 1) init_decoder_from_pca(*nets.model, fit_pca(corrs, cfg.pca_variance, cap));
  }

  TrainingState st(step_cfg, nets);
  TrainResult result;
  result.best_val_rmse = std::numeric_limits<double>::infinity();
  std::vector<torch::Tensor> best = snapshot_parameters(*nets.model);
  long step = 0;
  const auto t_train = Clock::now();

  auto save_best = [&]() -> std::string {
    if (!out_dir || result.best_epoch == 0) return "none (no completed epoch)";
    restore_parameters(*nets.model, best);
    save_networks(nets, *out_dir / "checkpoint");
    return (*out_dir / "checkpoint").string() + " (epoch " + std::to_string(result.best_epoch) + ")";
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double rmse_sum = 0.0;
    int batches_done = 0;
    for (const auto& batch : make_batches(train_set, cfg.batch_size, st.rng())) {
      const double aug_before = st.augmentation_seconds;
      const auto t0 = Clock::now();
      LossBreakdown b;
      try {
        b = train_step(st, batch);
      } catch (const NonFiniteLoss& e) {
        throw std::runtime_error(std::string(e.what()) + " at step " + std::to_string(step + 1) +
                                 " (epoch " + std::to_string(epoch) + "); last good checkpoint: " +
                                 save_best());
      }
      log.update_seconds += seconds_since(t0) - (st.augmentation_seconds - aug_before);
      log.steps.push_back({++step, epoch, b});
      rmse_sum += b.rmse_clean;
      ++batches_done;
    }
    for (const auto& id : st.augmented_ids()) {
      if (holdout.count(id)) throw std::logic_error("held-out sample " + id + " reached an augmentation path");
    }
    const auto t_val = Clock::now();
    const double val = evaluate_rmse(*nets.model, val_set);
    log.validation_seconds += seconds_since(t_val);
    log.epochs.push_back({epoch, rmse_sum / std::max(batches_done, 1), val});
    if (!std::isfinite(val)) {
      throw std::runtime_error("non-finite validation RMSE at epoch " + std::to_string(epoch) +
                               "; last good checkpoint: " + save_best());
    }
    if (val < result.best_val_rmse) {
      result.best_val_rmse = val;
      result.best_epoch = epoch;
      best = snapshot_parameters(*nets.model);
    }
  }
  log.training_seconds = seconds_since(t_train);
  log.augmentation_seconds = offline_seconds + st.augmentation_seconds;
  restore_parameters(*nets.model, best);
  if (cfg.epochs == 0) result.best_val_rmse = evaluate_rmse(*nets.model, val_set);

  result.summary = json{
      {"mode", to_string(cfg.mode)},
      {"preset", cfg.preset},
      {"seed", cfg.seed},
      {"epochs", cfg.epochs},
      {"steps", step},
      {"n_train", train_set.size()},
      {"n_val", val_set.size()},
      {"best_epoch", result.best_epoch},
      {"best_val_rmse", result.best_val_rmse},
      {"final_train_rmse", log.epochs.empty() ? 0.0 : log.epochs.back().train_rmse},
      {"timings",
       {{"augmentation_seconds", log.augmentation_seconds},
        {"update_seconds", log.update_seconds},
        {"validation_seconds", log.validation_seconds},
        {"training_seconds", log.training_seconds},
        {"total_seconds", offline_seconds + log.training_seconds}}},
      {"warnings", log.warnings}};
  result.log = std::move(log);
  if (out_dir) {
    write_run_outputs(*out_dir, requested, result);
    save_networks(nets, *out_dir / "checkpoint");
  }
  return result;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Cohort& cohort, Networks& nets,
                  const std::optional<std::filesystem::path>& out_dir) {
  if (cfg.mode == Mode::kde_offline) return run_kde_offline(cfg, cohort, nets, out_dir);
  return train_impl(cfg, cohort, nets, out_dir, 0.0);
}

TrainResult train(const TrainConfig& cfg, const Cohort& cohort,
                  const std::optional<std::filesystem::path>& out_dir) {
  Networks nets = make_networks(cfg);
  return train(cfg, cohort, nets, out_dir);
}

KdeOfflineResult build_kde_cohort(const TrainConfig& cfg, const Cohort& cohort) {
  const auto t0 = Clock::now();
  const int n_train = static_cast<int>(cohort.split(Split::train).size());
  auto aug = kde_augment(cohort, cfg.kde_factor * n_train, mix_seed(cfg.seed, 0x6b6465), cfg.pca_variance);
  KdeOfflineResult r;
  r.augmented = cohort;
  for (auto& s : aug.samples) r.augmented.samples.push_back(std::move(s));
  r.sampled_scores = std::move(aug.sampled_scores);
  r.pca = std::move(aug.pca);
  r.augmentation_seconds = seconds_since(t0);
  return r;
}

TrainResult run_kde_offline(const TrainConfig& cfg, const Cohort& cohort, Networks& nets,
                            const std::optional<std::filesystem::path>& out_dir) {
  cfg.validate();
  const auto t0 = Clock::now();
  auto kde = build_kde_cohort(cfg, cohort);
  if (out_dir) save_cohort(kde.augmented, *out_dir / "augmented_cohort");
  const double offline = seconds_since(t0);
  TrainConfig c = cfg;
  c.mode = Mode::kde_offline;
  return train_impl(c, kde.augmented, nets, out_dir, offline);
}

}  // namespace adassm
