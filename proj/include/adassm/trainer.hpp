#pragma once

#include "adassm/adversary.hpp"
#include "adassm/losses.hpp"
#include "adassm/ssm_net.hpp"
#include "adassm/synthetic_cohort.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace adassm {

enum class Mode { noaug, gaussian, kde_offline, adassm, adassm_bc, adassm_pc, adassm_bc_pc };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);
bool is_adversarial(Mode m);
bool uses_bottleneck_contrastive(Mode m);
bool uses_correspondence_contrastive(Mode m);

struct TrainConfig {
  Mode mode = Mode::noaug;
  std::string preset = "desk";
  double gaussian_sigma = 1.0;
  int kde_factor = 3;
  int epochs = 60;
  int batch_size = 4;
  double lr_model = 5e-4;
  double lr_gen = 1e-3;
  double lr_disc = 1e-3;
  double noise_range = 20.0;  // R in x-hat = x + R * G(z, x)
  LossWeights weights;
  double lambda_rev = 1.0;
  std::uint64_t seed = 0;
  bool deterministic = true;
  bool spatial_tv = false;      // spatial-difference TV instead of the plain noise norm
  bool non_saturating = false;  // -log D(x-hat) generator loss
  double pca_variance = 0.95;   // decoder initialisation
  NetConfig net;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Missing keys fall back to preset_config(preset, mode).
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Named hyperparameter sets: "desk" (CPU scale), "femur", "left_atrium".
TrainConfig preset_config(const std::string& preset, Mode mode);

/// ADASSM_SEED, when set, replaces cfg.seed.
void apply_seed_override(TrainConfig& cfg);

/// Network input/output sizes taken from the cohort.
void fit_config_to_cohort(TrainConfig& cfg, const CohortSpec& spec);

struct BatchPartition {
  std::vector<int> x1;  // ceil(B/2) positions into the batch
  std::vector<int> x2;
};

/// Random disjoint halves of a batch of size B >= 2.
BatchPartition partition_batch(int batch_size, std::mt19937_64& rng);

struct EpochRecord {
  int epoch = 0;
  double train_rmse = 0.0;  // mean clean-batch RMSE loss over the epoch
  double val_rmse = 0.0;    // mean per-axis RMSE on validation volumes
};

struct RunLog {
  struct Step {
    long step;
    int epoch;
    LossBreakdown losses;
  };
  std::vector<Step> steps;
  std::vector<EpochRecord> epochs;
  std::vector<std::string> warnings;
  double augmentation_seconds = 0.0;  // on-the-fly noise generation or offline KDE compilation
  double update_seconds = 0.0;
  double validation_seconds = 0.0;
  double training_seconds = 0.0;      // wall clock of the training loop

  std::string runlog_csv() const;
  std::string epochs_csv() const;
};

struct Networks {
  ImageToSSMNet model{nullptr};
  NoiseGenerator generator{nullptr};
  Discriminator discriminator{nullptr};
};

/// Networks, optimisers and random streams for one training run.
class TrainingState {
 public:
  TrainingState(const TrainConfig& cfg, Networks nets);

  const TrainConfig& config() const { return cfg_; }
  Networks& nets() { return nets_; }
  torch::optim::Adam& model_optimizer() { return *opt_model_; }
  torch::optim::Adam& generator_optimizer() { return *opt_gen_; }
  torch::optim::Adam& discriminator_optimizer() { return *opt_disc_; }
  std::mt19937_64& rng() { return rng_; }
  torch::Tensor randn(at::IntArrayRef sizes);

  /// IDs of every sample that passed through an augmentation path.
  std::set<std::string>& augmented_ids() { return augmented_ids_; }
  double augmentation_seconds = 0.0;

 private:
  TrainConfig cfg_;
  Networks nets_;
  std::unique_ptr<torch::optim::Adam> opt_model_, opt_gen_, opt_disc_;
  std::mt19937_64 rng_;
  at::Generator noise_gen_;
  std::set<std::string> augmented_ids_;
};

/// Builds all three networks from `cfg` with weights seeded by cfg.seed.
Networks make_networks(const TrainConfig& cfg);

/// One step of any mode. Adversarial modes: G makes x-hat for X1; D is updated
/// on (X2, detached x-hat); then one backward pass of
/// alpha*L_G + L_RMSE(x-hat through reversal) + L_RMSE(clean) + contrastive terms
/// updates G and the model.
LossBreakdown train_step(TrainingState& st, const std::vector<const GroundTruthSample*>& batch);

/// Mean per-axis RMSE of the model over `samples` (no augmentation).
double evaluate_rmse(ImageToSSMNetImpl& model, const std::vector<const GroundTruthSample*>& samples);

struct TrainResult {
  int best_epoch = 0;
  double best_val_rmse = 0.0;
  RunLog log;
  nlohmann::json summary;
};

/// Full training run on the cohort's train split with validation-based model
/// selection. Leaves the best weights in `nets` and, when `out_dir` is given,
/// writes config.json, runlog.csv, epochs.csv, summary.json and checkpoint/.
TrainResult train(const TrainConfig& cfg, const Cohort& cohort, Networks& nets,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// Convenience overload creating the networks.
TrainResult train(const TrainConfig& cfg, const Cohort& cohort,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt);

struct KdeOfflineResult {
  Cohort augmented;  // original cohort with augmented training samples appended
  double augmentation_seconds = 0.0;
  Eigen::MatrixXd sampled_scores;
  PCAModel pca;
};

/// Builds the offline KDE-augmented cohort (kde_factor x n_train new pairs).
KdeOfflineResult build_kde_cohort(const TrainConfig& cfg, const Cohort& cohort);

/// Offline KDE augmentation followed by plain training; the augmentation
/// wall clock is reported separately. Writes augmented_cohort/ under out_dir.
TrainResult run_kde_offline(const TrainConfig& cfg, const Cohort& cohort, Networks& nets,
                            const std::optional<std::filesystem::path>& out_dir = std::nullopt);

void save_networks(Networks& nets, const std::filesystem::path& dir);
Networks load_networks(const std::filesystem::path& dir);

}  // namespace adassm
