#pragma once

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <string>

namespace adassm {

class DiscriminatorImpl;

struct LossWeights {
  double alpha = 1.0;       // GAN weight
  double beta = 0.1;        // noise-norm weight inside the generator loss
  double lambda_bc = 0.0;   // bottleneck contrastive
  double lambda_pc = 0.0;   // correspondence contrastive

  void validate() const;
};

/// Per-step scalars written to runlog.csv.
struct LossBreakdown {
  double tv = 0.0;
  double gan_d = 0.0;
  double gan_g = 0.0;
  double rmse_noisy = 0.0;
  double rmse_clean = 0.0;
  double bc = 0.0;
  double pc = 0.0;
  double total = 0.0;

  bool finite() const;
};

/// L2 norm of each noise field in the batch, averaged over the batch.
torch::Tensor tv_loss(const torch::Tensor& noise);

/// Mean absolute spatial difference (anisotropic total variation) of [B, C, D, H, W] fields.
torch::Tensor spatial_tv_loss(const torch::Tensor& noise);

struct GanLosses {
  torch::Tensor discriminator;  // L_D, minimised by D
  torch::Tensor generator;      // L_G, minimised by G (includes beta * L_TV)
};

/// From discriminator probabilities on reference (x2) and noisy (x1-hat) batches.
/// log arguments are clamped to >= 1e-7. The non-saturating variant replaces
/// mean log(1 - D(x1-hat)) with -mean log D(x1-hat) in L_G.
GanLosses gan_losses(const torch::Tensor& d_reference, const torch::Tensor& d_noisy, double beta,
                     const torch::Tensor& tv, bool non_saturating = false);

GanLosses gan_losses(DiscriminatorImpl& d, const torch::Tensor& reference,
                     const torch::Tensor& noisy, double beta, const torch::Tensor& tv,
                     bool non_saturating = false);

/// sqrt(mean squared error over the 3M coordinates) per sample, averaged over the batch.
/// Accepts [M, 3] or [B, M, 3].
torch::Tensor rmse_loss(const torch::Tensor& pred, const torch::Tensor& target);

/// In-batch contrastive loss with cosine similarity (temperature 1): row i of
/// `clean` is the positive for row i of `noisy`; all noisy rows form the
/// denominator. Inputs [N, ...] are flattened per row. Requires N >= 2 and
/// non-zero rows.
torch::Tensor contrastive_loss(const torch::Tensor& clean, const torch::Tensor& noisy);

/// alpha * gan_g + rmse_noisy + rmse_clean + lambda_bc * bc + lambda_pc * pc.
double total_loss(const LossBreakdown& b, const LossWeights& w);

std::string runlog_header();
std::string runlog_row(long step, int epoch, const LossBreakdown& b);

}  // namespace adassm
