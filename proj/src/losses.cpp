#include "adassm/losses.hpp"

#include "adassm/adversary.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace adassm {

void LossWeights::validate() const {
  if (alpha < 0 || beta < 0 || lambda_bc < 0 || lambda_pc < 0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
}

bool LossBreakdown::finite() const {
  for (double v : {tv, gan_d, gan_g, rmse_noisy, rmse_clean, bc, pc, total}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

torch::Tensor tv_loss(const torch::Tensor& noise) {
  if (noise.dim() < 2) return noise.flatten().norm();
  return noise.flatten(1).norm(2, 1).mean();
}

torch::Tensor spatial_tv_loss(const torch::Tensor& noise) {
  if (noise.dim() != 5) throw std::invalid_argument("spatial_tv_loss expects [B, C, D, H, W]");
  auto dz = (noise.narrow(2, 1, noise.size(2) - 1) - noise.narrow(2, 0, noise.size(2) - 1)).abs().mean();
  auto dy = (noise.narrow(3, 1, noise.size(3) - 1) - noise.narrow(3, 0, noise.size(3) - 1)).abs().mean();
  auto dx = (noise.narrow(4, 1, noise.size(4) - 1) - noise.narrow(4, 0, noise.size(4) - 1)).abs().mean();
  return dx + dy + dz;
}

GanLosses gan_losses(const torch::Tensor& d_reference, const torch::Tensor& d_noisy, double beta,
                     const torch::Tensor& tv, bool non_saturating) {
  if (d_reference.numel() == 0 || d_noisy.numel() == 0) {
    throw std::invalid_argument("gan_losses: empty batch");
  }
  const double floor = kProbabilityFloor;
  auto log_real = torch::log(d_reference.clamp_min(floor));
  auto log_not_fake = torch::log((1.0 - d_noisy).clamp_min(floor));
  GanLosses out;
  out.discriminator = -log_real.mean() - log_not_fake.mean();
  auto adversarial = non_saturating ? -torch::log(d_noisy.clamp_min(floor)).mean() : log_not_fake.mean();
  out.generator = beta == 0.0 ? adversarial : adversarial + beta * tv;
  return out;
}

GanLosses gan_losses(DiscriminatorImpl& d, const torch::Tensor& reference,
                     const torch::Tensor& noisy, double beta, const torch::Tensor& tv,
                     bool non_saturating) {
  if (reference.size(0) == 0 || noisy.size(0) == 0) throw std::invalid_argument("gan_losses: empty batch");
  return gan_losses(d.forward(reference), d.forward(noisy), beta, tv, non_saturating);
}

torch::Tensor rmse_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  if (!pred.sizes().equals(target.sizes())) {
    throw std::invalid_argument("rmse_loss: shape mismatch " + c10::str(pred.sizes()) + " vs " +
                                c10::str(target.sizes()));
  }
  if (pred.dim() == 2) return (pred - target).pow(2).mean().sqrt();
  if (pred.dim() != 3) throw std::invalid_argument("rmse_loss expects [M, 3] or [B, M, 3]");
  return (pred - target).pow(2).flatten(1).mean(1).sqrt().mean();
}

torch::Tensor contrastive_loss(const torch::Tensor& clean, const torch::Tensor& noisy) {
  if (clean.size(0) != noisy.size(0)) throw std::invalid_argument("contrastive_loss: batch sizes differ");
  if (clean.size(0) < 2) throw std::invalid_argument("contrastive_loss needs N >= 2");
  auto c = clean.flatten(1);
  auto n = noisy.flatten(1);
  if (c.size(1) != n.size(1)) throw std::invalid_argument("contrastive_loss: embedding sizes differ");
  auto cn = c.norm(2, 1);
  auto nn = n.norm(2, 1);
  if ((cn == 0).any().item<bool>() || (nn == 0).any().item<bool>()) {
    throw std::invalid_argument("contrastive_loss: zero-norm embedding, cosine similarity undefined");
  }
  auto sim = torch::matmul(c / cn.unsqueeze(1), (n / nn.unsqueeze(1)).t());  // [N, N]
  return (torch::logsumexp(sim, 1) - sim.diagonal()).mean();
}

double total_loss(const LossBreakdown& b, const LossWeights& w) {
  return w.alpha * b.gan_g + b.rmse_noisy + b.rmse_clean + w.lambda_bc * b.bc + w.lambda_pc * b.pc;
}

std::string runlog_header() {
  return "step,epoch,L_TV,L_GAN_D,L_GAN_G,L_RMSE_noisy,L_RMSE_clean,L_b_contrastive,L_p_contrastive,total\n";
}

std::string runlog_row(long step, int epoch, const LossBreakdown& b) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%ld,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", step, epoch,
                b.tv, b.gan_d, b.gan_g, b.rmse_noisy, b.rmse_clean, b.bc, b.pc, b.total);
  return buf;
}

}  // namespace adassm
