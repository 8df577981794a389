#pragma once

#include "adassm/volume.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <vector>

namespace adassm {

struct GeneratorConfig {
  Dims input{48, 48, 48};
  int latent_dim = 16;            // Z
  std::vector<int> channels{8, 16, 32};  // three encoder levels
  int latent_grid = 6;            // z is mapped to a latent_grid^3 field, then upsampled

  void validate() const;
  bool operator==(const GeneratorConfig&) const = default;
};

struct DiscriminatorConfig {
  Dims input{48, 48, 48};
  std::vector<int> channels{8, 16, 32};
  // Fixed affine input normalisation (x - offset) * scale; set from training data.
  double input_offset = 0.0;
  double input_scale = 1.0;

  void validate() const;
  bool operator==(const DiscriminatorConfig&) const = default;
};

void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);
void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);

/// Conditional noise generator G(z, x). Three strided encoder levels; the
/// latent code becomes one extra channel after the first. One decoder level
/// with a skip connection feeds a quarter-resolution head whose 64 channels
/// are voxel-shuffled into 4x4x4 blocks at full resolution, then tanh.
class NoiseGeneratorImpl : public torch::nn::Module {
 public:
  explicit NoiseGeneratorImpl(GeneratorConfig cfg);

  /// z: [B, Z], x: [B, 1, Dz, Dy, Dx] -> noise [B, 1, Dz, Dy, Dx] in [-1, 1].
  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& x);
  const GeneratorConfig& config() const { return cfg_; }

 private:
  GeneratorConfig cfg_;
  torch::nn::Linear latent_{nullptr};
  torch::nn::Sequential enc0_{nullptr}, enc1_{nullptr}, enc2_{nullptr};
  static constexpr int64_t kShuffle = 4;
  torch::nn::Sequential dec1_{nullptr};
  torch::nn::Conv3d head_{nullptr};
};
TORCH_MODULE(NoiseGenerator);

/// Three strided conv blocks and a fully-connected sigmoid head.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(DiscriminatorConfig cfg);

  /// Pre-sigmoid score [B].
  torch::Tensor logits(const torch::Tensor& x);
  /// Probability [B], clamped into [1e-7, 1 - 1e-7].
  torch::Tensor forward(const torch::Tensor& x);
  const DiscriminatorConfig& config() const { return cfg_; }
  void set_normalization(double offset, double scale);

 private:
  DiscriminatorConfig cfg_;
  torch::nn::Sequential features_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Discriminator);

inline constexpr double kProbabilityFloor = 1e-7;

/// Identity forward; backward multiplies incoming gradients by -scale.
torch::Tensor grad_reverse(const torch::Tensor& x, double scale = 1.0);

/// Voxelwise x + noise_range * noise.
torch::Tensor apply_noise(const torch::Tensor& x, const torch::Tensor& noise, double noise_range);
Volume apply_noise(const Volume& x, const std::vector<float>& noise, double noise_range);

/// Single-volume helpers for inspection and tests.
std::vector<float> generate_noise(NoiseGeneratorImpl& g, const torch::Tensor& z, const Volume& x);
double discriminate(DiscriminatorImpl& d, const Volume& x);

}  // namespace adassm
