#pragma once

#include "adassm/shape_space.hpp"
#include "adassm/volume.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <filesystem>
#include <vector>

namespace adassm {

struct NetConfig {
  Dims input{48, 48, 48};
  int num_points = 128;
  int latent_dim = 32;
  std::vector<int> channels{8, 16, 32, 64};
  int fc_hidden = 128;
  int norm_groups = 4;

  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

void to_json(nlohmann::json& j, const NetConfig& c);
void from_json(const nlohmann::json& j, NetConfig& c);

/// Spatial extent after one 3x3x3, stride-2, pad-1 convolution.
constexpr int strided_extent(int n) { return (n - 1) / 2 + 1; }

/// Closed-form trainable parameter count of ImageToSSMNet for `cfg`.
int64_t expected_parameter_count(const NetConfig& cfg);

struct NetOutput {
  torch::Tensor bottleneck;  // [B, L]
  torch::Tensor points;      // [B, M, 3]
};

/// Strided 3D conv encoder (conv + group norm + ReLU per block, then two
/// fully-connected layers) to an L-dimensional bottleneck, followed by a
/// single affine decoder to 3M coordinates.
class ImageToSSMNetImpl : public torch::nn::Module {
 public:
  explicit ImageToSSMNetImpl(NetConfig cfg);

  /// volumes: [B, 1, Dz, Dy, Dx]. Each volume is z-scored before encoding.
  NetOutput forward(const torch::Tensor& volumes);
  torch::Tensor encode(const torch::Tensor& volumes);
  /// bottleneck [B, L] -> flattened correspondences [B, 3M].
  torch::Tensor decode(const torch::Tensor& bottleneck);

  const NetConfig& config() const { return cfg_; }
  torch::nn::Linear decoder() const { return decoder_; }

 private:
  NetConfig cfg_;
  torch::nn::Sequential encoder_{nullptr};
  torch::nn::Linear fc1_{nullptr};
  torch::nn::Linear fc2_{nullptr};
  torch::nn::Linear decoder_{nullptr};
};
TORCH_MODULE(ImageToSSMNet);

/// Per-sample z-score over all voxels.
torch::Tensor zscore(const torch::Tensor& volumes);

/// Decoder columns k < K become sqrt(eigenvalue_k) * component_k, the rest
/// zero; bias becomes the PCA mean. Throws when L < K.
void init_decoder_from_pca(ImageToSSMNetImpl& net, const PCAModel& pca);

torch::Tensor volume_tensor(const std::vector<const Volume*>& vols);
torch::Tensor correspondence_tensor(const std::vector<const CorrespondenceSet*>& corrs);
CorrespondenceSet to_correspondences(const torch::Tensor& points);  // [M, 3]

struct Prediction {
  Eigen::VectorXd bottleneck;
  CorrespondenceSet correspondences;
};
/// Single-volume inference (no grad).
Prediction predict(ImageToSSMNetImpl& net, const Volume& vol);

/// Checkpoint directory: net_config.json plus model.f32 / model_index.json.
void save_net(const ImageToSSMNetImpl& net, const std::filesystem::path& dir);
ImageToSSMNet load_net(const std::filesystem::path& dir);

}  // namespace adassm
