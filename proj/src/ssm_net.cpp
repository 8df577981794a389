#include "adassm/ssm_net.hpp"

#include "adassm/checkpoint.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace adassm {

using nlohmann::json;
namespace nn = torch::nn;

namespace {

int groups_for(int channels, int requested) {
  int g = std::min(requested, channels);
  while (g > 1 && channels % g != 0) --g;
  return std::max(g, 1);
}

Dims encoded_extent(const NetConfig& cfg) {
  Dims d = cfg.input;
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    d = {strided_extent(d.x), strided_extent(d.y), strided_extent(d.z)};
  }
  return d;
}

}  // namespace

void NetConfig::validate() const {
  if (input.x < 1 || input.y < 1 || input.z < 1) throw std::invalid_argument("net input dims must be positive");
  if (num_points < 1) throw std::invalid_argument("num_points must be positive");
  if (latent_dim < 1 || latent_dim > 3 * num_points) {
    throw std::invalid_argument("latent_dim must be in [1, 3M]");
  }
  if (channels.empty()) throw std::invalid_argument("encoder needs at least one conv block");
  if (fc_hidden < 1 || norm_groups < 1) throw std::invalid_argument("fc_hidden and norm_groups must be positive");
}

void to_json(json& j, const NetConfig& c) {
  j = json{{"input", {c.input.x, c.input.y, c.input.z}},
           {"num_points", c.num_points},
           {"latent_dim", c.latent_dim},
           {"channels", c.channels},
           {"fc_hidden", c.fc_hidden},
           {"norm_groups", c.norm_groups}};
}

void from_json(const json& j, NetConfig& c) {
  NetConfig d;
  if (j.contains("input")) {
    const auto& a = j.at("input");
    c.input = {a.at(0).get<int>(), a.at(1).get<int>(), a.at(2).get<int>()};
  } else {
    c.input = d.input;
  }
  c.num_points = j.value("num_points", d.num_points);
  c.latent_dim = j.value("latent_dim", d.latent_dim);
  c.channels = j.value("channels", d.channels);
  c.fc_hidden = j.value("fc_hidden", d.fc_hidden);
  c.norm_groups = j.value("norm_groups", d.norm_groups);
  c.validate();
}

int64_t expected_parameter_count(const NetConfig& cfg) {
  int64_t n = 0;
  int in = 1;
  for (int c : cfg.channels) {
    n += int64_t(in) * c * 27;  // conv weights, no bias
    n += 2 * int64_t(c);        // group-norm affine
    in = c;
  }
  const Dims e = encoded_extent(cfg);
  const int64_t flat = int64_t(in) * static_cast<int64_t>(e.count());
  n += flat * cfg.fc_hidden + cfg.fc_hidden;
  n += int64_t(cfg.fc_hidden) * cfg.latent_dim + cfg.latent_dim;
  n += int64_t(cfg.latent_dim) * 3 * cfg.num_points + 3 * int64_t(cfg.num_points);
  return n;
}

torch::Tensor zscore(const torch::Tensor& volumes) {
  const auto flat = volumes.flatten(1);
  const auto mean = flat.mean(1, /*keepdim=*/true);
  const auto std = (flat - mean).pow(2).mean(1, true).sqrt();
  return ((flat - mean) / (std + 1e-6)).view(volumes.sizes());
}

ImageToSSMNetImpl::ImageToSSMNetImpl(NetConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  encoder_ = nn::Sequential();
  int in = 1;
  for (int c : cfg_.channels) {
    encoder_->push_back(nn::Conv3d(nn::Conv3dOptions(in, c, 3).stride(2).padding(1).bias(false)));
    encoder_->push_back(nn::GroupNorm(nn::GroupNormOptions(groups_for(c, cfg_.norm_groups), c)));
    encoder_->push_back(nn::ReLU());
    in = c;
  }
  const int64_t flat = int64_t(in) * static_cast<int64_t>(encoded_extent(cfg_).count());
  register_module("encoder", encoder_);
  fc1_ = register_module("fc1", nn::Linear(flat, cfg_.fc_hidden));
  fc2_ = register_module("fc2", nn::Linear(cfg_.fc_hidden, cfg_.latent_dim));
  decoder_ = register_module("decoder", nn::Linear(cfg_.latent_dim, 3 * cfg_.num_points));
}

torch::Tensor ImageToSSMNetImpl::encode(const torch::Tensor& volumes) {
  const auto& d = cfg_.input;
  if (volumes.dim() != 5 || volumes.size(1) != 1 || volumes.size(2) != d.z ||
      volumes.size(3) != d.y || volumes.size(4) != d.x) {
    throw std::invalid_argument("ImageToSSMNet: expected input [B, 1, " + std::to_string(d.z) +
                                ", " + std::to_string(d.y) + ", " + std::to_string(d.x) +
                                "], got " + c10::str(volumes.sizes()));
  }
  auto h = encoder_->forward(zscore(volumes));
  h = torch::relu(fc1_->forward(h.flatten(1)));
  return fc2_->forward(h);
}

torch::Tensor ImageToSSMNetImpl::decode(const torch::Tensor& bottleneck) {
  return decoder_->forward(bottleneck);
}

NetOutput ImageToSSMNetImpl::forward(const torch::Tensor& volumes) {
  auto b = encode(volumes);
  auto y = decode(b).view({volumes.size(0), cfg_.num_points, 3});
  return {b, y};
}

void init_decoder_from_pca(ImageToSSMNetImpl& net, const PCAModel& pca) {
  const auto& cfg = net.config();
  const int k = pca.num_components();
  if (cfg.latent_dim < k) {
    throw std::invalid_argument("init_decoder_from_pca: latent_dim " + std::to_string(cfg.latent_dim) +
                                " < PCA components " + std::to_string(k));
  }
  if (pca.dimension() != 3 * cfg.num_points) {
    throw std::invalid_argument("init_decoder_from_pca: PCA dimension " +
                                std::to_string(pca.dimension()) + " != 3M");
  }
  auto dec = net.decoder();
  const auto dtype = dec->weight.scalar_type();
  auto w = torch::zeros({3 * cfg.num_points, cfg.latent_dim}, torch::kFloat64);
  auto acc = w.accessor<double, 2>();
  for (int c = 0; c < k; ++c) {
    const double s = std::sqrt(pca.eigenvalues(c));
    for (int r = 0; r < pca.dimension(); ++r) acc[r][c] = s * pca.components(c, r);
  }
  auto bias = torch::from_blob(const_cast<double*>(pca.mean.data()), {pca.dimension()}, torch::kFloat64);
  torch::NoGradGuard guard;
  dec->weight.copy_(w.to(dtype));
  dec->bias.copy_(bias.to(dtype));
}

torch::Tensor volume_tensor(const std::vector<const Volume*>& vols) {
  if (vols.empty()) throw std::invalid_argument("volume_tensor: empty batch");
  const Dims d = vols.front()->dims;
  auto out = torch::empty({static_cast<int64_t>(vols.size()), 1, d.z, d.y, d.x}, torch::kFloat32);
  float* dst = out.data_ptr<float>();
  for (const auto* v : vols) {
    if (!(v->dims == d)) throw std::invalid_argument("volume_tensor: mixed dims in batch");
    std::copy(v->data.begin(), v->data.end(), dst);
    dst += d.count();
  }
  return out;
}

torch::Tensor correspondence_tensor(const std::vector<const CorrespondenceSet*>& corrs) {
  if (corrs.empty()) throw std::invalid_argument("correspondence_tensor: empty batch");
  const int m = corrs.front()->size();
  auto out = torch::empty({static_cast<int64_t>(corrs.size()), m, 3}, torch::kFloat32);
  auto acc = out.accessor<float, 3>();
  for (std::size_t b = 0; b < corrs.size(); ++b) {
    if (corrs[b]->size() != m) throw std::invalid_argument("correspondence_tensor: mixed M in batch");
    for (int i = 0; i < m; ++i) {
      for (int a = 0; a < 3; ++a) acc[static_cast<int64_t>(b)][i][a] = static_cast<float>(corrs[b]->points(i, a));
    }
  }
  return out;
}

CorrespondenceSet to_correspondences(const torch::Tensor& points) {
  const auto p = points.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  if (p.dim() != 2 || p.size(1) != 3) throw std::invalid_argument("expected [M, 3] points");
  CorrespondenceSet c(static_cast<int>(p.size(0)));
  std::copy(p.data_ptr<double>(), p.data_ptr<double>() + p.numel(), c.points.data());
  return c;
}

Prediction predict(ImageToSSMNetImpl& net, const Volume& vol) {
  torch::NoGradGuard guard;
  const auto dtype = net.decoder()->weight.scalar_type();
  auto out = net.forward(volume_tensor({&vol}).to(dtype));
  Prediction p;
  const auto b = out.bottleneck[0].to(torch::kFloat64).contiguous();
  p.bottleneck = Eigen::Map<const Eigen::VectorXd>(b.data_ptr<double>(), b.numel());
  p.correspondences = to_correspondences(out.points[0]);
  return p;
}

void save_net(const ImageToSSMNetImpl& net, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "net_config.json", json(net.config()).dump(2) + "\n");
  save_parameters(net, dir, "model");
}

ImageToSSMNet load_net(const std::filesystem::path& dir) {
  const auto cfg = json::parse(read_text(dir / "net_config.json")).get<NetConfig>();
  ImageToSSMNet net(cfg);
  load_parameters(*net, dir, "model");
  return net;
}

}  // namespace adassm
