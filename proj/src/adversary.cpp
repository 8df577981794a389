#include "adassm/adversary.hpp"

#include "adassm/ssm_net.hpp"

#include <stdexcept>

namespace adassm {

using nlohmann::json;
namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

int groups_for(int channels) {
  int g = std::min(4, channels);
  while (g > 1 && channels % g != 0) --g;
  return std::max(g, 1);
}

void append_block(nn::Sequential& s, int in, int out, int stride, bool norm) {
  s->push_back(nn::Conv3d(nn::Conv3dOptions(in, out, 3).stride(stride).padding(1)));
  if (norm) s->push_back(nn::GroupNorm(nn::GroupNormOptions(groups_for(out), out)));
  s->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
}

nn::Sequential conv_block(int in, int out, int stride, bool norm) {
  nn::Sequential s;
  append_block(s, in, out, stride, norm);
  return s;
}

torch::Tensor resize_to(const torch::Tensor& t, const torch::Tensor& like) {
  return F::interpolate(t, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{like.size(2), like.size(3), like.size(4)})
                               .mode(torch::kTrilinear)
                               .align_corners(false));
}

void check_input(const Dims& d, const torch::Tensor& x, const char* who) {
  if (x.dim() != 5 || x.size(1) != 1 || x.size(2) != d.z || x.size(3) != d.y || x.size(4) != d.x) {
    throw std::invalid_argument(std::string(who) + ": expected input [B, 1, " + std::to_string(d.z) +
                                ", " + std::to_string(d.y) + ", " + std::to_string(d.x) + "], got " +
                                c10::str(x.sizes()));
  }
}

// [B, r^3, D, H, W] -> [B, 1, rD, rH, rW]; channel (i * r + j) * r + k fills offset (i, j, k).
torch::Tensor voxel_shuffle(const torch::Tensor& t, int64_t r) {
  const auto b = t.size(0), d = t.size(2), h = t.size(3), w = t.size(4);
  return t.view({b, r, r, r, d, h, w}).permute({0, 4, 1, 5, 2, 6, 3}).reshape({b, 1, d * r, h * r, w * r});
}

Dims dims_from(const json& j) { return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>()}; }

}  // namespace

void GeneratorConfig::validate() const {
  if (channels.size() != 3) throw std::invalid_argument("generator needs exactly 3 encoder levels");
  if (latent_dim < 1 || latent_grid < 1) throw std::invalid_argument("generator latent sizes must be positive");
  if (input.x < 1 || input.y < 1 || input.z < 1) throw std::invalid_argument("generator input dims must be positive");
}

void DiscriminatorConfig::validate() const {
  if (channels.size() != 3) throw std::invalid_argument("discriminator needs exactly 3 conv blocks");
  if (input.x < 1 || input.y < 1 || input.z < 1) throw std::invalid_argument("discriminator input dims must be positive");
}

void to_json(json& j, const GeneratorConfig& c) {
  j = json{{"input", {c.input.x, c.input.y, c.input.z}},
           {"latent_dim", c.latent_dim},
           {"channels", c.channels},
           {"latent_grid", c.latent_grid}};
}

void from_json(const json& j, GeneratorConfig& c) {
  GeneratorConfig d;
  c.input = j.contains("input") ? dims_from(j.at("input")) : d.input;
  c.latent_dim = j.value("latent_dim", d.latent_dim);
  c.channels = j.value("channels", d.channels);
  c.latent_grid = j.value("latent_grid", d.latent_grid);
  c.validate();
}

void to_json(json& j, const DiscriminatorConfig& c) {
  j = json{{"input", {c.input.x, c.input.y, c.input.z}},
           {"channels", c.channels},
           {"input_offset", c.input_offset},
           {"input_scale", c.input_scale}};
}

void from_json(const json& j, DiscriminatorConfig& c) {
  DiscriminatorConfig d;
  c.input = j.contains("input") ? dims_from(j.at("input")) : d.input;
  c.channels = j.value("channels", d.channels);
  c.input_offset = j.value("input_offset", d.input_offset);
  c.input_scale = j.value("input_scale", d.input_scale);
  c.validate();
}

NoiseGeneratorImpl::NoiseGeneratorImpl(GeneratorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const auto& c = cfg_.channels;
  const int g = cfg_.latent_grid;
  latent_ = register_module("latent", nn::Linear(cfg_.latent_dim, g * g * g));
  enc0_ = register_module("enc0", conv_block(1, c[0], 2, true));
  enc1_ = register_module("enc1", conv_block(c[0] + 1, c[1], 2, true));
  enc2_ = register_module("enc2", conv_block(c[1], c[2], 2, true));
  dec1_ = register_module("dec1", conv_block(c[2] + c[1], c[1], 1, true));
  head_ = register_module("head", nn::Conv3d(nn::Conv3dOptions(c[1], kShuffle * kShuffle * kShuffle, 3).padding(1)));
}

torch::Tensor NoiseGeneratorImpl::forward(const torch::Tensor& z, const torch::Tensor& x) {
  check_input(cfg_.input, x, "NoiseGenerator");
  if (z.dim() != 2 || z.size(0) != x.size(0) || z.size(1) != cfg_.latent_dim) {
    throw std::invalid_argument("NoiseGenerator: expected z [" + std::to_string(x.size(0)) + ", " +
                                std::to_string(cfg_.latent_dim) + "], got " + c10::str(z.sizes()));
  }
  const int g = cfg_.latent_grid;
  auto e0 = enc0_->forward(zscore(x));
  auto zfield = resize_to(latent_->forward(z).view({x.size(0), 1, g, g, g}), e0);
  auto e1 = enc1_->forward(torch::cat({e0, zfield}, 1));
  auto e2 = enc2_->forward(e1);
  auto d1 = dec1_->forward(torch::cat({resize_to(e2, e1), e1}, 1));
  auto field = voxel_shuffle(head_->forward(d1), kShuffle);
  if (!field.sizes().equals(x.sizes())) field = resize_to(field, x);
  return torch::tanh(field);
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const auto& c = cfg_.channels;
  features_ = nn::Sequential();
  append_block(features_, 1, c[0], 2, false);
  append_block(features_, c[0], c[1], 2, false);
  append_block(features_, c[1], c[2], 2, false);
  register_module("features", features_);
  Dims e = cfg_.input;
  for (int i = 0; i < 3; ++i) e = {strided_extent(e.x), strided_extent(e.y), strided_extent(e.z)};
  head_ = register_module("head", nn::Linear(int64_t(c[2]) * static_cast<int64_t>(e.count()), 1));
}

void DiscriminatorImpl::set_normalization(double offset, double scale) {
  cfg_.input_offset = offset;
  cfg_.input_scale = scale;
}

torch::Tensor DiscriminatorImpl::logits(const torch::Tensor& x) {
  check_input(cfg_.input, x, "Discriminator");
  auto h = (x - cfg_.input_offset) * cfg_.input_scale;
  return head_->forward(features_->forward(h).flatten(1)).squeeze(1);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) {
  return torch::sigmoid(logits(x)).clamp(kProbabilityFloor, 1.0 - kProbabilityFloor);
}

namespace {

struct GradReverseFn : public torch::autograd::Function<GradReverseFn> {
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& x,
                               double scale) {
    ctx->saved_data["scale"] = scale;
    return x.view_as(x);
  }

  static torch::autograd::variable_list backward(torch::autograd::AutogradContext* ctx,
                                                 torch::autograd::variable_list grads) {
    const double scale = ctx->saved_data["scale"].toDouble();
    return {grads[0] * (-scale), torch::Tensor()};
  }
};

}  // namespace

torch::Tensor grad_reverse(const torch::Tensor& x, double scale) {
  return GradReverseFn::apply(x, scale);
}

torch::Tensor apply_noise(const torch::Tensor& x, const torch::Tensor& noise, double noise_range) {
  if (!x.sizes().equals(noise.sizes())) {
    throw std::invalid_argument("apply_noise: volume " + c10::str(x.sizes()) + " vs noise " +
                                c10::str(noise.sizes()));
  }
  return x + noise_range * noise;
}

Volume apply_noise(const Volume& x, const std::vector<float>& noise, double noise_range) {
  if (noise.size() != x.data.size()) throw std::invalid_argument("apply_noise: size mismatch");
  Volume out = x;
  for (std::size_t i = 0; i < noise.size(); ++i) {
    out.data[i] = static_cast<float>(x.data[i] + noise_range * noise[i]);
  }
  return out;
}

std::vector<float> generate_noise(NoiseGeneratorImpl& g, const torch::Tensor& z, const Volume& x) {
  torch::NoGradGuard guard;
  const auto dtype = g.parameters().front().scalar_type();
  auto n = g.forward(z.view({1, -1}).to(dtype), volume_tensor({&x}).to(dtype))
               .to(torch::kFloat32)
               .contiguous();
  return {n.data_ptr<float>(), n.data_ptr<float>() + n.numel()};
}

double discriminate(DiscriminatorImpl& d, const Volume& x) {
  torch::NoGradGuard guard;
  const auto dtype = d.parameters().front().scalar_type();
  return d.forward(volume_tensor({&x}).to(dtype)).item<double>();
}

}  // namespace adassm
