#include "adassm/checkpoint.hpp"

#include "adassm/volume.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <stdexcept>

namespace adassm {

using nlohmann::json;

std::vector<std::pair<std::string, torch::Tensor>> named_trainable(const torch::nn::Module& m) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : m.named_parameters(/*recurse=*/true)) {
    out.emplace_back(item.key(), item.value());
  }
  return out;
}

void save_parameters(const torch::nn::Module& m, const std::filesystem::path& dir,
                     const std::string& prefix) {
  std::filesystem::create_directories(dir);
  std::vector<float> blob;
  json tensors = json::array();
  for (const auto& [name, t] : named_trainable(m)) {
    const auto flat = t.detach().to(torch::kCPU, torch::kFloat32).contiguous().view({-1});
    const auto offset = blob.size() * sizeof(float);
    const float* p = flat.data_ptr<float>();
    blob.insert(blob.end(), p, p + flat.numel());
    tensors.push_back({{"name", name}, {"shape", t.sizes().vec()}, {"offset", offset}});
  }
  write_f32(dir / (prefix + ".f32"), blob);
  json index{{"dtype", "float32"},
             {"byte_order", "little"},
             {"blob", prefix + ".f32"},
             {"tensors", tensors}};
  write_text(dir / (prefix + "_index.json"), index.dump(2) + "\n");
}

void load_parameters(torch::nn::Module& m, const std::filesystem::path& dir,
                     const std::string& prefix) {
  const json index = json::parse(read_text(dir / (prefix + "_index.json")));
  const auto params = named_trainable(m);
  const auto& tensors = index.at("tensors");
  if (tensors.size() != params.size()) {
    throw std::runtime_error(prefix + ": checkpoint has " + std::to_string(tensors.size()) +
                             " tensors, module has " + std::to_string(params.size()));
  }
  std::size_t total = 0;
  for (const auto& [name, t] : params) total += static_cast<std::size_t>(t.numel());
  const auto blob = read_f32(dir / index.at("blob").get<std::string>(), total);

  torch::NoGradGuard guard;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = params[i];
    const auto& rec = tensors[i];
    if (rec.at("name").get<std::string>() != name ||
        rec.at("shape").get<std::vector<int64_t>>() != t.sizes().vec()) {
      throw std::runtime_error(prefix + ": checkpoint entry " + rec.dump() +
                               " does not match module parameter " + name);
    }
    const auto offset = rec.at("offset").get<std::size_t>() / sizeof(float);
    auto src = torch::from_blob(const_cast<float*>(blob.data() + offset), t.sizes(), torch::kFloat32);
    t.copy_(src.to(t.dtype()));
  }
}

std::vector<torch::Tensor> snapshot_parameters(const torch::nn::Module& m) {
  std::vector<torch::Tensor> out;
  for (const auto& p : m.parameters()) out.push_back(p.detach().clone());
  return out;
}

void restore_parameters(torch::nn::Module& m, const std::vector<torch::Tensor>& snapshot) {
  auto params = m.parameters();
  if (params.size() != snapshot.size()) throw std::invalid_argument("snapshot size mismatch");
  torch::NoGradGuard guard;
  for (std::size_t i = 0; i < params.size(); ++i) params[i].copy_(snapshot[i]);
}

std::uint64_t parameter_hash(const torch::nn::Module& m) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : m.parameters()) {
    const auto c = p.detach().contiguous().to(torch::kCPU);
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const auto n = static_cast<std::size_t>(c.numel()) * c.element_size();
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace adassm
