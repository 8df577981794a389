#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <vector>

namespace adassm {

/// Ordered (name, tensor) list of a module's trainable parameters.
std::vector<std::pair<std::string, torch::Tensor>> named_trainable(const torch::nn::Module& m);

/// Writes `<prefix>.f32` (all parameters, little-endian float32, concatenated)
/// and `<prefix>_index.json` listing name, shape and byte offset of each.
void save_parameters(const torch::nn::Module& m, const std::filesystem::path& dir,
                     const std::string& prefix);

/// Loads parameters written by save_parameters into a module of identical layout.
void load_parameters(torch::nn::Module& m, const std::filesystem::path& dir,
                     const std::string& prefix);

/// Deep copy of every parameter (for in-memory best-model snapshots).
std::vector<torch::Tensor> snapshot_parameters(const torch::nn::Module& m);
void restore_parameters(torch::nn::Module& m, const std::vector<torch::Tensor>& snapshot);

/// FNV-1a over parameter bytes; used to assert that a module was left untouched.
std::uint64_t parameter_hash(const torch::nn::Module& m);

}  // namespace adassm
