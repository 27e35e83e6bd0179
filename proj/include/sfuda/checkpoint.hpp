#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace sfuda {

inline constexpr int kCheckpointSchemaVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<float> values;

  bool operator==(const NamedArray&) const = default;
};

struct CheckpointMeta {
  std::string kind;  // "segmentation" or "shape_prior"
  int64_t epoch = -1;
  double validation_loss = 0.0;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();
};

/// Model state captured at one epoch: parameters and floating-point buffers
/// in registration order, plus their SHA-256 digest.
struct Checkpoint {
  std::vector<NamedArray> arrays;
  std::string digest;
  CheckpointMeta meta;
};

/// Lowercase hex SHA-256 over names, shapes and little-endian float bytes.
std::string digest_arrays(std::span<const NamedArray> arrays);
std::string digest_module(const torch::nn::Module& module);

std::vector<NamedArray> capture_arrays(const torch::nn::Module& module);
Checkpoint capture(const torch::nn::Module& module, CheckpointMeta meta);

/// Copies the checkpoint state into a module of identical architecture.
void restore(const Checkpoint& checkpoint, torch::nn::Module& module);

/// Writes `dir/params.bin` and `dir/meta.json` via a temporary sibling
/// directory that is renamed into place.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);

/// Loads and re-verifies the digest; a mismatch is a contract violation.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace sfuda
