#pragma once

#include <torch/torch.h>

#include "sfuda/core.hpp"

namespace sfuda {

// Conversions between the value types and batched tensors. Single items map
// to a leading batch dimension of one.

torch::Tensor to_tensor(const Image2D& image);                     // [1, C, H, W] float
torch::Tensor to_tensor(const MaskMap& mask);                      // [1, H, W] int64
torch::Tensor to_tensor(const ProbMap& probs);                     // [1, K, H, W] double
torch::Tensor to_tensor(const FeatureMap& features);               // [1, C, H, W] double
torch::Tensor stack_images(std::span<const Image2D> images);       // [B, C, H, W] float
torch::Tensor stack_masks(std::span<const MaskMap> masks);         // [B, H, W] int64

Image2D image_from_tensor(const torch::Tensor& chw);
MaskMap mask_from_tensor(const torch::Tensor& hw, int32_t class_count = 2);
ProbMap prob_map_from_tensor(const torch::Tensor& khw);
FeatureMap feature_map_from_tensor(const torch::Tensor& chw);

}  // namespace sfuda
