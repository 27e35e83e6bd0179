#include "sfuda/tensors.hpp"

namespace sfuda {
namespace {

template <typename T>
torch::Tensor from_values(std::span<const T> values, std::vector<int64_t> sizes, torch::ScalarType type) {
  auto options = torch::TensorOptions().dtype(type);
  return torch::from_blob(const_cast<T*>(values.data()), sizes, options).clone();
}

template <typename T>
std::vector<T> values_of(const torch::Tensor& tensor, torch::ScalarType type) {
  auto t = tensor.detach().to(torch::kCPU, type).contiguous();
  const T* data = t.template data_ptr<T>();
  return std::vector<T>(data, data + t.numel());
}

GridShape shape_of(const torch::Tensor& chw, const char* what) {
  require(chw.dim() == 3, std::string(what) + " tensor must be [C, H, W]");
  return {chw.size(0), chw.size(1), chw.size(2)};
}

}  // namespace

torch::Tensor to_tensor(const Image2D& image) {
  const auto& s = image.shape();
  return from_values(image.values(), {1, s.channels, s.height, s.width}, torch::kFloat32);
}

torch::Tensor to_tensor(const MaskMap& mask) {
  return from_values(mask.labels(), {1, mask.height(), mask.width()}, torch::kInt32).to(torch::kInt64);
}

torch::Tensor to_tensor(const ProbMap& probs) {
  const auto& s = probs.shape();
  return from_values(probs.values(), {1, s.channels, s.height, s.width}, torch::kFloat64);
}

torch::Tensor to_tensor(const FeatureMap& features) {
  const auto& s = features.shape();
  return from_values(features.values(), {1, s.channels, s.height, s.width}, torch::kFloat64);
}

torch::Tensor stack_images(std::span<const Image2D> images) {
  require(!images.empty(), "cannot stack an empty image list");
  std::vector<torch::Tensor> parts;
  parts.reserve(images.size());
  for (const auto& image : images) parts.push_back(to_tensor(image));
  return torch::cat(parts, 0);
}

torch::Tensor stack_masks(std::span<const MaskMap> masks) {
  require(!masks.empty(), "cannot stack an empty mask list");
  std::vector<torch::Tensor> parts;
  parts.reserve(masks.size());
  for (const auto& mask : masks) parts.push_back(to_tensor(mask));
  return torch::cat(parts, 0);
}

Image2D image_from_tensor(const torch::Tensor& chw) {
  return Image2D(shape_of(chw, "image"), values_of<float>(chw, torch::kFloat32));
}

MaskMap mask_from_tensor(const torch::Tensor& hw, int32_t class_count) {
  require(hw.dim() == 2, "mask tensor must be [H, W]");
  return MaskMap(hw.size(0), hw.size(1), values_of<int32_t>(hw, torch::kInt32), class_count);
}

ProbMap prob_map_from_tensor(const torch::Tensor& khw) {
  return ProbMap(shape_of(khw, "probability"), values_of<double>(khw, torch::kFloat64));
}

FeatureMap feature_map_from_tensor(const torch::Tensor& chw) {
  return FeatureMap(shape_of(chw, "feature"), values_of<double>(chw, torch::kFloat64));
}

}  // namespace sfuda
