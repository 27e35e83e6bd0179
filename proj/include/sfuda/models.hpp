#pragma once

#include <torch/torch.h>

#include <utility>

#include "sfuda/core.hpp"

namespace sfuda::models {

/// Capacity of the ENet-style segmentation network. Channel counts of the
/// reference layout (16 / 64 / 128) are multiplied by `width_multiplier`.
struct SegmentationNetworkSpec {
  int64_t input_channels = 1;
  int64_t class_count = 2;
  double width_multiplier = 1.0;

  /// Channels of the exposed pre-final feature map.
  int64_t feature_channels() const;
  int64_t scaled(int64_t reference_channels) const;
  void validate() const;
};

struct ShapePriorSpec {
  int64_t class_count = 2;
  int64_t image_size = 256;
  int64_t base_channels = 16;
  int64_t bottleneck_dim = 64;

  void validate() const;
};

struct SegmentationOutput {
  torch::Tensor logits;    // [B, K, H, W]
  torch::Tensor probs;     // softmax of logits
  torch::Tensor features;  // [B, C, H/2, W/2], input of the final layer
};

struct ShapePriorOutput {
  torch::Tensor logits;
  torch::Tensor probs;
};

namespace detail {

class InitialBlockImpl : public torch::nn::Module {
 public:
  InitialBlockImpl(int64_t in_channels, int64_t out_channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv{nullptr};
  torch::nn::BatchNorm2d bn{nullptr};
  torch::nn::PReLU act{nullptr};
};
TORCH_MODULE(InitialBlock);

enum class ConvKind { regular, dilated, asymmetric };

class RegularBottleneckImpl : public torch::nn::Module {
 public:
  RegularBottleneckImpl(int64_t channels, ConvKind kind, int64_t dilation, double dropout);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential branch{nullptr};
  torch::nn::PReLU out_act{nullptr};
};
TORCH_MODULE(RegularBottleneck);

class DownsamplingBottleneckImpl : public torch::nn::Module {
 public:
  DownsamplingBottleneckImpl(int64_t in_channels, int64_t out_channels, double dropout);
  /// Returns the block output and the pooling indices for the matching upsampler.
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& x);

 private:
  int64_t in_channels_;
  int64_t out_channels_;
  torch::nn::Sequential branch{nullptr};
  torch::nn::PReLU out_act{nullptr};
};
TORCH_MODULE(DownsamplingBottleneck);

class UpsamplingBottleneckImpl : public torch::nn::Module {
 public:
  UpsamplingBottleneckImpl(int64_t in_channels, int64_t out_channels, double dropout);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& indices, c10::IntArrayRef output_size);

 private:
  torch::nn::Sequential main_proj{nullptr};
  torch::nn::Sequential reduce{nullptr};
  torch::nn::ConvTranspose2d up{nullptr};
  torch::nn::Sequential expand{nullptr};
  torch::nn::PReLU out_act{nullptr};
};
TORCH_MODULE(UpsamplingBottleneck);

}  // namespace detail

/// ENet encoder-decoder: initial block, five bottleneck stages and a
/// transposed-convolution classifier. Input height and width must be
/// multiples of 8.
class SegmentationNetImpl : public torch::nn::Module {
 public:
  explicit SegmentationNetImpl(SegmentationNetworkSpec spec);
  SegmentationOutput forward(const torch::Tensor& x);
  const SegmentationNetworkSpec& spec() const { return spec_; }

 private:
  SegmentationNetworkSpec spec_;
  detail::InitialBlock initial{nullptr};
  detail::DownsamplingBottleneck down1{nullptr};
  torch::nn::ModuleList stage1{nullptr};
  detail::DownsamplingBottleneck down2{nullptr};
  torch::nn::ModuleList stage2{nullptr};
  torch::nn::ModuleList stage3{nullptr};
  detail::UpsamplingBottleneck up4{nullptr};
  torch::nn::ModuleList stage4{nullptr};
  detail::UpsamplingBottleneck up5{nullptr};
  torch::nn::ModuleList stage5{nullptr};
  torch::nn::ConvTranspose2d classifier{nullptr};
};
TORCH_MODULE(SegmentationNet);

/// Convolutional autoencoder over K-channel probability maps: four stride-2
/// stages, a dense bottleneck, and a mirrored decoder with softmax output.
class ShapePriorNetImpl : public torch::nn::Module {
 public:
  explicit ShapePriorNetImpl(ShapePriorSpec spec);
  ShapePriorOutput forward(const torch::Tensor& probs);
  const ShapePriorSpec& spec() const { return spec_; }

 private:
  ShapePriorSpec spec_;
  int64_t code_channels_;
  int64_t code_extent_;
  torch::nn::Sequential encoder{nullptr};
  torch::nn::Linear to_code{nullptr};
  torch::nn::Linear from_code{nullptr};
  torch::nn::Sequential decoder{nullptr};
};
TORCH_MODULE(ShapePriorNet);

/// Inference-mode forward of a single image.
std::pair<ProbMap, FeatureMap> forward_segmentation(SegmentationNet& net, const Image2D& image);

/// Inference-mode forward of a single probability map.
ProbMap forward_shape_prior(ShapePriorNet& net, const ProbMap& probs);

/// Disables gradient accumulation for every parameter and switches the
/// module to inference mode. Gradients still flow through it to its input.
void freeze(torch::nn::Module& module);

bool is_frozen(const torch::nn::Module& module);

}  // namespace sfuda::models
