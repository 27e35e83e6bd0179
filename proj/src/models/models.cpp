#include "sfuda/models.hpp"

#include <cmath>

#include "sfuda/tensors.hpp"

namespace sfuda::models {

namespace nn = torch::nn;

int64_t SegmentationNetworkSpec::scaled(int64_t reference_channels) const {
  return std::max<int64_t>(1, std::llround(static_cast<double>(reference_channels) * width_multiplier));
}

int64_t SegmentationNetworkSpec::feature_channels() const { return scaled(16); }

void SegmentationNetworkSpec::validate() const {
  require(input_channels == 1 || input_channels == 3, "segmentation input channels must be 1 or 3");
  require(class_count >= 2, "segmentation class count must be at least 2");
  require(width_multiplier > 0, "width multiplier must be positive");
}

void ShapePriorSpec::validate() const {
  require(class_count >= 2, "shape prior class count must be at least 2");
  require(image_size >= 16 && image_size % 16 == 0, "shape prior image size must be a positive multiple of 16");
  require(base_channels > 0 && bottleneck_dim > 0, "shape prior widths must be positive");
}

namespace detail {
namespace {

nn::Conv2dOptions conv_options(int64_t in, int64_t out, std::vector<int64_t> kernel) {
  return nn::Conv2dOptions(in, out, kernel).bias(false);
}

nn::PReLU prelu() { return nn::PReLU(nn::PReLUOptions().init(0.25)); }

}  // namespace

InitialBlockImpl::InitialBlockImpl(int64_t in_channels, int64_t out_channels) {
  conv = register_module("conv", nn::Conv2d(conv_options(in_channels, out_channels - in_channels, {3, 3})
                                                .stride(2)
                                                .padding(1)));
  bn = register_module("bn", nn::BatchNorm2d(out_channels));
  act = register_module("act", prelu());
}

torch::Tensor InitialBlockImpl::forward(const torch::Tensor& x) {
  auto pooled = torch::max_pool2d(x, {2, 2}, {2, 2});
  return act(bn(torch::cat({conv(x), pooled}, 1)));
}

RegularBottleneckImpl::RegularBottleneckImpl(int64_t channels, ConvKind kind, int64_t dilation, double dropout) {
  const int64_t internal = std::max<int64_t>(1, channels / 4);
  branch = nn::Sequential();
  branch->push_back(nn::Conv2d(conv_options(channels, internal, {1, 1})));
  branch->push_back(nn::BatchNorm2d(internal));
  branch->push_back(prelu());
  switch (kind) {
    case ConvKind::asymmetric:
      branch->push_back(nn::Conv2d(conv_options(internal, internal, {5, 1}).padding({2, 0})));
      branch->push_back(nn::BatchNorm2d(internal));
      branch->push_back(prelu());
      branch->push_back(nn::Conv2d(conv_options(internal, internal, {1, 5}).padding({0, 2})));
      break;
    case ConvKind::dilated:
      branch->push_back(nn::Conv2d(conv_options(internal, internal, {3, 3}).padding(dilation).dilation(dilation)));
      break;
    case ConvKind::regular:
      branch->push_back(nn::Conv2d(conv_options(internal, internal, {3, 3}).padding(1)));
      break;
  }
  branch->push_back(nn::BatchNorm2d(internal));
  branch->push_back(prelu());
  branch->push_back(nn::Conv2d(conv_options(internal, channels, {1, 1})));
  branch->push_back(nn::BatchNorm2d(channels));
  branch->push_back(prelu());
  branch->push_back(nn::Dropout2d(dropout));
  register_module("branch", branch);
  out_act = register_module("out_act", prelu());
}

torch::Tensor RegularBottleneckImpl::forward(const torch::Tensor& x) { return out_act(x + branch->forward(x)); }

DownsamplingBottleneckImpl::DownsamplingBottleneckImpl(int64_t in_channels, int64_t out_channels, double dropout)
    : in_channels_(in_channels), out_channels_(out_channels) {
  require(out_channels >= in_channels, "downsampling bottleneck cannot reduce channels");
  const int64_t internal = std::max<int64_t>(1, in_channels / 4);
  branch = nn::Sequential();
  branch->push_back(nn::Conv2d(conv_options(in_channels, internal, {2, 2}).stride(2)));
  branch->push_back(nn::BatchNorm2d(internal));
  branch->push_back(prelu());
  branch->push_back(nn::Conv2d(conv_options(internal, internal, {3, 3}).padding(1)));
  branch->push_back(nn::BatchNorm2d(internal));
  branch->push_back(prelu());
  branch->push_back(nn::Conv2d(conv_options(internal, out_channels, {1, 1})));
  branch->push_back(nn::BatchNorm2d(out_channels));
  branch->push_back(prelu());
  branch->push_back(nn::Dropout2d(dropout));
  register_module("branch", branch);
  out_act = register_module("out_act", prelu());
}

std::pair<torch::Tensor, torch::Tensor> DownsamplingBottleneckImpl::forward(const torch::Tensor& x) {
  auto [main, indices] = torch::max_pool2d_with_indices(x, {2, 2}, {2, 2});
  if (out_channels_ > in_channels_) {
    auto padding = torch::zeros({main.size(0), out_channels_ - in_channels_, main.size(2), main.size(3)},
                                main.options());
    main = torch::cat({main, padding}, 1);
  }
  return {out_act(main + branch->forward(x)), indices};
}

UpsamplingBottleneckImpl::UpsamplingBottleneckImpl(int64_t in_channels, int64_t out_channels, double dropout) {
  const int64_t internal = std::max<int64_t>(1, in_channels / 4);
  main_proj = nn::Sequential(nn::Conv2d(conv_options(in_channels, out_channels, {1, 1})),
                             nn::BatchNorm2d(out_channels));
  reduce = nn::Sequential(nn::Conv2d(conv_options(in_channels, internal, {1, 1})), nn::BatchNorm2d(internal),
                          prelu());
  up = nn::ConvTranspose2d(nn::ConvTranspose2dOptions(internal, internal, 2).stride(2).bias(false));
  expand = nn::Sequential(nn::BatchNorm2d(internal), prelu(),
                          nn::Conv2d(conv_options(internal, out_channels, {1, 1})),
                          nn::BatchNorm2d(out_channels), prelu(), nn::Dropout2d(dropout));
  register_module("main_proj", main_proj);
  register_module("reduce", reduce);
  register_module("up", up);
  register_module("expand", expand);
  out_act = register_module("out_act", prelu());
}

torch::Tensor UpsamplingBottleneckImpl::forward(const torch::Tensor& x, const torch::Tensor& indices,
                                                c10::IntArrayRef output_size) {
  auto main = torch::max_unpool2d(main_proj->forward(x), indices, output_size);
  auto ext = expand->forward(up(reduce->forward(x)));
  return out_act(main + ext);
}

}  // namespace detail

SegmentationNetImpl::SegmentationNetImpl(SegmentationNetworkSpec spec) : spec_(spec) {
  using detail::ConvKind;
  spec_.validate();
  const int64_t c0 = std::max(spec_.scaled(16), spec_.input_channels + 1);
  const int64_t c1 = std::max(spec_.scaled(64), c0);
  const int64_t c2 = std::max(spec_.scaled(128), c1);

  initial = register_module("initial", detail::InitialBlock(spec_.input_channels, c0));
  down1 = register_module("down1", detail::DownsamplingBottleneck(c0, c1, 0.01));
  stage1 = nn::ModuleList();
  for (int i = 0; i < 4; ++i) stage1->push_back(detail::RegularBottleneck(c1, ConvKind::regular, 1, 0.01));
  register_module("stage1", stage1);

  down2 = register_module("down2", detail::DownsamplingBottleneck(c1, c2, 0.1));
  // Stages 2 and 3 share the layout: regular, dilated 2, asymmetric 5,
  // dilated 4, regular, dilated 8, asymmetric 5, dilated 16.
  auto middle_stage = [&] {
    nn::ModuleList stage;
    stage->push_back(detail::RegularBottleneck(c2, ConvKind::regular, 1, 0.1));
    stage->push_back(detail::RegularBottleneck(c2, ConvKind::dilated, 2, 0.1));
    stage->push_back(detail::RegularBottleneck(c2, ConvKind::asymmetric, 1, 0.1));
    stage->push_back(detail::RegularBottleneck(c2, ConvKind::dilated, 4, 0.1));
    stage->push_back(detail::RegularBottleneck(c2, ConvKind::regular, 1, 0.1));
    stage->push_back(detail::RegularBottleneck(c2, ConvKind::dilated, 8, 0.1));
    stage->push_back(detail::RegularBottleneck(c2, ConvKind::asymmetric, 1, 0.1));
    stage->push_back(detail::RegularBottleneck(c2, ConvKind::dilated, 16, 0.1));
    return stage;
  };
  stage2 = register_module("stage2", middle_stage());
  stage3 = register_module("stage3", middle_stage());

  up4 = register_module("up4", detail::UpsamplingBottleneck(c2, c1, 0.1));
  stage4 = nn::ModuleList();
  for (int i = 0; i < 2; ++i) stage4->push_back(detail::RegularBottleneck(c1, ConvKind::regular, 1, 0.1));
  register_module("stage4", stage4);

  up5 = register_module("up5", detail::UpsamplingBottleneck(c1, c0, 0.1));
  stage5 = nn::ModuleList();
  stage5->push_back(detail::RegularBottleneck(c0, ConvKind::regular, 1, 0.1));
  register_module("stage5", stage5);

  classifier = register_module(
      "classifier",
      nn::ConvTranspose2d(
          nn::ConvTranspose2dOptions(c0, spec_.class_count, 3).stride(2).padding(1).output_padding(1)));
}

SegmentationOutput SegmentationNetImpl::forward(const torch::Tensor& x) {
  require(x.dim() == 4 && x.size(1) == spec_.input_channels,
          "segmentation input must be [B, " + std::to_string(spec_.input_channels) + ", H, W]");
  require(x.size(2) % 8 == 0 && x.size(3) % 8 == 0, "segmentation input extents must be multiples of 8");

  auto h0 = initial(x);
  auto [h1, idx1] = down1(h0);
  for (auto& block : *stage1) h1 = block->as<detail::RegularBottleneck>()->forward(h1);
  auto [h2, idx2] = down2(h1);
  for (auto& block : *stage2) h2 = block->as<detail::RegularBottleneck>()->forward(h2);
  for (auto& block : *stage3) h2 = block->as<detail::RegularBottleneck>()->forward(h2);
  auto h4 = up4->forward(h2, idx2, {h1.size(2), h1.size(3)});
  for (auto& block : *stage4) h4 = block->as<detail::RegularBottleneck>()->forward(h4);
  auto h5 = up5->forward(h4, idx1, {h0.size(2), h0.size(3)});
  for (auto& block : *stage5) h5 = block->as<detail::RegularBottleneck>()->forward(h5);

  SegmentationOutput out;
  out.features = h5;
  out.logits = classifier(h5);
  out.probs = torch::softmax(out.logits, 1);
  return out;
}

ShapePriorNetImpl::ShapePriorNetImpl(ShapePriorSpec spec) : spec_(spec) {
  spec_.validate();
  const int64_t b = spec_.base_channels;
  const std::vector<int64_t> widths = {b, 2 * b, 4 * b, 4 * b};
  encoder = nn::Sequential();
  int64_t in = spec_.class_count;
  for (int64_t out : widths) {
    encoder->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(2).padding(1).bias(false)));
    encoder->push_back(nn::BatchNorm2d(out));
    encoder->push_back(nn::ReLU());
    in = out;
  }
  register_module("encoder", encoder);
  code_channels_ = widths.back();
  code_extent_ = spec_.image_size / 16;
  const int64_t flat = code_channels_ * code_extent_ * code_extent_;
  to_code = register_module("to_code", nn::Linear(flat, spec_.bottleneck_dim));
  from_code = register_module("from_code", nn::Linear(spec_.bottleneck_dim, flat));

  decoder = nn::Sequential();
  const std::vector<int64_t> up_widths = {4 * b, 2 * b, b, b};
  in = code_channels_;
  for (int64_t out : up_widths) {
    decoder->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1).bias(false)));
    decoder->push_back(nn::BatchNorm2d(out));
    decoder->push_back(nn::ReLU());
    in = out;
  }
  decoder->push_back(nn::Conv2d(nn::Conv2dOptions(in, spec_.class_count, 3).padding(1)));
  register_module("decoder", decoder);
}

ShapePriorOutput ShapePriorNetImpl::forward(const torch::Tensor& probs) {
  require(probs.dim() == 4 && probs.size(1) == spec_.class_count,
          "shape prior input must be [B, " + std::to_string(spec_.class_count) + ", H, W]");
  require(probs.size(2) == spec_.image_size && probs.size(3) == spec_.image_size,
          "shape prior input extent differs from its configured image size");
  auto code = torch::relu(to_code(encoder->forward(probs).flatten(1)));
  auto grid = torch::relu(from_code(code)).view({-1, code_channels_, code_extent_, code_extent_});
  ShapePriorOutput out;
  out.logits = decoder->forward(grid);
  out.probs = torch::softmax(out.logits, 1);
  return out;
}

std::pair<ProbMap, FeatureMap> forward_segmentation(SegmentationNet& net, const Image2D& image) {
  require(image.channels() == net->spec().input_channels, "image channel count differs from network input");
  torch::NoGradGuard no_grad;
  const bool was_training = net->is_training();
  net->eval();
  auto out = net->forward(to_tensor(image));
  net->train(was_training);
  return {prob_map_from_tensor(out.probs[0].to(torch::kFloat64)),
          feature_map_from_tensor(out.features[0].to(torch::kFloat64))};
}

ProbMap forward_shape_prior(ShapePriorNet& net, const ProbMap& probs) {
  require(probs.class_count() == net->spec().class_count, "shape prior channel count differs from K");
  torch::NoGradGuard no_grad;
  const bool was_training = net->is_training();
  net->eval();
  auto out = net->forward(to_tensor(probs).to(torch::kFloat32));
  net->train(was_training);
  return prob_map_from_tensor(out.probs[0].to(torch::kFloat64));
}

void freeze(torch::nn::Module& module) {
  for (auto& p : module.parameters()) p.set_requires_grad(false);
  module.eval();
}

bool is_frozen(const torch::nn::Module& module) {
  if (module.is_training()) return false;
  for (const auto& p : module.parameters()) {
    if (p.requires_grad()) return false;
  }
  return true;
}

}  // namespace sfuda::models
