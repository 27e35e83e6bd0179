#include "sfuda/losses.hpp"

#include <cmath>
#include <numeric>

#include "sfuda/tensors.hpp"

namespace sfuda::losses {
namespace {

void check_probs_labels(const torch::Tensor& probs, const torch::Tensor& labels, const char* op) {
  require(probs.dim() == 4, std::string(op) + ": probabilities must be [B, K, H, W]");
  require(labels.dim() == 3, std::string(op) + ": labels must be [B, H, W]");
  require(probs.size(0) == labels.size(0) && probs.size(2) == labels.size(1) && probs.size(3) == labels.size(2),
          std::string(op) + ": probability and label shapes differ");
}

void check_same_extent(const ProbMap& probs, const MaskMap& truth, const char* op) {
  require(probs.height() == truth.height() && probs.width() == truth.width(),
          std::string(op) + ": probability and mask shapes differ");
  require(probs.class_count() == truth.class_count(), std::string(op) + ": class counts differ");
}

}  // namespace

void LossWeights::validate() const {
  require(w_d >= 0 && w_r >= 0 && w_d_prime >= 0 && w_r_prime >= 0, "loss weights must be non-negative");
  require(ring_radius > 0, "ring radius must be positive");
}

torch::Tensor cross_entropy(const torch::Tensor& probs, const torch::Tensor& labels, double epsilon) {
  check_probs_labels(probs, labels, "cross_entropy");
  auto picked = probs.gather(1, labels.unsqueeze(1).to(torch::kInt64)).squeeze(1);
  return -picked.clamp(epsilon, 1.0).log().mean();
}

torch::Tensor soft_dice(const torch::Tensor& probs, const torch::Tensor& labels, double smooth,
                        int64_t foreground_class) {
  check_probs_labels(probs, labels, "soft_dice");
  require(smooth > 0, "soft_dice: smooth must be positive");
  require(foreground_class >= 0 && foreground_class < probs.size(1), "soft_dice: foreground class out of range");
  auto p = probs.select(1, foreground_class).flatten(1);
  auto t = labels.eq(foreground_class).to(probs.scalar_type()).flatten(1);
  auto overlap = (p * t).sum(1);
  auto dice = (2.0 * overlap + smooth) / (p.sum(1) + t.sum(1) + smooth);
  return (1.0 - dice).mean();
}

torch::Tensor ring(const torch::Tensor& features, double radius) {
  require(features.dim() == 4, "ring: features must be [B, C, H, W]");
  require(features.numel() > 0, "ring: empty feature map");
  require(radius > 0, "ring: radius must be positive");
  // The norm's backward defines a zero subgradient for all-zero vectors.
  auto norms = torch::linalg_vector_norm(features, 2, {1}, false, c10::nullopt);
  return (norms - radius).pow(2).mean();
}

torch::Tensor entropy(const torch::Tensor& probs, double epsilon) {
  require(probs.dim() == 4, "entropy: probabilities must be [B, K, H, W]");
  auto per_pixel = -(probs * probs.clamp(epsilon, 1.0).log()).sum(1);
  return per_pixel.mean();
}

torch::Tensor class_ratio_prior(const torch::Tensor& probs, const std::vector<double>& prior_ratio,
                                double epsilon) {
  require(probs.dim() == 4, "class_ratio_prior: probabilities must be [B, K, H, W]");
  require(static_cast<int64_t>(prior_ratio.size()) == probs.size(1),
          "class_ratio_prior: prior length differs from class count");
  for (double q : prior_ratio) require(q >= 0.0, "class_ratio_prior: prior entries must be non-negative");
  const double total = std::accumulate(prior_ratio.begin(), prior_ratio.end(), 0.0);
  require(std::abs(total - 1.0) <= 1e-6, "class_ratio_prior: prior must sum to one");

  auto prior = torch::tensor(prior_ratio, torch::TensorOptions().dtype(torch::kFloat64)).to(probs.scalar_type());
  auto ratio = probs.mean({2, 3}).clamp(epsilon, 1.0 - epsilon);  // [B, K]
  // 0 * log(0 / x) contributes nothing.
  auto log_prior = prior.clamp(epsilon, 1.0).log();
  auto kl = (prior * (log_prior - ratio.log())).sum(1);
  return kl.mean();
}

SourceTerms source_terms(const torch::Tensor& probs, const torch::Tensor& labels,
                         const torch::Tensor& features, const LossWeights& weights) {
  SourceTerms terms;
  terms.cross_entropy = cross_entropy(probs, labels);
  terms.dice = soft_dice(probs, labels);
  terms.total = terms.cross_entropy + weights.w_d * terms.dice;
  if (weights.w_r != 0.0) {
    terms.ring = ring(features, weights.ring_radius);
    terms.total = terms.total + weights.w_r * terms.ring;
  }
  return terms;
}

torch::Tensor source_loss(const torch::Tensor& probs, const torch::Tensor& labels,
                          const torch::Tensor& features, const LossWeights& weights) {
  return source_terms(probs, labels, features, weights).total;
}

torch::Tensor shape_prior_loss(const torch::Tensor& probs, const torch::Tensor& labels,
                               const LossWeights& weights) {
  return cross_entropy(probs, labels) + weights.w_d_prime * soft_dice(probs, labels);
}

torch::Tensor adaptation_loss(const torch::Tensor& final_probs, const torch::Tensor& features,
                              const LossWeights& weights) {
  auto total = entropy(final_probs);
  if (weights.w_r_prime != 0.0) total = total + weights.w_r_prime * ring(features, weights.ring_radius);
  return total;
}

double cross_entropy_loss(const ProbMap& probs, const MaskMap& truth) {
  check_same_extent(probs, truth, "cross_entropy_loss");
  return cross_entropy(to_tensor(probs), to_tensor(truth)).item<double>();
}

double dice_loss(const ProbMap& probs, const MaskMap& truth, double smooth) {
  check_same_extent(probs, truth, "dice_loss");
  return soft_dice(to_tensor(probs), to_tensor(truth), smooth).item<double>();
}

double ring_loss(const FeatureMap& features, double radius) {
  return ring(to_tensor(features), radius).item<double>();
}

double entropy_loss(const ProbMap& probs) { return entropy(to_tensor(probs)).item<double>(); }

double class_ratio_prior_loss(const ProbMap& probs, const std::vector<double>& prior_ratio) {
  return class_ratio_prior(to_tensor(probs), prior_ratio).item<double>();
}

double source_loss(const ProbMap& probs, const MaskMap& truth, const FeatureMap& features,
                   const LossWeights& weights) {
  check_same_extent(probs, truth, "source_loss");
  return source_loss(to_tensor(probs), to_tensor(truth), to_tensor(features), weights).item<double>();
}

double shape_prior_loss(const ProbMap& probs, const MaskMap& truth, const LossWeights& weights) {
  check_same_extent(probs, truth, "shape_prior_loss");
  return shape_prior_loss(to_tensor(probs), to_tensor(truth), weights).item<double>();
}

double adaptation_loss(const ProbMap& final_probs, const FeatureMap& features, const LossWeights& weights) {
  return adaptation_loss(to_tensor(final_probs), to_tensor(features), weights).item<double>();
}

}  // namespace sfuda::losses
