#pragma once

#include <torch/torch.h>

#include <vector>

#include "sfuda/core.hpp"

namespace sfuda::losses {

/// Probability clamp applied before every logarithm.
inline constexpr double kLogEpsilon = 1e-7;
/// Additive stabilizer of the soft Dice ratio.
inline constexpr double kDiceSmooth = 1.0;

/// Weights of the three composite objectives.
///   source:      CE + w_d * Dice + w_r * Ring
///   shape prior: CE + w_d_prime * Dice
///   adaptation:  Entropy + w_r_prime * Ring
struct LossWeights {
  double w_d = 1.0;
  double w_r = 1.0;
  double w_d_prime = 1.0;
  double w_r_prime = 1.0;
  double ring_radius = 1.0;

  void validate() const;
};

// Tensor forms. Probabilities are [B, K, H, W], labels [B, H, W] (int64),
// features [B, C, H, W]. Each returns a scalar averaged over the batch and is
// differentiable with respect to its real-valued arguments.

torch::Tensor cross_entropy(const torch::Tensor& probs, const torch::Tensor& labels,
                            double epsilon = kLogEpsilon);

/// Soft Dice loss on the foreground channel, computed per image then averaged.
torch::Tensor soft_dice(const torch::Tensor& probs, const torch::Tensor& labels, double smooth = kDiceSmooth,
                        int64_t foreground_class = 1);

/// Mean over positions of (||F(h, w)||_2 - R)^2.
torch::Tensor ring(const torch::Tensor& features, double radius);

/// Mean per-pixel Shannon entropy (natural log).
torch::Tensor entropy(const torch::Tensor& probs, double epsilon = kLogEpsilon);

/// KL(prior || mean-over-pixels of probs), per image then averaged.
torch::Tensor class_ratio_prior(const torch::Tensor& probs, const std::vector<double>& prior_ratio,
                                double epsilon = kLogEpsilon);

/// The three source-phase components, kept separate for logging.
struct SourceTerms {
  torch::Tensor cross_entropy;
  torch::Tensor dice;
  torch::Tensor ring;  // undefined when w_r == 0
  torch::Tensor total;
};

SourceTerms source_terms(const torch::Tensor& probs, const torch::Tensor& labels,
                         const torch::Tensor& features, const LossWeights& weights);

torch::Tensor source_loss(const torch::Tensor& probs, const torch::Tensor& labels,
                          const torch::Tensor& features, const LossWeights& weights);

torch::Tensor shape_prior_loss(const torch::Tensor& probs, const torch::Tensor& labels,
                               const LossWeights& weights);

/// Label-free objective. `final_probs` is the output the entropy is read
/// from, `features` the segmentation network's pre-final activations. The
/// Ring term is skipped entirely when w_r_prime is zero.
torch::Tensor adaptation_loss(const torch::Tensor& final_probs, const torch::Tensor& features,
                              const LossWeights& weights);

// Value forms on single maps, evaluated in double precision.

double cross_entropy_loss(const ProbMap& probs, const MaskMap& truth);
double dice_loss(const ProbMap& probs, const MaskMap& truth, double smooth = kDiceSmooth);
double ring_loss(const FeatureMap& features, double radius);
double entropy_loss(const ProbMap& probs);
double class_ratio_prior_loss(const ProbMap& probs, const std::vector<double>& prior_ratio);
double source_loss(const ProbMap& probs, const MaskMap& truth, const FeatureMap& features,
                   const LossWeights& weights);
double shape_prior_loss(const ProbMap& probs, const MaskMap& truth, const LossWeights& weights);
double adaptation_loss(const ProbMap& final_probs, const FeatureMap& features, const LossWeights& weights);

}  // namespace sfuda::losses
