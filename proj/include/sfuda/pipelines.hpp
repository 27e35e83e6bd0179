#pragma once

#include <torch/torch.h>

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sfuda/checkpoint.hpp"
#include "sfuda/config.hpp"
#include "sfuda/data.hpp"
#include "sfuda/labels.hpp"

namespace sfuda::pipelines {

/// Half-cosine decay from `initial_lr` at epoch 0 to `final_lr` at the last
/// epoch, no restarts.
class CosineSchedule {
 public:
  CosineSchedule(double initial_lr, int64_t epochs, double final_lr = 0.0);
  double lr(int64_t epoch) const;
  int64_t epochs() const { return epochs_; }

 private:
  double initial_lr_;
  double final_lr_;
  int64_t epochs_;
};

/// Index of the lowest value; the earliest index wins ties.
int64_t select_best_index(std::span<const double> validation_losses);

/// The checkpoint with the lowest recorded validation loss.
const Checkpoint& select_best_checkpoint(std::span<const Checkpoint> history);

/// Candidate minimizing `objective`; ties go to the smaller learning rate.
double grid_search_lr(std::span<const double> candidates, const std::function<double(double)>& objective);

struct EpochRecord {
  int64_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  /// Mean entropy of the validation predictions the objective reads from.
  double validation_entropy = 0.0;
};

struct TrainingRun {
  Checkpoint best;
  int64_t best_epoch = 0;
  std::vector<EpochRecord> history;
  /// Validation objective of the starting parameters, before any update.
  double initial_validation_loss = 0.0;
  double initial_validation_entropy = 0.0;
};

/// Seeded row split into (train, validation) with round(n * fraction)
/// validation rows, at least one of each.
std::pair<std::vector<int64_t>, std::vector<int64_t>> split_rows(int64_t count, double validation_fraction,
                                                                 uint64_t seed);

/// Trains f on labeled source data with CE + w_d Dice (+ w_r Ring for type 2)
/// and returns the epoch with the lowest validation loss. The returned
/// checkpoint carries the source class ratio in its metadata.
TrainingRun train_source_segmentation(const ExperimentConfig& config, const data::LabeledSet& source,
                                      SourceType type);

/// Trains g to reconstruct (optionally corrupted) one-hot source masks.
TrainingRun train_shape_prior(const ExperimentConfig& config, const data::LabeledSet& source);

/// Random morphological corruption applied to one-hot masks [B, K, H, W];
/// each sample is corrupted with probability `probability`.
torch::Tensor corrupt_masks(const torch::Tensor& one_hot, double probability, torch::Generator& generator);

torch::Tensor encode_one_hot(const torch::Tensor& labels, int64_t class_count);

struct AdaptationRun {
  TrainingRun run;
  std::string prior_digest_before;
  std::string prior_digest_after;
};

/// Label-free fine-tuning of f on target images. The shape prior (settings S
/// and NS) is frozen; model selection uses the objective on `validation`.
/// The optional vault is sealed against mask reads for the duration.
AdaptationRun adapt_target(const ExperimentConfig& config, Setting setting, const Checkpoint& segmentation,
                           const Checkpoint* shape_prior, const data::ImageSet& train,
                           const data::ImageSet& validation, data::LabelVault* vault = nullptr);

/// Entropy + class-ratio prior adaptation without g or Ring.
TrainingRun adapt_adaent(const ExperimentConfig& config, const Checkpoint& segmentation,
                         const std::vector<double>& prior_ratio, const data::ImageSet& train,
                         const data::ImageSet& validation, data::LabelVault* vault = nullptr);

/// Supervised fine-tuning on target labels (CE + w_d Dice).
TrainingRun finetune_oracle(const ExperimentConfig& config, const Checkpoint& segmentation,
                            const data::LabeledSet& train, const data::LabeledSet& validation);

/// Inference-mode foreground probabilities of f, [N, K, H, W].
torch::Tensor predict(const ExperimentConfig& config, const Checkpoint& segmentation, const torch::Tensor& images);

/// Per-image Dice of f's binarized predictions against vault masks.
std::vector<double> score_dice(const ExperimentConfig& config, const Checkpoint& segmentation,
                               const data::ImageSet& test, data::LabelVault& vault, const std::string& phase);

/// Rebuilds a network from a checkpoint's architecture.
models::SegmentationNet make_segmentation_net(const ExperimentConfig& config, const Checkpoint* state = nullptr);
models::ShapePriorNet make_shape_prior_net(const ExperimentConfig& config, const Checkpoint* state = nullptr);

/// Applies the thread count and global seed of a config.
void seed_everything(const ExperimentConfig& config);

}  // namespace sfuda::pipelines
