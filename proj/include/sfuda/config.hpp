#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "sfuda/losses.hpp"
#include "sfuda/models.hpp"
#include "sfuda/synthetic.hpp"

namespace sfuda {

/// Adaptation-phase ablations: Ring only, shape prior only, or both.
enum class Setting { norm, shape, norm_shape };

std::string to_string(Setting setting);  // "N", "S", "NS"
Setting parse_setting(const std::string& text);
bool uses_shape_prior(Setting setting);
bool uses_ring(Setting setting);

/// Source networks differ only in whether the Ring term is trained:
/// type 1 without it, type 2 with it.
enum class SourceType { without_ring = 1, with_ring = 2 };
SourceType source_type_for(Setting setting);

struct PhaseConfig {
  double lr = 1e-3;
  int64_t epochs = 60;
  int64_t batch_size = 8;

  bool operator==(const PhaseConfig&) const = default;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

struct CheckpointPaths {
  std::string source_type1;
  std::string source_type2;
  std::string shape_prior;

  bool operator==(const CheckpointPaths&) const = default;
};

/// Every knob of a run. Serialized as nested JSON; see `to_json` for the
/// layout and `apply_override` for dotted-key edits.
struct ExperimentConfig {
  uint64_t seed = 0;
  int64_t threads = 1;
  Setting setting = Setting::norm_shape;

  std::string source_manifest;
  std::string target_manifest;
  int64_t image_size = 256;
  uint64_t fold_seed = 0;
  double validation_fraction = 0.2;
  double threshold = 0.5;

  models::SegmentationNetworkSpec segmentation;
  int64_t prior_base_channels = 16;
  int64_t prior_bottleneck_dim = 64;
  bool prior_corruption = true;
  double prior_corruption_probability = 0.5;

  losses::LossWeights loss;
  double adaent_lambda = 1.0;
  AdamConfig adam;

  PhaseConfig source_training{1e-2, 60, 8};
  PhaseConfig prior_training{2e-3, 60, 8};
  PhaseConfig adaptation{1e-4, 60, 8};
  PhaseConfig adaent{1e-4, 60, 8};
  PhaseConfig oracle{1e-3, 60, 8};
  std::vector<double> lr_grid = {1e-5, 1e-4, 1e-3, 1e-2};
  bool grid_search = false;

  CheckpointPaths checkpoints;
  data::SyntheticShiftConfig synthetic;

  models::ShapePriorSpec prior_spec() const;
  /// Source-phase weights for the given network type (w_r zeroed for type 1).
  losses::LossWeights source_weights(SourceType type) const;
  /// Adaptation weights for a setting (w_r_prime zeroed for S).
  losses::LossWeights adaptation_weights(Setting setting) const;

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Strict parse: unknown keys are configuration errors.
ExperimentConfig config_from_json(const nlohmann::json& json);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& config, const std::filesystem::path& path);

/// Applies `dotted.key=value`; the value is parsed as JSON when possible and
/// as a plain string otherwise.
void apply_override(nlohmann::json& json, const std::string& assignment);

/// Reads SFUDA_SEED, when set, into config.seed.
void apply_environment(ExperimentConfig& config);

}  // namespace sfuda
