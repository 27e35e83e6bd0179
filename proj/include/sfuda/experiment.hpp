#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "sfuda/checkpoint.hpp"
#include "sfuda/config.hpp"
#include "sfuda/pipelines.hpp"
#include "sfuda/report.hpp"

namespace sfuda::experiment {

/// Checkpoints a cross-validation run starts from. Only the ones the chosen
/// methods need have to be present.
struct SourceArtifacts {
  std::optional<Checkpoint> type1;
  std::optional<Checkpoint> type2;
  std::optional<Checkpoint> shape_prior;

  const Checkpoint& segmentation_for(Method method) const;
  const Checkpoint* prior_for(Method method) const;
};

/// Source network type a method starts from.
SourceType source_type_for(Method method);
bool needs_shape_prior(Method method);

/// Loads the checkpoints named in config.checkpoints that `methods` require;
/// a missing one raises MissingArtifact naming the config key and path.
SourceArtifacts load_artifacts(const ExperimentConfig& config, const std::vector<Method>& methods);

struct CrossValidationOptions {
  std::vector<Method> methods{std::begin(kMethodLadder), std::end(kMethodLadder)};
  /// Restricts the run to a subset of folds; empty means all four.
  std::vector<int> folds;
  bool save_checkpoints = true;
};

/// Adapts and scores every requested method on every fold of the target
/// manifest, then writes config.json, metrics.csv, report.json, report.csv,
/// audit.log and checkpoints/<method>/fold<k>/ under out_dir.
RunReport run_cross_validation(const ExperimentConfig& config, const SourceArtifacts& artifacts,
                               const std::filesystem::path& out_dir, const CrossValidationOptions& options = {});

/// Trains both source network types and the shape prior on the source
/// manifest and saves them under out_dir/{source_type1,source_type2,shape_prior}.
/// Returns the config with checkpoint paths filled in.
ExperimentConfig train_source_artifacts(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                        bool type1 = true, bool type2 = true, bool prior = true);

/// End to end on generated data: synthetic domains, source artifacts, then
/// cross-validation. Layout: out_dir/{data,source,run}.
RunReport run_synthetic_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                   const CrossValidationOptions& options = {});

/// Re-scores the fold checkpoints of a run directory and checks them against
/// its report.json; returns the recomputed report.
RunReport evaluate_run(const std::filesystem::path& run_dir);

}  // namespace sfuda::experiment
