#include "sfuda/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "sfuda/errors.hpp"
#include "sfuda/labels.hpp"
#include "sfuda/synthetic.hpp"

namespace sfuda::experiment {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kValidationObjective =
    "label-free adaptation loss on the fold's validation group; supervised loss for Oracle";

bool trains(Method method) { return method != Method::no_adaptation; }

Setting setting_of(Method method) {
  switch (method) {
    case Method::norm: return Setting::norm;
    case Method::shape: return Setting::shape;
    case Method::norm_shape: return Setting::norm_shape;
    default: break;
  }
  throw ContractViolation(display_name(method) + " is not an adaptation setting");
}

Checkpoint load_named(const std::string& key, const std::string& path) {
  if (path.empty()) {
    throw MissingArtifact("checkpoint '" + key + "' is required but checkpoints." + key + " is not set");
  }
  if (!fs::exists(fs::path(path) / "params.bin")) {
    throw MissingArtifact("checkpoint '" + key + "' not found at " + path + " (set checkpoints." + key + ")");
  }
  return load_checkpoint(path);
}

std::string number(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

struct FoldRun {
  FoldOutcome outcome;
  Checkpoint checkpoint;
  std::vector<pipelines::EpochRecord> history;
  double best_validation = 0.0;
};

// Everything a method needs on the target side, shared across methods.
class TargetContext {
 public:
  TargetContext(const ExperimentConfig& config, std::shared_ptr<data::LabelAudit> audit)
      : manifest_(data::load_manifest(config.target_manifest)),
        plan_(data::make_fold_plan(manifest_.records, config.fold_seed)),
        vault_(manifest_, config.image_size, std::move(audit), static_cast<int32_t>(config.segmentation.class_count)),
        images_(data::load_images(manifest_, config.image_size)) {
    for (size_t i = 0; i < images_.ids.size(); ++i) rows_[images_.ids[i]] = static_cast<int64_t>(i);
  }

  data::ImageSet images(const std::vector<std::string>& ids) const {
    std::vector<int64_t> rows;
    for (const auto& id : ids) rows.push_back(rows_.at(id));
    return {ids, images_.images.index_select(0, torch::tensor(rows, torch::kInt64))};
  }

  data::LabeledSet labeled(const std::vector<std::string>& ids, const std::string& phase) {
    auto set = images(ids);
    return {set.ids, set.images, vault_.read_batch(ids, phase)};
  }

  const data::FoldPlan& plan() const { return plan_; }
  data::LabelVault& vault() { return vault_; }

 private:
  data::DatasetManifest manifest_;
  data::FoldPlan plan_;
  data::LabelVault vault_;
  data::ImageSet images_;
  std::map<std::string, int64_t> rows_;
};

ExperimentConfig with_lr(ExperimentConfig config, Method method, double lr) {
  switch (method) {
    case Method::adaent: config.adaent.lr = lr; break;
    case Method::oracle: config.oracle.lr = lr; break;
    case Method::norm:
    case Method::shape:
    case Method::norm_shape: config.adaptation.lr = lr; break;
    case Method::no_adaptation: break;
  }
  return config;
}

double phase_lr(const ExperimentConfig& config, Method method) {
  switch (method) {
    case Method::adaent: return config.adaent.lr;
    case Method::oracle: return config.oracle.lr;
    case Method::norm:
    case Method::shape:
    case Method::norm_shape: return config.adaptation.lr;
    case Method::no_adaptation: break;
  }
  return 0.0;
}

double mean_of(const std::vector<double>& values) {
  require(!values.empty(), "mean of an empty list");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

FoldRun run_fold(const ExperimentConfig& config, const SourceArtifacts& artifacts, TargetContext& target, Method method,
                 int fold) {
  const auto& assignment = target.plan().folds[static_cast<size_t>(fold)];
  const auto& source = artifacts.segmentation_for(method);
  const std::string tag = method_key(method) + ":fold" + std::to_string(fold);

  FoldRun result;
  result.outcome.fold = fold;
  result.outcome.lr = phase_lr(config, method);
  pipelines::TrainingRun run;
  bool trained = true;
  switch (method) {
    case Method::no_adaptation:
      result.checkpoint = source;
      trained = false;
      break;
    case Method::adaent: {
      const auto ratio = source.meta.extra.at("class_ratio").get<std::vector<double>>();
      run = pipelines::adapt_adaent(config, source, ratio, target.images(assignment.train),
                                    target.images(assignment.validation), &target.vault());
      break;
    }
    case Method::norm:
    case Method::shape:
    case Method::norm_shape:
      run = pipelines::adapt_target(config, setting_of(method), source, artifacts.prior_for(method),
                                    target.images(assignment.train), target.images(assignment.validation),
                                    &target.vault())
                .run;
      break;
    case Method::oracle:
      run = pipelines::finetune_oracle(config, source, target.labeled(assignment.train, "oracle-train:" + tag),
                                       target.labeled(assignment.validation, "oracle-validation:" + tag));
      break;
  }
  if (trained) {
    result.checkpoint = run.best;
    result.outcome.best_epoch = run.best_epoch;
    result.best_validation = run.best.meta.validation_loss;
    for (const auto& e : run.history) result.outcome.validation_curve.push_back(e.validation_loss);
    result.history = std::move(run.history);
  }
  result.outcome.digest = result.checkpoint.digest;
  const auto scores =
      pipelines::score_dice(config, result.checkpoint, target.images(assignment.test), target.vault(), "score:" + tag);
  result.outcome.test_dice = mean_of(scores);
  return result;
}

void write_metrics(const fs::path& path, const std::vector<std::string>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "method,fold,initial_lr,epoch,lr,train_loss,validation_loss,validation_entropy,selected\n";
  for (const auto& row : rows) out << row << '\n';
}

}  // namespace

SourceType source_type_for(Method method) {
  return (method == Method::norm || method == Method::norm_shape) ? SourceType::with_ring : SourceType::without_ring;
}

bool needs_shape_prior(Method method) { return method == Method::shape || method == Method::norm_shape; }

const Checkpoint& SourceArtifacts::segmentation_for(Method method) const {
  const bool ring = source_type_for(method) == SourceType::with_ring;
  const auto& slot = ring ? type2 : type1;
  if (!slot) {
    throw MissingArtifact(display_name(method) + " needs the " + std::string(ring ? "source_type2" : "source_type1") +
                          " checkpoint");
  }
  return *slot;
}

const Checkpoint* SourceArtifacts::prior_for(Method method) const {
  if (!needs_shape_prior(method)) return nullptr;
  if (!shape_prior) throw MissingArtifact(display_name(method) + " needs the shape_prior checkpoint");
  return &*shape_prior;
}

SourceArtifacts load_artifacts(const ExperimentConfig& config, const std::vector<Method>& methods) {
  SourceArtifacts artifacts;
  for (Method m : methods) {
    if (source_type_for(m) == SourceType::with_ring) {
      if (!artifacts.type2) artifacts.type2 = load_named("source_type2", config.checkpoints.source_type2);
    } else if (!artifacts.type1) {
      artifacts.type1 = load_named("source_type1", config.checkpoints.source_type1);
    }
    if (needs_shape_prior(m) && !artifacts.shape_prior) {
      artifacts.shape_prior = load_named("shape_prior", config.checkpoints.shape_prior);
    }
  }
  return artifacts;
}

RunReport run_cross_validation(const ExperimentConfig& config, const SourceArtifacts& artifacts,
                               const fs::path& out_dir, const CrossValidationOptions& options) {
  config.validate();
  require(!options.methods.empty(), "no methods requested");
  std::vector<int> folds = options.folds;
  if (folds.empty()) {
    folds.resize(data::kFoldCount);
    std::iota(folds.begin(), folds.end(), 0);
  }
  for (int k : folds) {
    if (k < 0 || k >= data::kFoldCount) throw ConfigError("fold index out of range: " + std::to_string(k));
  }
  // Resolve artifacts up front so a missing checkpoint fails before any work.
  for (Method m : options.methods) {
    artifacts.segmentation_for(m);
    artifacts.prior_for(m);
  }

  fs::create_directories(out_dir);
  save_config(config, out_dir / "config.json");

  auto audit = std::make_shared<data::LabelAudit>();
  TargetContext target(config, audit);

  RunReport report;
  report.config = to_json(config);
  report.patient_stratified = target.plan().patient_stratified;
  report.validation_objective = kValidationObjective;
  if (artifacts.type1) report.digests["source_type1"] = artifacts.type1->digest;
  if (artifacts.type2) report.digests["source_type2"] = artifacts.type2->digest;
  if (artifacts.shape_prior) report.digests["shape_prior"] = artifacts.shape_prior->digest;

  std::vector<Method> methods;
  for (Method m : kMethodLadder) {
    if (std::find(options.methods.begin(), options.methods.end(), m) != options.methods.end()) methods.push_back(m);
  }

  std::vector<std::string> metric_rows;
  for (Method method : methods) {
    std::map<double, std::vector<FoldRun>> by_lr;
    auto run_all = [&](double lr) {
      const auto cfg = with_lr(config, method, lr);
      auto& runs = by_lr[lr];
      std::vector<double> objective;
      for (int k : folds) {
        runs.push_back(run_fold(cfg, artifacts, target, method, k));
        objective.push_back(runs.back().best_validation);
      }
      return mean_of(objective);
    };

    double chosen = phase_lr(config, method);
    if (config.grid_search && trains(method)) {
      chosen = pipelines::grid_search_lr(config.lr_grid, run_all);
    } else {
      run_all(chosen);
    }

    for (const auto& [lr, runs] : by_lr) {
      for (const auto& r : runs) {
        for (const auto& e : r.history) {
          metric_rows.push_back(method_key(method) + ',' + std::to_string(r.outcome.fold) + ',' + number(lr) + ',' +
                                std::to_string(e.epoch) + ',' + number(e.lr) + ',' + number(e.train_loss) + ',' +
                                number(e.validation_loss) + ',' + number(e.validation_entropy) + ',' +
                                (lr == chosen && e.epoch == r.outcome.best_epoch ? "1" : "0"));
        }
      }
    }

    MethodResult result;
    result.method = method;
    for (const auto& r : by_lr.at(chosen)) {
      if (options.save_checkpoints) {
        save_checkpoint(r.checkpoint, out_dir / "checkpoints" / method_key(method) / ("fold" + std::to_string(r.outcome.fold)));
      }
      result.folds.push_back(r.outcome);
    }
    report.methods.push_back(std::move(result));
  }

  report.normalize();
  write_metrics(out_dir / "metrics.csv", metric_rows);
  audit->write(out_dir / "audit.log");
  emit_report(report, ReportFormat::json, out_dir / "report.json");
  emit_report(report, ReportFormat::csv, out_dir / "report.csv");
  return report;
}

ExperimentConfig train_source_artifacts(const ExperimentConfig& config, const fs::path& out_dir, bool type1, bool type2,
                                        bool prior) {
  config.validate();
  const int32_t k = static_cast<int32_t>(config.segmentation.class_count);
  const auto manifest = data::filter_nonempty(data::load_manifest(config.source_manifest), k);
  require(manifest.fully_labeled(), "source manifest must be fully labeled");
  const auto source = data::load_labeled(manifest, config.image_size, k);

  ExperimentConfig resolved = config;
  const fs::path root = fs::absolute(out_dir);
  if (type1) {
    const auto run = pipelines::train_source_segmentation(config, source, SourceType::without_ring);
    save_checkpoint(run.best, root / "source_type1");
    resolved.checkpoints.source_type1 = (root / "source_type1").string();
  }
  if (type2) {
    const auto run = pipelines::train_source_segmentation(config, source, SourceType::with_ring);
    save_checkpoint(run.best, root / "source_type2");
    resolved.checkpoints.source_type2 = (root / "source_type2").string();
  }
  if (prior) {
    const auto run = pipelines::train_shape_prior(config, source);
    save_checkpoint(run.best, root / "shape_prior");
    resolved.checkpoints.shape_prior = (root / "shape_prior").string();
  }
  return resolved;
}

RunReport run_synthetic_experiment(const ExperimentConfig& config, const fs::path& out_dir,
                                   const CrossValidationOptions& options) {
  config.validate();
  const fs::path root = fs::absolute(out_dir);
  const auto datasets = data::generate_synthetic(config.synthetic, root / "data");
  ExperimentConfig cfg = config;
  cfg.source_manifest = datasets.source_csv.string();
  cfg.target_manifest = datasets.target_csv.string();

  bool type1 = false, type2 = false, prior = false;
  for (Method m : options.methods) {
    (source_type_for(m) == SourceType::with_ring ? type2 : type1) = true;
    prior = prior || needs_shape_prior(m);
  }
  cfg = train_source_artifacts(cfg, root / "source", type1, type2, prior);
  return run_cross_validation(cfg, load_artifacts(cfg, options.methods), root / "run", options);
}

RunReport evaluate_run(const fs::path& run_dir) {
  const auto config = load_config(run_dir / "config.json");
  const auto recorded = load_report(run_dir / "report.json");

  auto audit = std::make_shared<data::LabelAudit>();
  TargetContext target(config, audit);
  RunReport rescored = recorded;
  for (auto& method : rescored.methods) {
    for (auto& fold : method.folds) {
      const fs::path dir = run_dir / "checkpoints" / method_key(method.method) / ("fold" + std::to_string(fold.fold));
      if (!fs::exists(dir / "params.bin")) throw MissingArtifact("fold checkpoint not found: " + dir.string());
      const auto checkpoint = load_checkpoint(dir);
      require(checkpoint.digest == fold.digest, "checkpoint " + dir.string() + " does not match the report digest");
      const auto& assignment = target.plan().folds[static_cast<size_t>(fold.fold)];
      const auto scores = pipelines::score_dice(config, checkpoint, target.images(assignment.test), target.vault(),
                                                "evaluate:" + method_key(method.method));
      fold.test_dice = mean_of(scores);
    }
  }
  return rescored;
}

}  // namespace sfuda::experiment
