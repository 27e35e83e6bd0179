#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "sfuda/pipelines.hpp"
#include "sfuda/tensors.hpp"

namespace sfuda::pipelines {

CosineSchedule::CosineSchedule(double initial_lr, int64_t epochs, double final_lr)
    : initial_lr_(initial_lr), final_lr_(final_lr), epochs_(epochs) {
  require(initial_lr > 0 && final_lr >= 0 && final_lr <= initial_lr, "cosine schedule needs 0 <= final <= initial");
  require(epochs >= 1, "cosine schedule needs at least one epoch");
}

double CosineSchedule::lr(int64_t epoch) const {
  require(epoch >= 0 && epoch < epochs_, "epoch outside the schedule");
  if (epochs_ == 1) return initial_lr_;
  const double progress = static_cast<double>(epoch) / static_cast<double>(epochs_ - 1);
  return final_lr_ + 0.5 * (initial_lr_ - final_lr_) * (1.0 + std::cos(std::numbers::pi * progress));
}

int64_t select_best_index(std::span<const double> losses) {
  require(!losses.empty(), "model selection needs a non-empty history");
  int64_t best = 0;
  double best_value = std::numeric_limits<double>::infinity();
  bool found = false;
  for (size_t i = 0; i < losses.size(); ++i) {
    const double v = std::isnan(losses[i]) ? std::numeric_limits<double>::infinity() : losses[i];
    if (!found || v < best_value) {
      best = static_cast<int64_t>(i);
      best_value = v;
      found = true;
    }
  }
  return best;
}

const Checkpoint& select_best_checkpoint(std::span<const Checkpoint> history) {
  std::vector<double> losses;
  losses.reserve(history.size());
  for (const auto& c : history) losses.push_back(c.meta.validation_loss);
  return history[static_cast<size_t>(select_best_index(losses))];
}

double grid_search_lr(std::span<const double> candidates, const std::function<double(double)>& objective) {
  require(!candidates.empty(), "learning-rate grid must not be empty");
  std::vector<double> sorted(candidates.begin(), candidates.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> scores;
  for (double lr : sorted) scores.push_back(objective(lr));
  return sorted[static_cast<size_t>(select_best_index(scores))];
}

std::pair<std::vector<int64_t>, std::vector<int64_t>> split_rows(int64_t count, double validation_fraction,
                                                                 uint64_t seed) {
  require(count >= 2, "train/validation split needs at least two samples");
  std::vector<int64_t> rows(static_cast<size_t>(count));
  std::iota(rows.begin(), rows.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(rows.begin(), rows.end(), rng);
  auto n_val = static_cast<int64_t>(std::llround(static_cast<double>(count) * validation_fraction));
  n_val = std::clamp<int64_t>(n_val, 1, count - 1);
  std::vector<int64_t> validation(rows.begin(), rows.begin() + n_val);
  std::vector<int64_t> train(rows.begin() + n_val, rows.end());
  std::sort(validation.begin(), validation.end());
  std::sort(train.begin(), train.end());
  return {train, validation};
}

void seed_everything(const ExperimentConfig& config) {
  at::set_num_threads(static_cast<int>(config.threads));
  torch::manual_seed(config.seed);
}

models::SegmentationNet make_segmentation_net(const ExperimentConfig& config, const Checkpoint* state) {
  models::SegmentationNet net(config.segmentation);
  if (state != nullptr) {
    require(state->meta.kind == "segmentation", "expected a segmentation checkpoint, got '" + state->meta.kind + "'");
    restore(*state, *net);
  }
  return net;
}

models::ShapePriorNet make_shape_prior_net(const ExperimentConfig& config, const Checkpoint* state) {
  models::ShapePriorNet net(config.prior_spec());
  if (state != nullptr) {
    require(state->meta.kind == "shape_prior", "expected a shape-prior checkpoint, got '" + state->meta.kind + "'");
    restore(*state, *net);
  }
  return net;
}

torch::Tensor encode_one_hot(const torch::Tensor& labels, int64_t class_count) {
  return torch::one_hot(labels.to(torch::kInt64), class_count).permute({0, 3, 1, 2}).to(torch::kFloat32);
}

torch::Tensor corrupt_masks(const torch::Tensor& one_hot_masks, double probability, torch::Generator& generator) {
  require(one_hot_masks.dim() == 4 && one_hot_masks.size(1) == 2, "mask corruption supports binary one-hot masks");
  torch::NoGradGuard no_grad;
  auto fg = one_hot_masks.select(1, 1).unsqueeze(1).clone();  // [B, 1, H, W]
  const int64_t batch = fg.size(0);
  auto draws = torch::rand({batch, 3}, generator, torch::kFloat64);
  auto noise = torch::rand({batch, 1, fg.size(2) / 4, fg.size(3) / 4}, generator);
  auto noise_full = torch::upsample_nearest2d(noise, {fg.size(2), fg.size(3)});
  for (int64_t b = 0; b < batch; ++b) {
    if (draws[b][0].item<double>() >= probability) continue;
    auto m = fg[b].unsqueeze(0);
    const int64_t k = 3 + 2 * static_cast<int64_t>(draws[b][2].item<double>() * 3.0);  // 3, 5 or 7
    const double op = draws[b][1].item<double>();
    if (op < 1.0 / 3.0) {
      m = torch::max_pool2d(m, {k, k}, {1, 1}, {k / 2, k / 2});
    } else if (op < 2.0 / 3.0) {
      m = 1.0 - torch::max_pool2d(1.0 - m, {k, k}, {1, 1}, {k / 2, k / 2});
    } else {
      // Flip coarse blocks: spurious islands and holes.
      auto flips = noise_full[b].unsqueeze(0).gt(0.93).to(m.scalar_type());
      m = (m - flips).abs();
    }
    fg[b] = m.squeeze(0);
  }
  return torch::cat({1.0 - fg, fg}, 1);
}

namespace {

struct LoopSpec {
  PhaseConfig phase;
  AdamConfig adam;
  uint64_t seed = 0;
  CheckpointMeta meta;
};

struct Evaluation {
  double loss = 0.0;
  double entropy = 0.0;
};

std::vector<int64_t> epoch_order(int64_t count, uint64_t seed, int64_t epoch) {
  std::vector<int64_t> rows(static_cast<size_t>(count));
  std::iota(rows.begin(), rows.end(), 0);
  std::seed_seq seq{seed, static_cast<uint64_t>(epoch), uint64_t{0x5f0da}};
  std::mt19937_64 rng(seq);
  std::shuffle(rows.begin(), rows.end(), rng);
  return rows;
}

// Generic epoch loop: Adam with per-epoch cosine learning rate, evaluation
// after every epoch, and retention of the lowest-validation-loss state.
TrainingRun fit(torch::nn::Module& model, std::vector<torch::Tensor> params, int64_t train_count,
                const LoopSpec& spec, const std::function<torch::Tensor(const torch::Tensor&)>& batch_loss,
                const std::function<Evaluation()>& evaluate, const std::function<void(bool)>& set_mode) {
  require(train_count >= 1, "training needs at least one sample");
  torch::optim::Adam optimizer(
      params, torch::optim::AdamOptions(spec.phase.lr).betas({spec.adam.beta1, spec.adam.beta2}).eps(spec.adam.eps));
  const CosineSchedule schedule(spec.phase.lr, spec.phase.epochs);

  TrainingRun run;
  set_mode(false);
  const auto initial = evaluate();
  run.initial_validation_loss = initial.loss;
  run.initial_validation_entropy = initial.entropy;

  std::vector<double> losses;
  for (int64_t epoch = 0; epoch < spec.phase.epochs; ++epoch) {
    const double lr = schedule.lr(epoch);
    for (auto& group : optimizer.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);

    set_mode(true);
    const auto order = epoch_order(train_count, spec.seed, epoch);
    double loss_sum = 0.0;
    for (int64_t start = 0; start < train_count; start += spec.phase.batch_size) {
      const int64_t end = std::min(train_count, start + spec.phase.batch_size);
      auto rows = torch::tensor(std::vector<int64_t>(order.begin() + start, order.begin() + end), torch::kInt64);
      optimizer.zero_grad();
      auto loss = batch_loss(rows);
      loss.backward();
      optimizer.step();
      loss_sum += loss.item<double>() * static_cast<double>(end - start);
    }

    set_mode(false);
    const auto eval = evaluate();
    run.history.push_back({epoch, lr, loss_sum / static_cast<double>(train_count), eval.loss, eval.entropy});
    losses.push_back(eval.loss);
    if (select_best_index(losses) == epoch) {
      CheckpointMeta meta = spec.meta;
      meta.epoch = epoch;
      meta.validation_loss = eval.loss;
      run.best = capture(model, std::move(meta));
      run.best_epoch = epoch;
    }
  }
  return run;
}

// Averages a per-chunk scalar over a dataset in inference mode.
template <typename ChunkFn>
Evaluation evaluate_in_chunks(int64_t count, int64_t chunk, ChunkFn fn) {
  torch::NoGradGuard no_grad;
  Evaluation total;
  for (int64_t start = 0; start < count; start += chunk) {
    const int64_t end = std::min(count, start + chunk);
    const Evaluation part = fn(start, end);
    const double weight = static_cast<double>(end - start) / static_cast<double>(count);
    total.loss += part.loss * weight;
    total.entropy += part.entropy * weight;
  }
  return total;
}

std::vector<double> class_ratio_of(const torch::Tensor& masks, int64_t class_count) {
  std::vector<double> ratio;
  auto hot = torch::one_hot(masks.to(torch::kInt64), class_count).to(torch::kFloat64);
  auto per_class = hot.mean({1, 2}).mean(0);  // mean of per-image fractions
  for (int64_t k = 0; k < class_count; ++k) ratio.push_back(per_class[k].item<double>());
  return ratio;
}

nlohmann::json architecture_json(const ExperimentConfig& config) {
  return {{"input_channels", config.segmentation.input_channels},
          {"class_count", config.segmentation.class_count},
          {"width_multiplier", config.segmentation.width_multiplier}};
}

}  // namespace

TrainingRun train_source_segmentation(const ExperimentConfig& config, const data::LabeledSet& source,
                                      SourceType type) {
  require(source.masks.defined() && source.size() >= 2, "source training needs at least two labeled samples");
  seed_everything(config);
  auto net = make_segmentation_net(config);
  const auto weights = config.source_weights(type);
  const auto [train_rows, val_rows] = split_rows(source.size(), config.validation_fraction, config.seed);
  const auto train = source.subset(train_rows);
  const auto val = source.subset(val_rows);

  LoopSpec spec{config.source_training, config.adam, config.seed, {}};
  spec.meta.kind = "segmentation";
  spec.meta.config = to_json(config);
  spec.meta.extra = {{"source_type", static_cast<int>(type)},
                     {"class_ratio", class_ratio_of(source.masks, config.segmentation.class_count)},
                     {"architecture", architecture_json(config)},
                     {"train_ids", train.ids},
                     {"validation_ids", val.ids}};

  auto batch_loss = [&](const torch::Tensor& rows) {
    auto out = net->forward(train.images.index_select(0, rows));
    return losses::source_loss(out.probs, train.masks.index_select(0, rows), out.features, weights);
  };
  auto evaluate = [&] {
    return evaluate_in_chunks(val.size(), config.source_training.batch_size, [&](int64_t s, int64_t e) {
      auto out = net->forward(val.images.slice(0, s, e));
      return Evaluation{losses::source_loss(out.probs, val.masks.slice(0, s, e), out.features, weights).item<double>(),
                        losses::entropy(out.probs).item<double>()};
    });
  };
  auto set_mode = [&](bool training) { net->train(training); };
  return fit(*net, net->parameters(), train.size(), spec, batch_loss, evaluate, set_mode);
}

TrainingRun train_shape_prior(const ExperimentConfig& config, const data::LabeledSet& source) {
  require(source.masks.defined() && source.size() >= 2, "shape-prior training needs at least two masks");
  seed_everything(config);
  auto net = make_shape_prior_net(config);
  const auto weights = config.loss;
  const int64_t k = config.segmentation.class_count;
  const auto [train_rows, val_rows] = split_rows(source.size(), config.validation_fraction, config.seed);
  const auto train = source.subset(train_rows);
  const auto val = source.subset(val_rows);
  const auto train_inputs = encode_one_hot(train.masks, k);
  const auto val_inputs = encode_one_hot(val.masks, k);
  auto generator = at::detail::createCPUGenerator(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const bool corrupt = config.prior_corruption && config.prior_corruption_probability > 0;

  LoopSpec spec{config.prior_training, config.adam, config.seed, {}};
  spec.meta.kind = "shape_prior";
  spec.meta.config = to_json(config);
  spec.meta.extra = {{"corruption", corrupt},
                     {"corruption_probability", config.prior_corruption_probability},
                     {"train_ids", train.ids},
                     {"validation_ids", val.ids}};

  auto batch_loss = [&](const torch::Tensor& rows) {
    auto input = train_inputs.index_select(0, rows);
    if (corrupt) input = corrupt_masks(input, config.prior_corruption_probability, generator);
    auto out = net->forward(input);
    return losses::shape_prior_loss(out.probs, train.masks.index_select(0, rows), weights);
  };
  auto evaluate = [&] {
    return evaluate_in_chunks(val.size(), config.prior_training.batch_size, [&](int64_t s, int64_t e) {
      auto out = net->forward(val_inputs.slice(0, s, e));
      return Evaluation{losses::shape_prior_loss(out.probs, val.masks.slice(0, s, e), weights).item<double>(),
                        losses::entropy(out.probs).item<double>()};
    });
  };
  auto set_mode = [&](bool training) { net->train(training); };
  return fit(*net, net->parameters(), train.size(), spec, batch_loss, evaluate, set_mode);
}

AdaptationRun adapt_target(const ExperimentConfig& config, Setting setting, const Checkpoint& segmentation,
                           const Checkpoint* shape_prior, const data::ImageSet& train,
                           const data::ImageSet& validation, data::LabelVault* vault) {
  const bool with_prior = uses_shape_prior(setting);
  if (with_prior && shape_prior == nullptr) {
    throw ContractViolation("setting " + to_string(setting) + " needs a shape-prior checkpoint");
  }
  std::optional<data::LabelVault::LabelFreeScope> seal;
  if (vault != nullptr) seal.emplace(*vault, "adapt:" + to_string(setting));

  seed_everything(config);
  auto f = make_segmentation_net(config, &segmentation);
  models::ShapePriorNet g{nullptr};
  AdaptationRun result;
  if (with_prior) {
    g = make_shape_prior_net(config, shape_prior);
    models::freeze(*g);
    result.prior_digest_before = digest_module(*g);
  }
  const auto weights = config.adaptation_weights(setting);

  auto objective = [&](const torch::Tensor& images) {
    auto out = f->forward(images);
    auto final_probs = with_prior ? g->forward(out.probs).probs : out.probs;
    return std::pair{losses::adaptation_loss(final_probs, out.features, weights), final_probs};
  };

  LoopSpec spec{config.adaptation, config.adam, config.seed, segmentation.meta};
  spec.meta.extra["adapted_with"] = to_string(setting);
  spec.meta.extra["source_digest"] = segmentation.digest;
  if (with_prior) spec.meta.extra["shape_prior_digest"] = shape_prior->digest;

  auto batch_loss = [&](const torch::Tensor& rows) { return objective(train.images.index_select(0, rows)).first; };
  auto evaluate = [&] {
    return evaluate_in_chunks(validation.size(), config.adaptation.batch_size, [&](int64_t s, int64_t e) {
      auto [loss, probs] = objective(validation.images.slice(0, s, e));
      return Evaluation{loss.item<double>(), losses::entropy(probs).item<double>()};
    });
  };
  auto set_mode = [&](bool training) { f->train(training); };
  result.run = fit(*f, f->parameters(), train.size(), spec, batch_loss, evaluate, set_mode);

  if (with_prior) {
    require(models::is_frozen(*g), "shape prior left the frozen state during adaptation");
    result.prior_digest_after = digest_module(*g);
    require(result.prior_digest_after == result.prior_digest_before, "shape prior parameters changed during adaptation");
  }
  return result;
}

TrainingRun adapt_adaent(const ExperimentConfig& config, const Checkpoint& segmentation,
                         const std::vector<double>& prior_ratio, const data::ImageSet& train,
                         const data::ImageSet& validation, data::LabelVault* vault) {
  std::optional<data::LabelVault::LabelFreeScope> seal;
  if (vault != nullptr) seal.emplace(*vault, "adapt:AdaEnt");

  seed_everything(config);
  auto f = make_segmentation_net(config, &segmentation);
  auto objective = [&](const torch::Tensor& images) {
    auto out = f->forward(images);
    auto loss = losses::entropy(out.probs) + config.adaent_lambda * losses::class_ratio_prior(out.probs, prior_ratio);
    return std::pair{loss, out.probs};
  };

  LoopSpec spec{config.adaent, config.adam, config.seed, segmentation.meta};
  spec.meta.extra["adapted_with"] = "AdaEnt";
  spec.meta.extra["source_digest"] = segmentation.digest;

  auto batch_loss = [&](const torch::Tensor& rows) { return objective(train.images.index_select(0, rows)).first; };
  auto evaluate = [&] {
    return evaluate_in_chunks(validation.size(), config.adaent.batch_size, [&](int64_t s, int64_t e) {
      auto [loss, probs] = objective(validation.images.slice(0, s, e));
      return Evaluation{loss.item<double>(), losses::entropy(probs).item<double>()};
    });
  };
  auto set_mode = [&](bool training) { f->train(training); };
  return fit(*f, f->parameters(), train.size(), spec, batch_loss, evaluate, set_mode);
}

TrainingRun finetune_oracle(const ExperimentConfig& config, const Checkpoint& segmentation,
                            const data::LabeledSet& train, const data::LabeledSet& validation) {
  seed_everything(config);
  auto f = make_segmentation_net(config, &segmentation);
  const auto weights = config.source_weights(SourceType::without_ring);

  LoopSpec spec{config.oracle, config.adam, config.seed, segmentation.meta};
  spec.meta.extra["adapted_with"] = "Oracle";
  spec.meta.extra["source_digest"] = segmentation.digest;

  auto batch_loss = [&](const torch::Tensor& rows) {
    auto out = f->forward(train.images.index_select(0, rows));
    return losses::source_loss(out.probs, train.masks.index_select(0, rows), out.features, weights);
  };
  auto evaluate = [&] {
    return evaluate_in_chunks(validation.size(), config.oracle.batch_size, [&](int64_t s, int64_t e) {
      auto out = f->forward(validation.images.slice(0, s, e));
      return Evaluation{
          losses::source_loss(out.probs, validation.masks.slice(0, s, e), out.features, weights).item<double>(),
          losses::entropy(out.probs).item<double>()};
    });
  };
  auto set_mode = [&](bool training) { f->train(training); };
  return fit(*f, f->parameters(), train.size(), spec, batch_loss, evaluate, set_mode);
}

torch::Tensor predict(const ExperimentConfig& config, const Checkpoint& segmentation, const torch::Tensor& images) {
  auto f = make_segmentation_net(config, &segmentation);
  f->eval();
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> parts;
  const int64_t chunk = std::max<int64_t>(1, config.adaptation.batch_size);
  for (int64_t s = 0; s < images.size(0); s += chunk) {
    parts.push_back(f->forward(images.slice(0, s, std::min(images.size(0), s + chunk))).probs);
  }
  return torch::cat(parts, 0);
}

std::vector<double> score_dice(const ExperimentConfig& config, const Checkpoint& segmentation,
                               const data::ImageSet& test, data::LabelVault& vault, const std::string& phase) {
  const auto probs = predict(config, segmentation, test.images);
  std::vector<double> scores;
  for (int64_t i = 0; i < test.size(); ++i) {
    const auto pred = binarize(prob_map_from_tensor(probs[i].to(torch::kFloat64)), config.threshold);
    const auto truth = vault.read(test.ids[static_cast<size_t>(i)], phase);
    scores.push_back(dice_coefficient(pred, truth));
  }
  return scores;
}

}  // namespace sfuda::pipelines
