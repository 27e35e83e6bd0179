#include "sfuda/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>

namespace sfuda {
namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Setting setting) {
  switch (setting) {
    case Setting::norm: return "N";
    case Setting::shape: return "S";
    case Setting::norm_shape: return "NS";
  }
  return "?";
}

Setting parse_setting(const std::string& text) {
  if (text == "N") return Setting::norm;
  if (text == "S") return Setting::shape;
  if (text == "NS") return Setting::norm_shape;
  throw ConfigError("unknown adaptation setting '" + text + "' (expected N, S or NS)");
}

bool uses_shape_prior(Setting setting) { return setting != Setting::norm; }
bool uses_ring(Setting setting) { return setting != Setting::shape; }

SourceType source_type_for(Setting setting) {
  return uses_ring(setting) ? SourceType::with_ring : SourceType::without_ring;
}

models::ShapePriorSpec ExperimentConfig::prior_spec() const {
  return {segmentation.class_count, image_size, prior_base_channels, prior_bottleneck_dim};
}

losses::LossWeights ExperimentConfig::source_weights(SourceType type) const {
  auto w = loss;
  if (type == SourceType::without_ring) w.w_r = 0.0;
  return w;
}

losses::LossWeights ExperimentConfig::adaptation_weights(Setting s) const {
  auto w = loss;
  if (!uses_ring(s)) w.w_r_prime = 0.0;
  return w;
}

void ExperimentConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  check(threads >= 1, "threads must be at least 1");
  check(image_size >= 16 && image_size % 16 == 0, "data.image_size must be a positive multiple of 16");
  check(validation_fraction > 0 && validation_fraction < 1, "data.validation_fraction must lie in (0, 1)");
  check(threshold > 0 && threshold < 1, "data.threshold must lie in (0, 1)");
  check(prior_corruption_probability >= 0 && prior_corruption_probability <= 1,
        "shape_prior_network.corruption_probability must lie in [0, 1]");
  check(adaent_lambda >= 0, "loss.adaent_lambda must be non-negative");
  for (const auto* phase : {&source_training, &prior_training, &adaptation, &adaent, &oracle}) {
    check(phase->lr > 0 && phase->epochs >= 1 && phase->batch_size >= 1, "training phases need lr > 0, epochs >= 1, batch_size >= 1");
  }
  check(!lr_grid.empty(), "adaptation.lr_grid must not be empty");
  for (double lr : lr_grid) check(lr > 0, "adaptation.lr_grid entries must be positive");
  try {
    loss.validate();
    segmentation.validate();
    prior_spec().validate();
    synthetic.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
}

namespace {

json phase_json(const PhaseConfig& p) { return {{"lr", p.lr}, {"epochs", p.epochs}, {"batch_size", p.batch_size}}; }

PhaseConfig phase_from(const json& j) {
  return {j.at("lr").get<double>(), j.at("epochs").get<int64_t>(), j.at("batch_size").get<int64_t>()};
}

void reject_unknown(const json& given, const json& known, const std::string& prefix) {
  for (const auto& [key, value] : given.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!known.contains(key)) throw ConfigError("unknown configuration key '" + path + "'");
    if (value.is_object() && known.at(key).is_object()) reject_unknown(value, known.at(key), path);
  }
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  json adaptation = phase_json(c.adaptation);
  adaptation["lr_grid"] = c.lr_grid;
  adaptation["grid_search"] = c.grid_search;
  return {
      {"seed", c.seed},
      {"threads", c.threads},
      {"setting", to_string(c.setting)},
      {"data",
       {{"source_manifest", c.source_manifest},
        {"target_manifest", c.target_manifest},
        {"image_size", c.image_size},
        {"fold_seed", c.fold_seed},
        {"validation_fraction", c.validation_fraction},
        {"threshold", c.threshold}}},
      {"segmentation_network",
       {{"input_channels", c.segmentation.input_channels},
        {"class_count", c.segmentation.class_count},
        {"width_multiplier", c.segmentation.width_multiplier}}},
      {"shape_prior_network",
       {{"base_channels", c.prior_base_channels},
        {"bottleneck_dim", c.prior_bottleneck_dim},
        {"corruption", c.prior_corruption},
        {"corruption_probability", c.prior_corruption_probability}}},
      {"loss",
       {{"w_d", c.loss.w_d},
        {"w_r", c.loss.w_r},
        {"w_d_prime", c.loss.w_d_prime},
        {"w_r_prime", c.loss.w_r_prime},
        {"ring_radius", c.loss.ring_radius},
        {"adaent_lambda", c.adaent_lambda}}},
      {"optimizer", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
      {"source_training", phase_json(c.source_training)},
      {"shape_prior_training", phase_json(c.prior_training)},
      {"adaptation", adaptation},
      {"adaent", phase_json(c.adaent)},
      {"oracle", phase_json(c.oracle)},
      {"checkpoints",
       {{"source_type1", c.checkpoints.source_type1},
        {"source_type2", c.checkpoints.source_type2},
        {"shape_prior", c.checkpoints.shape_prior}}},
      {"synthetic", c.synthetic},
  };
}

ExperimentConfig config_from_json(const json& given) {
  if (!given.is_object()) throw ConfigError("configuration must be a JSON object");
  const json defaults = to_json(ExperimentConfig{});
  reject_unknown(given, defaults, "");
  json j = defaults;
  j.merge_patch(given);

  ExperimentConfig c;
  try {
    c.seed = j.at("seed").get<uint64_t>();
    c.threads = j.at("threads").get<int64_t>();
    c.setting = parse_setting(j.at("setting").get<std::string>());

    const auto& d = j.at("data");
    c.source_manifest = d.at("source_manifest").get<std::string>();
    c.target_manifest = d.at("target_manifest").get<std::string>();
    c.image_size = d.at("image_size").get<int64_t>();
    c.fold_seed = d.at("fold_seed").get<uint64_t>();
    c.validation_fraction = d.at("validation_fraction").get<double>();
    c.threshold = d.at("threshold").get<double>();

    const auto& s = j.at("segmentation_network");
    c.segmentation.input_channels = s.at("input_channels").get<int64_t>();
    c.segmentation.class_count = s.at("class_count").get<int64_t>();
    c.segmentation.width_multiplier = s.at("width_multiplier").get<double>();

    const auto& p = j.at("shape_prior_network");
    c.prior_base_channels = p.at("base_channels").get<int64_t>();
    c.prior_bottleneck_dim = p.at("bottleneck_dim").get<int64_t>();
    c.prior_corruption = p.at("corruption").get<bool>();
    c.prior_corruption_probability = p.at("corruption_probability").get<double>();

    const auto& l = j.at("loss");
    c.loss.w_d = l.at("w_d").get<double>();
    c.loss.w_r = l.at("w_r").get<double>();
    c.loss.w_d_prime = l.at("w_d_prime").get<double>();
    c.loss.w_r_prime = l.at("w_r_prime").get<double>();
    c.loss.ring_radius = l.at("ring_radius").get<double>();
    c.adaent_lambda = l.at("adaent_lambda").get<double>();

    const auto& o = j.at("optimizer");
    c.adam = {o.at("beta1").get<double>(), o.at("beta2").get<double>(), o.at("eps").get<double>()};

    c.source_training = phase_from(j.at("source_training"));
    c.prior_training = phase_from(j.at("shape_prior_training"));
    c.adaptation = phase_from(j.at("adaptation"));
    c.lr_grid = j.at("adaptation").at("lr_grid").get<std::vector<double>>();
    c.grid_search = j.at("adaptation").at("grid_search").get<bool>();
    c.adaent = phase_from(j.at("adaent"));
    c.oracle = phase_from(j.at("oracle"));

    const auto& k = j.at("checkpoints");
    c.checkpoints = {k.at("source_type1").get<std::string>(), k.at("source_type2").get<std::string>(),
                     k.at("shape_prior").get<std::string>()};
    c.synthetic = j.at("synthetic").get<data::SyntheticShiftConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid configuration value: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifact("config file not found: " + path.string());
  std::ifstream in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const ExperimentConfig& config, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(config).dump(2) << '\n';
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must be key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);

  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }

  json* node = &j;
  size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("malformed override key '" + key + "'");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    json& child = (*node)[part];
    if (child.is_null()) child = json::object();
    if (!child.is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
    node = &child;
    start = dot + 1;
  }
}

void apply_environment(ExperimentConfig& config) {
  if (const char* seed = std::getenv("SFUDA_SEED"); seed != nullptr && *seed != '\0') {
    try {
      if (!std::isdigit(static_cast<unsigned char>(seed[0]))) throw std::invalid_argument("sign");
      size_t used = 0;
      config.seed = std::stoull(seed, &used);
      if (used != std::string(seed).size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError(std::string("SFUDA_SEED must be a non-negative integer, got '") + seed + "'");
    }
  }
}

}  // namespace sfuda
