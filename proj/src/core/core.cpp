#include "sfuda/core.hpp"

#include <algorithm>
#include <cmath>

namespace sfuda {

std::string to_string(const GridShape& shape) {
  return "[" + std::to_string(shape.channels) + ", " + std::to_string(shape.height) + ", " +
         std::to_string(shape.width) + "]";
}

Image2D::Image2D(GridShape shape, std::vector<float> pixels) : Raster(shape, std::move(pixels)) {
  require(shape_.channels == 1 || shape_.channels == 3,
          "image must have 1 or 3 channels, got " + std::to_string(shape_.channels));
  require(std::all_of(values_.begin(), values_.end(), [](float v) { return std::isfinite(v); }),
          "image contains non-finite pixels");
}

MaskMap::MaskMap(int64_t height, int64_t width, std::vector<int32_t> labels, int32_t class_count)
    : height_(height), width_(width), class_count_(class_count), labels_(std::move(labels)) {
  require(height_ > 0 && width_ > 0, "mask extents must be positive");
  require(class_count_ >= 2, "mask class count must be at least 2");
  require(static_cast<int64_t>(labels_.size()) == height_ * width_, "mask storage does not match shape");
  for (int32_t label : labels_) {
    require(label >= 0 && label < class_count_,
            "mask label " + std::to_string(label) + " outside [0, " + std::to_string(class_count_) + ")");
  }
}

int64_t MaskMap::count(int32_t label) const {
  return std::count(labels_.begin(), labels_.end(), label);
}

ProbMap::ProbMap(GridShape shape, std::vector<double> probs) : Raster(shape, std::move(probs)) {
  require(shape_.channels >= 2, "probability map needs at least 2 classes");
  const int64_t n = shape_.pixels();
  for (int64_t j = 0; j < n; ++j) {
    double sum = 0.0;
    for (int64_t k = 0; k < shape_.channels; ++k) {
      const double p = values_[static_cast<size_t>(k * n + j)];
      require(p >= 0.0 && p <= 1.0 + kNormalizationTolerance, "probability outside [0, 1]");
      sum += p;
    }
    require(std::abs(sum - 1.0) <= kNormalizationTolerance,
            "pixel " + std::to_string(j) + " probabilities sum to " + std::to_string(sum));
  }
}

ProbMap ProbMap::one_hot(const MaskMap& mask) {
  const int64_t n = mask.pixels();
  std::vector<double> probs(static_cast<size_t>(mask.class_count() * n), 0.0);
  const auto labels = mask.labels();
  for (int64_t j = 0; j < n; ++j) probs[static_cast<size_t>(labels[j] * n + j)] = 1.0;
  return ProbMap({mask.class_count(), mask.height(), mask.width()}, std::move(probs));
}

FeatureMap::FeatureMap(GridShape shape, std::vector<double> features) : Raster(shape, std::move(features)) {
  require(std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); }),
          "feature map contains non-finite entries");
}

std::string to_string(Domain domain) { return domain == Domain::source ? "source" : "target"; }

Domain parse_domain(const std::string& text) {
  if (text == "source") return Domain::source;
  if (text == "target") return Domain::target;
  throw ContractViolation("unknown domain tag '" + text + "'");
}

double dice_coefficient(const MaskMap& pred, const MaskMap& truth, int32_t foreground_class) {
  require(pred.height() == truth.height() && pred.width() == truth.width(),
          "dice: prediction and truth shapes differ");
  require(foreground_class >= 0 && foreground_class < truth.class_count(),
          "dice: foreground class outside label range");
  const auto p = pred.labels();
  const auto t = truth.labels();
  int64_t both = 0;
  int64_t in_pred = 0;
  int64_t in_truth = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    const bool a = p[i] == foreground_class;
    const bool b = t[i] == foreground_class;
    in_pred += a;
    in_truth += b;
    both += a && b;
  }
  if (in_pred + in_truth == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(in_pred + in_truth);
}

MaskMap binarize(const ProbMap& probs, double threshold) {
  if (probs.class_count() != 2) {
    throw ConfigError("binarize supports binary probability maps only, got K = " +
                      std::to_string(probs.class_count()));
  }
  require(threshold > 0.0 && threshold < 1.0, "binarize threshold must lie in (0, 1)");
  const int64_t n = probs.shape().pixels();
  const auto values = probs.values();
  std::vector<int32_t> labels(static_cast<size_t>(n));
  for (int64_t j = 0; j < n; ++j) labels[static_cast<size_t>(j)] = values[static_cast<size_t>(n + j)] >= threshold;
  return MaskMap(probs.height(), probs.width(), std::move(labels), 2);
}

}  // namespace sfuda
