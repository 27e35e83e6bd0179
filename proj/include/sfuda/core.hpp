#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sfuda/errors.hpp"

namespace sfuda {

/// Extent of a channel-major raster [channels, height, width].
struct GridShape {
  int64_t channels = 0;
  int64_t height = 0;
  int64_t width = 0;

  int64_t pixels() const { return height * width; }
  int64_t size() const { return channels * height * width; }
  bool operator==(const GridShape&) const = default;
};

std::string to_string(const GridShape& shape);

/// Dense channel-major grid. Base of the image, probability and feature
/// containers; owns its storage.
template <typename T>
class Raster {
 public:
  Raster() = default;
  Raster(GridShape shape, std::vector<T> values) : shape_(shape), values_(std::move(values)) {
    require(shape_.channels > 0 && shape_.height > 0 && shape_.width > 0,
            "raster extents must be positive, got " + to_string(shape_));
    require(static_cast<int64_t>(values_.size()) == shape_.size(),
            "raster storage does not match shape " + to_string(shape_));
  }

  const GridShape& shape() const { return shape_; }
  int64_t channels() const { return shape_.channels; }
  int64_t height() const { return shape_.height; }
  int64_t width() const { return shape_.width; }

  std::span<const T> values() const { return values_; }

  T at(int64_t c, int64_t h, int64_t w) const {
    return values_[static_cast<size_t>((c * shape_.height + h) * shape_.width + w)];
  }

 protected:
  GridShape shape_;
  std::vector<T> values_;
};

/// Network input. channels is 1 (grayscale modalities) or 3 (RGB).
class Image2D : public Raster<float> {
 public:
  Image2D() = default;
  Image2D(GridShape shape, std::vector<float> pixels);
};

/// Per-pixel integer labels in [0, class_count).
class MaskMap {
 public:
  MaskMap() = default;
  MaskMap(int64_t height, int64_t width, std::vector<int32_t> labels, int32_t class_count = 2);

  int64_t height() const { return height_; }
  int64_t width() const { return width_; }
  int64_t pixels() const { return height_ * width_; }
  int32_t class_count() const { return class_count_; }
  std::span<const int32_t> labels() const { return labels_; }
  int32_t at(int64_t h, int64_t w) const { return labels_[static_cast<size_t>(h * width_ + w)]; }

  /// Number of pixels carrying `label`.
  int64_t count(int32_t label) const;

  bool operator==(const MaskMap&) const = default;

 private:
  int64_t height_ = 0;
  int64_t width_ = 0;
  int32_t class_count_ = 2;
  std::vector<int32_t> labels_;
};

/// Class probabilities [K, height, width]; every pixel sums to one.
class ProbMap : public Raster<double> {
 public:
  static constexpr double kNormalizationTolerance = 1e-5;

  ProbMap() = default;
  ProbMap(GridShape shape, std::vector<double> probs);

  int64_t class_count() const { return channels(); }

  /// One-hot lift of a label mask.
  static ProbMap one_hot(const MaskMap& mask);
};

/// Activations [C, H, W] feeding the segmentation network's last layer.
class FeatureMap : public Raster<double> {
 public:
  FeatureMap() = default;
  FeatureMap(GridShape shape, std::vector<double> features);
};

enum class Domain { source, target };

std::string to_string(Domain domain);
Domain parse_domain(const std::string& text);

struct SampleRecord {
  std::string id;
  std::string image_path;
  std::optional<std::string> mask_path;
  std::optional<std::string> patient_id;
  Domain domain = Domain::target;
};

/// Dice overlap of the `foreground_class` pixel sets; 1.0 when both are empty.
double dice_coefficient(const MaskMap& pred, const MaskMap& truth, int32_t foreground_class = 1);

/// Labels a pixel foreground iff probs[1] >= threshold. Binary maps only.
MaskMap binarize(const ProbMap& probs, double threshold = 0.5);

}  // namespace sfuda
