#pragma once

#include <torch/torch.h>

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sfuda/core.hpp"

namespace sfuda::data {

enum class Normalization { zscore_per_image, fixed_stats };

std::string to_string(Normalization mode);
Normalization parse_normalization(const std::string& text);

/// Conventional ImageNet per-channel statistics (RGB order, [0, 1] scale).
inline const std::vector<double> kImageNetMean = {0.485, 0.456, 0.406};
inline const std::vector<double> kImageNetStd = {0.229, 0.224, 0.225};

/// A domain's dataset: `name.csv` (id,image_path,mask_path,patient_id) with a
/// `name.json` sidecar for the dataset-level settings. Relative paths in the
/// CSV resolve against the CSV's directory.
struct DatasetManifest {
  std::string name;
  Domain domain = Domain::target;
  std::vector<SampleRecord> records;
  int64_t channels = 1;
  Normalization normalization = Normalization::zscore_per_image;
  std::vector<double> fixed_mean;
  std::vector<double> fixed_std;

  bool fully_labeled() const;
  const SampleRecord& record(const std::string& id) const;
  void validate() const;
};

DatasetManifest load_manifest(const std::filesystem::path& csv_path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv_path);

/// Records whose mask contains at least one foreground pixel. Source only.
DatasetManifest filter_nonempty(const DatasetManifest& manifest, int32_t class_count = 2);

struct PreprocessSettings {
  int64_t size = 256;
  Normalization normalization = Normalization::zscore_per_image;
  std::vector<double> fixed_mean;
  std::vector<double> fixed_std;

  static PreprocessSettings from_manifest(const DatasetManifest& manifest, int64_t size);
};

/// Decodes an 8/16-bit PNG (gray or RGB) to [0, 1] intensities.
Image2D decode_image(const std::filesystem::path& path, int64_t channels);
/// Decodes a single-channel mask PNG holding raw label values.
MaskMap decode_mask(const std::filesystem::path& path, int32_t class_count = 2);

/// Bilinear resize to size x size, then per-manifest normalization.
Image2D preprocess(const Image2D& raw, const PreprocessSettings& settings);
/// Nearest-neighbour resize; never introduces new labels.
MaskMap resize_mask(const MaskMap& mask, int64_t size);

/// Images of a manifest (or of a subset of its ids), preprocessed and
/// stacked into [N, C, size, size]. Masks are not touched.
struct ImageSet {
  std::vector<std::string> ids;
  torch::Tensor images;

  int64_t size() const { return static_cast<int64_t>(ids.size()); }
};

/// Images with their masks ([N, size, size] int64). Used for source data and
/// for explicitly supervised target runs.
struct LabeledSet {
  std::vector<std::string> ids;
  torch::Tensor images;
  torch::Tensor masks;

  int64_t size() const { return static_cast<int64_t>(ids.size()); }
  LabeledSet subset(std::span<const int64_t> rows) const;
};

ImageSet load_images(const DatasetManifest& manifest, std::span<const std::string> ids, int64_t size);
ImageSet load_images(const DatasetManifest& manifest, int64_t size);
LabeledSet load_labeled(const DatasetManifest& manifest, int64_t size, int32_t class_count = 2);

inline constexpr int kFoldCount = 4;

struct FoldAssignment {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

/// Records split into four groups; fold k tests on group k, validates on
/// group k+1 and trains on the remaining two.
struct FoldPlan {
  std::array<std::vector<std::string>, kFoldCount> groups;
  std::array<FoldAssignment, kFoldCount> folds;
  bool patient_stratified = false;
};

/// Seeded shuffle into four balanced groups. When every record carries a
/// patient id, whole patients are assigned to groups.
FoldPlan make_fold_plan(std::span<const SampleRecord> records, uint64_t seed);

/// Mean per-class pixel fraction over the masks.
std::vector<double> estimate_class_ratio(std::span<const MaskMap> masks, int32_t class_count = 2);
std::vector<double> estimate_class_ratio(const DatasetManifest& manifest, int32_t class_count = 2);

}  // namespace sfuda::data
