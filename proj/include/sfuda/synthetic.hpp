#pragma once

#include <filesystem>

#include "json.hpp"
#include "sfuda/data.hpp"

namespace sfuda::data {

/// How a domain renders a shape mask into an image. Steps run in order:
/// base intensities + texture + noise, optional inversion, gamma, contrast
/// about mid-gray, Gaussian blur, clamp to [0, 1].
struct AppearanceConfig {
  double foreground_mean = 0.65;
  double background_mean = 0.35;
  double noise_sigma = 0.05;
  double texture_amplitude = 0.1;  // stripe texture inside the foreground
  double texture_period = 4.0;     // pixels
  double bias_amplitude = 0.1;     // smooth low-frequency background field
  bool invert = false;
  double gamma = 1.0;
  double contrast = 1.0;
  double blur_sigma = 0.0;  // pixels

  bool operator==(const AppearanceConfig&) const = default;
};

/// Two domains sharing one shape distribution but rendered with different
/// appearance settings.
struct SyntheticShiftConfig {
  int64_t source_count = 48;
  int64_t target_count = 32;
  int64_t image_size = 64;
  int64_t min_blobs = 1;
  int64_t max_blobs = 2;
  double min_radius = 0.12;  // fraction of image size
  double max_radius = 0.28;
  double min_foreground_fraction = 0.05;
  double max_foreground_fraction = 0.40;
  AppearanceConfig source;
  AppearanceConfig target;
  uint64_t seed = 0;

  void validate() const;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AppearanceConfig, foreground_mean, background_mean, noise_sigma,
                                                texture_amplitude, texture_period, bias_amplitude, invert, gamma,
                                                contrast, blur_sigma)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SyntheticShiftConfig, source_count, target_count, image_size,
                                                min_blobs, max_blobs, min_radius, max_radius,
                                                min_foreground_fraction, max_foreground_fraction, source, target,
                                                seed)

struct SyntheticDatasets {
  DatasetManifest source;
  DatasetManifest target;
  std::filesystem::path source_csv;
  std::filesystem::path target_csv;
};

/// Renders both domains as 8-bit PNGs under out_dir/{source,target}/ and
/// writes their manifests. Identical configs produce identical bytes.
SyntheticDatasets generate_synthetic(const SyntheticShiftConfig& config, const std::filesystem::path& out_dir);

}  // namespace sfuda::data
