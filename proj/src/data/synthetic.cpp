#include "sfuda/synthetic.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <numbers>
#include <random>

namespace sfuda::data {
namespace fs = std::filesystem;

void SyntheticShiftConfig::validate() const {
  require(source_count >= 1 && target_count >= 1, "synthetic sample counts must be positive");
  require(image_size >= 16, "synthetic image size must be at least 16");
  require(min_blobs >= 1 && max_blobs >= min_blobs, "synthetic blob count range is invalid");
  require(min_radius > 0 && max_radius >= min_radius && max_radius < 0.5, "synthetic radius range is invalid");
  require(min_foreground_fraction >= 0 && max_foreground_fraction > min_foreground_fraction &&
              max_foreground_fraction <= 1,
          "synthetic foreground fraction range is invalid");
  for (const auto* a : {&source, &target}) {
    require(a->noise_sigma >= 0 && a->blur_sigma >= 0 && a->gamma > 0 && a->texture_period > 0,
            "synthetic appearance parameters out of range");
  }
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

cv::Mat draw_shapes(const SyntheticShiftConfig& cfg, Rng& rng) {
  const int size = static_cast<int>(cfg.image_size);
  const double total = static_cast<double>(size) * size;
  for (int attempt = 0; attempt < 10000; ++attempt) {
    cv::Mat mask = cv::Mat::zeros(size, size, CV_8UC1);
    const auto blobs = std::uniform_int_distribution<int64_t>(cfg.min_blobs, cfg.max_blobs)(rng);
    for (int64_t b = 0; b < blobs; ++b) {
      const double ra = uniform(rng, cfg.min_radius, cfg.max_radius) * size;
      const double rb = uniform(rng, cfg.min_radius, cfg.max_radius) * size;
      const double reach = std::max(ra, rb);
      const double cx = uniform(rng, reach, size - 1 - reach);
      const double cy = uniform(rng, reach, size - 1 - reach);
      const double angle = uniform(rng, 0.0, 180.0);
      cv::ellipse(mask, cv::Point(static_cast<int>(std::lround(cx)), static_cast<int>(std::lround(cy))),
                  cv::Size(static_cast<int>(std::lround(ra)), static_cast<int>(std::lround(rb))), angle, 0.0, 360.0,
                  cv::Scalar(1), cv::FILLED, cv::LINE_8);
    }
    const double fraction = cv::countNonZero(mask) / total;
    if (fraction >= cfg.min_foreground_fraction && fraction <= cfg.max_foreground_fraction) return mask;
  }
  throw ContractViolation("synthetic shape parameters cannot meet the foreground fraction range");
}

cv::Mat render(const cv::Mat& mask, const AppearanceConfig& a, Rng& rng) {
  const int size = mask.rows;
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const double stripe_angle = uniform(rng, 0.0, std::numbers::pi);
  const double bias_fx = uniform(rng, 0.5, 1.5) / size;
  const double bias_fy = uniform(rng, 0.5, 1.5) / size;
  const double bias_phase = uniform(rng, 0.0, kTwoPi);
  std::normal_distribution<double> noise(0.0, 1.0);

  cv::Mat image(size, size, CV_64FC1);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double v = a.background_mean + a.bias_amplitude * std::sin(kTwoPi * (x * bias_fx + y * bias_fy) + bias_phase);
      if (mask.at<uint8_t>(y, x) != 0) {
        const double along = x * std::cos(stripe_angle) + y * std::sin(stripe_angle);
        v += (a.foreground_mean - a.background_mean) + a.texture_amplitude * std::sin(kTwoPi * along / a.texture_period);
      }
      v += a.noise_sigma * noise(rng);
      image.at<double>(y, x) = v;
    }
  }
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double v = std::clamp(image.at<double>(y, x), 0.0, 1.0);
      if (a.invert) v = 1.0 - v;
      v = std::pow(v, a.gamma);
      v = (v - 0.5) * a.contrast + 0.5;
      image.at<double>(y, x) = v;
    }
  }
  if (a.blur_sigma > 0) cv::GaussianBlur(image, image, cv::Size(0, 0), a.blur_sigma, a.blur_sigma, cv::BORDER_REFLECT);
  cv::Mat out;
  image = cv::min(cv::max(image, 0.0), 1.0);
  image.convertTo(out, CV_8U, 255.0);
  return out;
}

void write_png(const fs::path& path, const cv::Mat& mat) {
  if (!cv::imwrite(path.string(), mat)) throw IoError("cannot write " + path.string());
}

DatasetManifest render_domain(const SyntheticShiftConfig& cfg, Domain domain, const fs::path& dir) {
  const bool is_source = domain == Domain::source;
  const AppearanceConfig& appearance = is_source ? cfg.source : cfg.target;
  const int64_t count = is_source ? cfg.source_count : cfg.target_count;
  const std::string prefix = is_source ? "s" : "t";

  std::seed_seq seq{cfg.seed, static_cast<uint64_t>(is_source ? 1 : 2)};
  Rng rng(seq);

  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  fs::create_directories(dir / "masks", ec);
  if (ec || !fs::is_directory(dir / "images")) throw IoError("cannot create output directory " + dir.string());

  DatasetManifest manifest;
  manifest.name = to_string(domain);
  manifest.domain = domain;
  manifest.channels = 1;
  manifest.normalization = Normalization::zscore_per_image;
  for (int64_t i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "%s%04lld", prefix.c_str(), static_cast<long long>(i));
    const cv::Mat mask = draw_shapes(cfg, rng);
    const cv::Mat image = render(mask, appearance, rng);
    const fs::path image_path = dir / "images" / (std::string(id) + ".png");
    const fs::path mask_path = dir / "masks" / (std::string(id) + ".png");
    write_png(image_path, image);
    write_png(mask_path, mask);
    SampleRecord r;
    r.id = id;
    r.image_path = fs::absolute(image_path).string();
    r.mask_path = fs::absolute(mask_path).string();
    r.domain = domain;
    manifest.records.push_back(std::move(r));
  }
  save_manifest(manifest, dir / "manifest.csv");
  return manifest;
}

}  // namespace

SyntheticDatasets generate_synthetic(const SyntheticShiftConfig& config, const fs::path& out_dir) {
  config.validate();
  SyntheticDatasets out;
  out.source = render_domain(config, Domain::source, out_dir / "source");
  out.target = render_domain(config, Domain::target, out_dir / "target");
  out.source_csv = out_dir / "source" / "manifest.csv";
  out.target_csv = out_dir / "target" / "manifest.csv";
  return out;
}

}  // namespace sfuda::data
