#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>

#include "sfuda/data.hpp"
#include "sfuda/tensors.hpp"

namespace sfuda::data {
namespace fs = std::filesystem;

namespace {

constexpr double kMinStd = 1e-6;

cv::Mat read_png(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifact("file not found: " + path.string());
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw IoError("cannot decode image: " + path.string());
  return mat;
}

// Planar float copy of a (possibly multi-channel) float matrix.
std::vector<float> planar(const cv::Mat& mat) {
  std::vector<cv::Mat> planes;
  cv::split(mat, planes);
  std::vector<float> values;
  values.reserve(mat.total() * planes.size());
  for (const auto& plane : planes) {
    cv::Mat contiguous = plane.isContinuous() ? plane : plane.clone();
    values.insert(values.end(), contiguous.ptr<float>(), contiguous.ptr<float>() + contiguous.total());
  }
  return values;
}

cv::Mat interleaved(const Image2D& image) {
  std::vector<cv::Mat> planes;
  const auto values = image.values();
  const int64_t n = image.shape().pixels();
  for (int64_t c = 0; c < image.channels(); ++c) {
    cv::Mat plane(static_cast<int>(image.height()), static_cast<int>(image.width()), CV_32FC1,
                  const_cast<float*>(values.data() + c * n));
    planes.push_back(plane.clone());
  }
  cv::Mat mat;
  cv::merge(planes, mat);
  return mat;
}

}  // namespace

PreprocessSettings PreprocessSettings::from_manifest(const DatasetManifest& manifest, int64_t size) {
  return {size, manifest.normalization, manifest.fixed_mean, manifest.fixed_std};
}

Image2D decode_image(const fs::path& path, int64_t channels) {
  cv::Mat mat = read_png(path);
  double scale = 1.0;
  switch (mat.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    default: throw IoError("unsupported pixel depth (need 8 or 16 bit): " + path.string());
  }
  if (mat.channels() == 4) cv::cvtColor(mat, mat, cv::COLOR_BGRA2BGR);
  if (mat.channels() == 3) cv::cvtColor(mat, mat, cv::COLOR_BGR2RGB);
  if (mat.channels() != channels) {
    throw IoError(path.string() + " decodes to " + std::to_string(mat.channels()) + " channels, manifest declares " +
                  std::to_string(channels));
  }
  cv::Mat real;
  mat.convertTo(real, CV_32F, scale);
  return Image2D({channels, real.rows, real.cols}, planar(real));
}

MaskMap decode_mask(const fs::path& path, int32_t class_count) {
  cv::Mat mat = read_png(path);
  if (mat.channels() != 1) throw IoError("mask must be single-channel: " + path.string());
  if (mat.depth() != CV_8U && mat.depth() != CV_16U) throw IoError("mask must be 8 or 16 bit: " + path.string());
  cv::Mat labels;
  mat.convertTo(labels, CV_32S);
  std::vector<int32_t> values(labels.ptr<int32_t>(), labels.ptr<int32_t>() + labels.total());
  for (int32_t v : values) {
    if (v < 0 || v >= class_count) {
      throw ContractViolation("mask " + path.string() + " holds label " + std::to_string(v) + " >= K");
    }
  }
  return MaskMap(labels.rows, labels.cols, std::move(values), class_count);
}

Image2D preprocess(const Image2D& raw, const PreprocessSettings& settings) {
  require(settings.size > 0, "preprocess size must be positive");
  cv::Mat mat = interleaved(raw);
  if (raw.height() != settings.size || raw.width() != settings.size) {
    cv::Mat resized;
    cv::resize(mat, resized, cv::Size(static_cast<int>(settings.size), static_cast<int>(settings.size)), 0, 0,
               cv::INTER_LINEAR);
    mat = resized;
  }
  std::vector<float> values = planar(mat);
  const int64_t channels = raw.channels();
  const int64_t n = settings.size * settings.size;

  for (int64_t c = 0; c < channels; ++c) {
    float* plane = values.data() + c * n;
    double mean = 0.0;
    double stddev = 1.0;
    if (settings.normalization == Normalization::zscore_per_image) {
      double sum = 0.0;
      for (int64_t i = 0; i < n; ++i) sum += plane[i];
      mean = sum / static_cast<double>(n);
      double sq = 0.0;
      for (int64_t i = 0; i < n; ++i) sq += (plane[i] - mean) * (plane[i] - mean);
      stddev = std::max(std::sqrt(sq / static_cast<double>(n)), kMinStd);
    } else {
      require(static_cast<int64_t>(settings.fixed_mean.size()) == channels &&
                  static_cast<int64_t>(settings.fixed_std.size()) == channels,
              "fixed-stats normalization needs one mean and std per channel");
      mean = settings.fixed_mean[static_cast<size_t>(c)];
      stddev = settings.fixed_std[static_cast<size_t>(c)];
    }
    for (int64_t i = 0; i < n; ++i) plane[i] = static_cast<float>((plane[i] - mean) / stddev);
  }
  return Image2D({channels, settings.size, settings.size}, std::move(values));
}

MaskMap resize_mask(const MaskMap& mask, int64_t size) {
  if (mask.height() == size && mask.width() == size) return mask;
  cv::Mat mat(static_cast<int>(mask.height()), static_cast<int>(mask.width()), CV_32SC1,
              const_cast<int32_t*>(mask.labels().data()));
  cv::Mat resized;
  cv::resize(mat, resized, cv::Size(static_cast<int>(size), static_cast<int>(size)), 0, 0, cv::INTER_NEAREST_EXACT);
  std::vector<int32_t> values(resized.ptr<int32_t>(), resized.ptr<int32_t>() + resized.total());
  return MaskMap(size, size, std::move(values), mask.class_count());
}

LabeledSet LabeledSet::subset(std::span<const int64_t> rows) const {
  LabeledSet out;
  auto index = torch::tensor(std::vector<int64_t>(rows.begin(), rows.end()), torch::kInt64);
  for (int64_t r : rows) out.ids.push_back(ids[static_cast<size_t>(r)]);
  out.images = images.index_select(0, index);
  out.masks = masks.index_select(0, index);
  return out;
}

ImageSet load_images(const DatasetManifest& manifest, std::span<const std::string> ids, int64_t size) {
  require(!ids.empty(), "cannot load an empty image set");
  const auto settings = PreprocessSettings::from_manifest(manifest, size);
  ImageSet set;
  std::vector<Image2D> images;
  for (const auto& id : ids) {
    const auto& record = manifest.record(id);
    images.push_back(preprocess(decode_image(record.image_path, manifest.channels), settings));
    set.ids.push_back(id);
  }
  set.images = stack_images(images);
  return set;
}

ImageSet load_images(const DatasetManifest& manifest, int64_t size) {
  std::vector<std::string> ids;
  for (const auto& r : manifest.records) ids.push_back(r.id);
  return load_images(manifest, ids, size);
}

LabeledSet load_labeled(const DatasetManifest& manifest, int64_t size, int32_t class_count) {
  require(manifest.fully_labeled(), "manifest '" + manifest.name + "' has records without masks");
  auto images = load_images(manifest, size);
  std::vector<MaskMap> masks;
  for (const auto& r : manifest.records) masks.push_back(resize_mask(decode_mask(*r.mask_path, class_count), size));
  return {images.ids, images.images, stack_masks(masks)};
}

}  // namespace sfuda::data
