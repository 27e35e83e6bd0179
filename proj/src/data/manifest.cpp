#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sfuda/data.hpp"

namespace sfuda::data {
namespace fs = std::filesystem;

namespace {

constexpr const char* kHeader = "id,image_path,mask_path,patient_id";

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream stream(line);
  while (std::getline(stream, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

fs::path sidecar_path(const fs::path& csv_path) {
  fs::path sidecar = csv_path;
  sidecar.replace_extension(".json");
  return sidecar;
}

std::string relative_to(const std::string& path, const fs::path& base) {
  auto rel = fs::relative(fs::absolute(path), fs::absolute(base));
  return rel.empty() ? path : rel.generic_string();
}

}  // namespace

std::string to_string(Normalization mode) {
  return mode == Normalization::zscore_per_image ? "zscore_per_image" : "fixed_stats";
}

Normalization parse_normalization(const std::string& text) {
  if (text == "zscore_per_image") return Normalization::zscore_per_image;
  if (text == "fixed_stats") return Normalization::fixed_stats;
  throw ConfigError("unknown normalization '" + text + "'");
}

bool DatasetManifest::fully_labeled() const {
  return std::all_of(records.begin(), records.end(), [](const SampleRecord& r) { return r.mask_path.has_value(); });
}

const SampleRecord& DatasetManifest::record(const std::string& id) const {
  for (const auto& r : records) {
    if (r.id == id) return r;
  }
  throw ContractViolation("manifest '" + name + "' has no record '" + id + "'");
}

void DatasetManifest::validate() const {
  require(channels == 1 || channels == 3, "manifest channels must be 1 or 3");
  if (normalization == Normalization::fixed_stats) {
    require(static_cast<int64_t>(fixed_mean.size()) == channels && static_cast<int64_t>(fixed_std.size()) == channels,
            "fixed-stats normalization needs one mean and std per channel");
    for (double s : fixed_std) require(s > 0, "fixed-stats std must be positive");
  }
  if (domain == Domain::source) {
    require(fully_labeled(), "source manifest '" + name + "' has records without masks");
  }
  for (const auto& r : records) {
    if (!fs::exists(r.image_path)) throw MissingArtifact("image file not found: " + r.image_path);
    if (r.mask_path && !fs::exists(*r.mask_path)) throw MissingArtifact("mask file not found: " + *r.mask_path);
  }
}

DatasetManifest load_manifest(const fs::path& csv_path) {
  if (!fs::exists(csv_path)) throw MissingArtifact("manifest not found: " + csv_path.string());
  const fs::path base = fs::absolute(csv_path).parent_path();
  const fs::path sidecar = sidecar_path(csv_path);
  if (!fs::exists(sidecar)) throw MissingArtifact("manifest sidecar not found: " + sidecar.string());

  DatasetManifest manifest;
  try {
    std::ifstream in(sidecar);
    auto settings = nlohmann::json::parse(in);
    manifest.name = settings.value("name", csv_path.stem().string());
    manifest.domain = parse_domain(settings.value("domain", std::string("target")));
    manifest.channels = settings.value("channels", int64_t{1});
    manifest.normalization = parse_normalization(settings.value("normalization", std::string("zscore_per_image")));
    manifest.fixed_mean = settings.value("fixed_mean", std::vector<double>{});
    manifest.fixed_std = settings.value("fixed_std", std::vector<double>{});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed manifest sidecar " + sidecar.string() + ": " + e.what());
  }
  if (manifest.normalization == Normalization::fixed_stats && manifest.fixed_mean.empty() &&
      manifest.channels == 3) {
    manifest.fixed_mean = kImageNetMean;
    manifest.fixed_std = kImageNetStd;
  }

  std::ifstream in(csv_path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty manifest: " + csv_path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) {
    throw ConfigError("manifest header must be '" + std::string(kHeader) + "', got '" + line + "'");
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 4) {
      throw ConfigError(csv_path.string() + ":" + std::to_string(line_no) + ": expected 4 fields");
    }
    SampleRecord r;
    r.id = fields[0];
    require(!r.id.empty(), csv_path.string() + ":" + std::to_string(line_no) + ": empty id");
    r.image_path = (base / fields[1]).lexically_normal().string();
    if (!fields[2].empty()) r.mask_path = (base / fields[2]).lexically_normal().string();
    if (!fields[3].empty()) r.patient_id = fields[3];
    r.domain = manifest.domain;
    manifest.records.push_back(std::move(r));
  }
  manifest.validate();
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& csv_path) {
  const fs::path base = csv_path.has_parent_path() ? csv_path.parent_path() : fs::path(".");
  std::error_code ec;
  fs::create_directories(base, ec);
  {
    std::ofstream out(csv_path);
    if (!out) throw IoError("cannot write manifest " + csv_path.string());
    out << kHeader << '\n';
    for (const auto& r : manifest.records) {
      out << r.id << ',' << relative_to(r.image_path, base) << ','
          << (r.mask_path ? relative_to(*r.mask_path, base) : "") << ',' << r.patient_id.value_or("") << '\n';
    }
  }
  nlohmann::json settings = {{"name", manifest.name},
                             {"domain", to_string(manifest.domain)},
                             {"channels", manifest.channels},
                             {"normalization", to_string(manifest.normalization)}};
  if (manifest.normalization == Normalization::fixed_stats) {
    settings["fixed_mean"] = manifest.fixed_mean;
    settings["fixed_std"] = manifest.fixed_std;
  }
  std::ofstream out(sidecar_path(csv_path));
  if (!out) throw IoError("cannot write manifest sidecar for " + csv_path.string());
  out << settings.dump(2) << '\n';
}

DatasetManifest filter_nonempty(const DatasetManifest& manifest, int32_t class_count) {
  require(manifest.domain == Domain::source, "nonempty-mask filtering applies to source data only");
  require(manifest.fully_labeled(), "nonempty-mask filtering needs masks on every record");
  DatasetManifest filtered = manifest;
  filtered.records.clear();
  for (const auto& r : manifest.records) {
    const MaskMap mask = decode_mask(*r.mask_path, class_count);
    if (mask.count(0) < mask.pixels()) filtered.records.push_back(r);
  }
  return filtered;
}

}  // namespace sfuda::data
