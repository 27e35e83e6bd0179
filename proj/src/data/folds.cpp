#include <algorithm>
#include <map>
#include <random>

#include "sfuda/data.hpp"

namespace sfuda::data {

FoldPlan make_fold_plan(std::span<const SampleRecord> records, uint64_t seed) {
  require(records.size() >= static_cast<size_t>(kFoldCount),
          "fold planning needs at least " + std::to_string(kFoldCount) + " records, got " +
              std::to_string(records.size()));

  FoldPlan plan;
  plan.patient_stratified = std::all_of(records.begin(), records.end(),
                                        [](const SampleRecord& r) { return r.patient_id.has_value(); });

  // Units are whole patients when stratifying, single records otherwise.
  std::vector<std::vector<std::string>> units;
  if (plan.patient_stratified) {
    std::map<std::string, std::vector<std::string>> by_patient;
    for (const auto& r : records) by_patient[*r.patient_id].push_back(r.id);
    for (auto& [patient, ids] : by_patient) units.push_back(std::move(ids));
  } else {
    for (const auto& r : records) units.push_back({r.id});
  }
  require(units.size() >= static_cast<size_t>(kFoldCount), "fold planning needs at least four patients");

  std::mt19937_64 rng(seed);
  std::shuffle(units.begin(), units.end(), rng);

  for (const auto& unit : units) {
    auto smallest = std::min_element(plan.groups.begin(), plan.groups.end(),
                                     [](const auto& a, const auto& b) { return a.size() < b.size(); });
    smallest->insert(smallest->end(), unit.begin(), unit.end());
  }

  for (int k = 0; k < kFoldCount; ++k) {
    auto& fold = plan.folds[static_cast<size_t>(k)];
    fold.test = plan.groups[static_cast<size_t>(k)];
    fold.validation = plan.groups[static_cast<size_t>((k + 1) % kFoldCount)];
    for (int offset = 2; offset < kFoldCount; ++offset) {
      const auto& g = plan.groups[static_cast<size_t>((k + offset) % kFoldCount)];
      fold.train.insert(fold.train.end(), g.begin(), g.end());
    }
  }
  return plan;
}

std::vector<double> estimate_class_ratio(std::span<const MaskMap> masks, int32_t class_count) {
  require(!masks.empty(), "class ratio needs at least one mask");
  std::vector<double> ratio(static_cast<size_t>(class_count), 0.0);
  for (const auto& mask : masks) {
    require(mask.class_count() == class_count, "class ratio: mask class count differs");
    for (int32_t k = 0; k < class_count; ++k) {
      ratio[static_cast<size_t>(k)] += static_cast<double>(mask.count(k)) / static_cast<double>(mask.pixels());
    }
  }
  for (double& r : ratio) r /= static_cast<double>(masks.size());
  return ratio;
}

std::vector<double> estimate_class_ratio(const DatasetManifest& manifest, int32_t class_count) {
  std::vector<MaskMap> masks;
  for (const auto& r : manifest.records) {
    if (!r.mask_path) throw ContractViolation("class ratio: record '" + r.id + "' has no mask");
    masks.push_back(decode_mask(*r.mask_path, class_count));
  }
  return estimate_class_ratio(masks, class_count);
}

}  // namespace sfuda::data
