#include "sfuda/labels.hpp"

#include <algorithm>
#include <fstream>

#include "sfuda/tensors.hpp"

namespace sfuda::data {

void LabelAudit::record(MaskReadEvent event) {
  event.sequence = static_cast<int64_t>(events_.size());
  events_.push_back(std::move(event));
}

int64_t LabelAudit::label_free_reads() const {
  return std::count_if(events_.begin(), events_.end(), [](const MaskReadEvent& e) { return e.during_label_free; });
}

void LabelAudit::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write audit log " + path.string());
  for (const auto& e : events_) {
    out << e.sequence << '\t' << e.phase << '\t' << e.record_id << '\t'
        << (e.during_label_free ? "label-free" : "allowed") << '\n';
  }
}

LabelVault::LabelVault(DatasetManifest manifest, int64_t size, std::shared_ptr<LabelAudit> audit,
                       int32_t class_count)
    : manifest_(std::move(manifest)), size_(size), class_count_(class_count), audit_(std::move(audit)) {
  require(audit_ != nullptr, "label vault needs an audit sink");
}

bool LabelVault::has_mask(const std::string& id) const { return manifest_.record(id).mask_path.has_value(); }

MaskMap LabelVault::read(const std::string& id, const std::string& phase) {
  const bool label_free = !label_free_region_.empty();
  audit_->record({0, label_free ? label_free_region_ : phase, id, label_free});
  if (label_free) {
    throw ContractViolation("ground-truth mask '" + id + "' requested inside label-free region '" +
                            label_free_region_ + "'");
  }
  const auto& record = manifest_.record(id);
  if (!record.mask_path) throw ContractViolation("record '" + id + "' has no ground-truth mask");
  auto it = cache_.find(id);
  if (it == cache_.end()) {
    it = cache_.emplace(id, resize_mask(decode_mask(*record.mask_path, class_count_), size_)).first;
  }
  return it->second;
}

torch::Tensor LabelVault::read_batch(std::span<const std::string> ids, const std::string& phase) {
  std::vector<MaskMap> masks;
  masks.reserve(ids.size());
  for (const auto& id : ids) masks.push_back(read(id, phase));
  return stack_masks(masks);
}

LabelVault::LabelFreeScope::LabelFreeScope(LabelVault& vault, std::string name)
    : vault_(vault), previous_(vault.label_free_region_) {
  vault_.label_free_region_ = std::move(name);
}

LabelVault::LabelFreeScope::~LabelFreeScope() { vault_.label_free_region_ = previous_; }

}  // namespace sfuda::data
