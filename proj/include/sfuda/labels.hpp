#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sfuda/data.hpp"

namespace sfuda::data {

/// One ground-truth access.
struct MaskReadEvent {
  int64_t sequence = 0;
  std::string phase;
  std::string record_id;
  bool during_label_free = false;
};

/// Append-only record of every ground-truth mask access.
class LabelAudit {
 public:
  void record(MaskReadEvent event);
  const std::vector<MaskReadEvent>& events() const { return events_; }
  int64_t label_free_reads() const;
  /// Tab-separated: sequence, phase, record id, "label-free" | "allowed".
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<MaskReadEvent> events_;
};

/// Sole gateway to target-domain masks. Every read is audited; a read while a
/// label-free scope is open is logged and then refused.
class LabelVault {
 public:
  LabelVault(DatasetManifest manifest, int64_t size, std::shared_ptr<LabelAudit> audit, int32_t class_count = 2);

  /// Resized mask of one record, tagged with the purpose of the read.
  MaskMap read(const std::string& id, const std::string& phase);
  /// Stacked [N, size, size] int64 masks.
  torch::Tensor read_batch(std::span<const std::string> ids, const std::string& phase);

  bool has_mask(const std::string& id) const;
  const DatasetManifest& manifest() const { return manifest_; }
  const LabelAudit& audit() const { return *audit_; }

  /// Marks an optimization region that must not observe labels.
  class LabelFreeScope {
   public:
    LabelFreeScope(LabelVault& vault, std::string name);
    ~LabelFreeScope();
    LabelFreeScope(const LabelFreeScope&) = delete;
    LabelFreeScope& operator=(const LabelFreeScope&) = delete;

   private:
    LabelVault& vault_;
    std::string previous_;
  };

 private:
  DatasetManifest manifest_;
  int64_t size_;
  int32_t class_count_;
  std::shared_ptr<LabelAudit> audit_;
  std::string label_free_region_;
  std::map<std::string, MaskMap> cache_;
};

}  // namespace sfuda::data
