#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace sfuda {

/// Rows of the comparison table, in presentation order.
enum class Method { no_adaptation, adaent, norm, shape, norm_shape, oracle };

inline constexpr Method kMethodLadder[] = {Method::no_adaptation, Method::adaent, Method::norm,
                                           Method::shape,         Method::norm_shape, Method::oracle};

std::string display_name(Method method);  // "No adaptation", "AdaEnt-style", "Ours (N)", ...
std::string method_key(Method method);    // "no_adaptation", "adaent", "N", "S", "NS", "oracle"
Method parse_method_key(const std::string& key);

struct FoldOutcome {
  int fold = 0;
  double test_dice = 0.0;
  double lr = 0.0;
  int64_t best_epoch = -1;
  std::string digest;
  std::vector<double> validation_curve;
};

struct MethodResult {
  Method method = Method::no_adaptation;
  std::vector<FoldOutcome> folds;

  std::vector<double> fold_dice() const;
  double mean() const;
  /// Population standard deviation over folds.
  double stddev() const;
};

struct RunReport {
  std::vector<MethodResult> methods;
  std::map<std::string, std::string> digests;
  nlohmann::json config = nlohmann::json::object();
  bool patient_stratified = false;
  std::string validation_objective;

  const MethodResult& result(Method method) const;
  bool has(Method method) const;
  /// Sorts methods into ladder order.
  void normalize();
};

/// Percent-Dice with one decimal: 0.729, 0.046 -> "72.9 ± 4.6".
std::string format_mean_std(double mean, double stddev);

nlohmann::json report_to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& json);

enum class ReportFormat { csv, json };

/// Renders a complete report; an empty method list or a method without folds
/// is a contract violation.
std::string render_report(const RunReport& report, ReportFormat format);
void emit_report(const RunReport& report, ReportFormat format, const std::filesystem::path& path);

RunReport load_report(const std::filesystem::path& path);

/// Unions several runs' methods; a method present in two runs is an error.
RunReport merge_reports(const std::vector<RunReport>& reports);

}  // namespace sfuda
