#include "sfuda/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sfuda/errors.hpp"

namespace sfuda {
namespace fs = std::filesystem;
using nlohmann::json;

std::string display_name(Method method) {
  switch (method) {
    case Method::no_adaptation: return "No adaptation";
    case Method::adaent: return "AdaEnt-style";
    case Method::norm: return "Ours (N)";
    case Method::shape: return "Ours (S)";
    case Method::norm_shape: return "Ours (NS)";
    case Method::oracle: return "Oracle";
  }
  return "?";
}

std::string method_key(Method method) {
  switch (method) {
    case Method::no_adaptation: return "no_adaptation";
    case Method::adaent: return "adaent";
    case Method::norm: return "N";
    case Method::shape: return "S";
    case Method::norm_shape: return "NS";
    case Method::oracle: return "oracle";
  }
  return "?";
}

Method parse_method_key(const std::string& key) {
  for (Method m : kMethodLadder) {
    if (method_key(m) == key) return m;
  }
  throw ContractViolation("unknown method key '" + key + "'");
}

std::vector<double> MethodResult::fold_dice() const {
  std::vector<double> values;
  for (const auto& f : folds) values.push_back(f.test_dice);
  return values;
}

double MethodResult::mean() const {
  require(!folds.empty(), "method " + display_name(method) + " has no folds");
  const auto values = fold_dice();
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double MethodResult::stddev() const {
  const double m = mean();
  double sq = 0.0;
  for (const auto& f : folds) sq += (f.test_dice - m) * (f.test_dice - m);
  return std::sqrt(sq / static_cast<double>(folds.size()));
}

const MethodResult& RunReport::result(Method method) const {
  for (const auto& r : methods) {
    if (r.method == method) return r;
  }
  throw ContractViolation("report has no results for " + display_name(method));
}

bool RunReport::has(Method method) const {
  return std::any_of(methods.begin(), methods.end(), [&](const MethodResult& r) { return r.method == method; });
}

void RunReport::normalize() {
  std::stable_sort(methods.begin(), methods.end(),
                   [](const MethodResult& a, const MethodResult& b) { return a.method < b.method; });
}

std::string format_mean_std(double mean, double stddev) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.1f ± %.1f", mean * 100.0, stddev * 100.0);
  return buffer;
}

namespace {

std::string percent(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.1f", value * 100.0);
  return buffer;
}

void require_complete(const RunReport& report) {
  require(!report.methods.empty(), "cannot emit a report without methods");
  for (const auto& m : report.methods) {
    require(!m.folds.empty(), "cannot emit a report: " + display_name(m.method) + " has no folds");
  }
}

}  // namespace

json report_to_json(const RunReport& report) {
  json methods = json::array();
  for (const auto& m : report.methods) {
    json folds = json::array();
    for (const auto& f : m.folds) {
      folds.push_back({{"fold", f.fold},
                       {"test_dice", f.test_dice},
                       {"lr", f.lr},
                       {"best_epoch", f.best_epoch},
                       {"digest", f.digest},
                       {"validation_curve", f.validation_curve}});
    }
    methods.push_back({{"method", method_key(m.method)},
                       {"name", display_name(m.method)},
                       {"mean_dice", m.mean()},
                       {"std_dice", m.stddev()},
                       {"formatted", format_mean_std(m.mean(), m.stddev())},
                       {"folds", folds}});
  }
  return {{"schema_version", 1},
          {"methods", methods},
          {"digests", report.digests},
          {"patient_stratified", report.patient_stratified},
          {"validation_objective", report.validation_objective},
          {"config", report.config}};
}

RunReport report_from_json(const json& j) {
  RunReport report;
  try {
    for (const auto& m : j.at("methods")) {
      MethodResult result;
      result.method = parse_method_key(m.at("method").get<std::string>());
      for (const auto& f : m.at("folds")) {
        FoldOutcome fold;
        fold.fold = f.at("fold").get<int>();
        fold.test_dice = f.at("test_dice").get<double>();
        fold.lr = f.at("lr").get<double>();
        fold.best_epoch = f.at("best_epoch").get<int64_t>();
        fold.digest = f.at("digest").get<std::string>();
        fold.validation_curve = f.at("validation_curve").get<std::vector<double>>();
        result.folds.push_back(std::move(fold));
      }
      if (m.contains("mean_dice")) {
        require(std::abs(m.at("mean_dice").get<double>() - result.mean()) <= 1e-12,
                "report mean disagrees with its fold values for " + display_name(result.method));
      }
      report.methods.push_back(std::move(result));
    }
    report.digests = j.value("digests", std::map<std::string, std::string>{});
    report.patient_stratified = j.value("patient_stratified", false);
    report.validation_objective = j.value("validation_objective", std::string{});
    report.config = j.value("config", json::object());
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed report: ") + e.what());
  }
  return report;
}

std::string render_report(const RunReport& report, ReportFormat format) {
  require_complete(report);
  if (format == ReportFormat::json) return report_to_json(report).dump(2) + "\n";

  size_t fold_count = 0;
  for (const auto& m : report.methods) fold_count = std::max(fold_count, m.folds.size());
  std::ostringstream out;
  out << "method,dice,mean,std";
  for (size_t k = 0; k < fold_count; ++k) out << ",fold_" << k + 1;
  out << '\n';
  for (const auto& m : report.methods) {
    out << display_name(m.method) << ',' << format_mean_std(m.mean(), m.stddev()) << ',' << percent(m.mean()) << ','
        << percent(m.stddev());
    for (size_t k = 0; k < fold_count; ++k) {
      out << ',';
      if (k < m.folds.size()) out << percent(m.folds[k].test_dice);
    }
    out << '\n';
  }
  return out.str();
}

void emit_report(const RunReport& report, ReportFormat format, const fs::path& path) {
  const std::string text = render_report(report, format);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write report " + path.string());
  out << text;
}

RunReport load_report(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifact("report not found: " + path.string());
  std::ifstream in(path);
  try {
    return report_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw IoError("cannot parse report " + path.string() + ": " + e.what());
  }
}

RunReport merge_reports(const std::vector<RunReport>& reports) {
  require(!reports.empty(), "nothing to merge");
  RunReport merged;
  merged.config = reports.front().config;
  merged.patient_stratified = reports.front().patient_stratified;
  merged.validation_objective = reports.front().validation_objective;
  for (const auto& r : reports) {
    for (const auto& m : r.methods) {
      require(!merged.has(m.method), display_name(m.method) + " appears in more than one run");
      merged.methods.push_back(m);
    }
    for (const auto& [key, value] : r.digests) merged.digests.emplace(key, value);
  }
  merged.normalize();
  return merged;
}

}  // namespace sfuda
