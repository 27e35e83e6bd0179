#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sfuda/config.hpp"
#include "sfuda/errors.hpp"
#include "sfuda/experiment.hpp"
#include "sfuda/synthetic.hpp"

namespace fs = std::filesystem;
using namespace sfuda;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_out = true) {
  cmd->add_option("--config", args.config_path, "JSON config file");
  cmd->add_option("--set", args.overrides, "dotted.key=value override, repeatable");
  if (needs_out) cmd->add_option("--out", args.out, "output directory")->required();
}

ExperimentConfig resolve_config(const CommonArgs& args) {
  nlohmann::json j = to_json(ExperimentConfig{});
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw MissingArtifact("config file not found: " + args.config_path);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("cannot parse " + args.config_path + ": " + e.what());
    }
  }
  for (const auto& o : args.overrides) apply_override(j, o);
  auto config = config_from_json(j);
  apply_environment(config);
  config.validate();
  return config;
}

std::vector<Method> parse_methods(const std::vector<std::string>& keys) {
  std::vector<Method> methods;
  for (const auto& k : keys) {
    try {
      methods.push_back(parse_method_key(k));
    } catch (const ContractViolation&) {
      throw ConfigError("unknown method '" + k + "'; expected no_adaptation, adaent, N, S, NS or oracle");
    }
  }
  return methods;
}

void print_report(const RunReport& report) { std::cout << render_report(report, ReportFormat::csv); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Source-free domain adaptation for segmentation"};
  app.require_subcommand(1);

  CommonArgs gen_args, src_args, prior_args, adapt_args, cv_args, synth_args;
  std::string source_type = "both";
  std::string setting_text, source_ckpt, prior_ckpt;
  std::vector<int> adapt_folds, cv_folds, synth_folds;
  std::vector<std::string> cv_methods, synth_methods;
  std::string run_dir;
  std::vector<std::string> report_runs;
  std::string report_out;

  auto* gen = app.add_subcommand("generate-synthetic", "render a synthetic source/target pair");
  add_common(gen, gen_args);

  auto* train_source = app.add_subcommand("train-source", "train the source segmentation network");
  add_common(train_source, src_args);
  train_source->add_option("--type", source_type, "1, 2 or both")->check(CLI::IsMember({"1", "2", "both"}));

  auto* train_prior = app.add_subcommand("train-shape-prior", "train the shape-prior autoencoder");
  add_common(train_prior, prior_args);

  auto* adapt = app.add_subcommand("adapt", "label-free adaptation of one setting over the folds");
  add_common(adapt, adapt_args);
  adapt->add_option("--setting", setting_text, "N, S or NS")->required();
  adapt->add_option("--source-ckpt", source_ckpt, "source segmentation checkpoint directory")->required();
  adapt->add_option("--prior-ckpt", prior_ckpt, "shape-prior checkpoint directory");
  adapt->add_option("--fold", adapt_folds, "fold indices (default: all)");

  auto* cv = app.add_subcommand("cross-validate", "baselines and adaptation settings over the folds");
  add_common(cv, cv_args);
  cv->add_option("--methods", cv_methods, "method keys (default: full ladder)");
  cv->add_option("--fold", cv_folds, "fold indices (default: all)");

  auto* synth = app.add_subcommand("run-synthetic", "generate data, train sources and cross-validate");
  add_common(synth, synth_args);
  synth->add_option("--methods", synth_methods, "method keys (default: full ladder)");
  synth->add_option("--fold", synth_folds, "fold indices (default: all)");

  auto* evaluate = app.add_subcommand("evaluate", "re-score a run directory against its report");
  evaluate->add_option("--run", run_dir, "run directory")->required();

  auto* report = app.add_subcommand("report", "merge run reports into one table");
  report->add_option("--runs", report_runs, "run directories")->required();
  report->add_option("--out", report_out, "output table (.csv or .json)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return ConfigError("").exit_code();
  }

  try {
    if (*gen) {
      const auto config = resolve_config(gen_args);
      const auto datasets = data::generate_synthetic(config.synthetic, gen_args.out);
      std::cout << "source manifest: " << datasets.source_csv.string() << '\n'
                << "target manifest: " << datasets.target_csv.string() << '\n';
    } else if (*train_source) {
      const auto config = resolve_config(src_args);
      const bool t1 = source_type != "2", t2 = source_type != "1";
      const auto resolved = experiment::train_source_artifacts(config, src_args.out, t1, t2, false);
      save_config(resolved, fs::path(src_args.out) / "config.json");
      if (t1) std::cout << "type 1: " << resolved.checkpoints.source_type1 << '\n';
      if (t2) std::cout << "type 2: " << resolved.checkpoints.source_type2 << '\n';
    } else if (*train_prior) {
      const auto config = resolve_config(prior_args);
      const auto resolved = experiment::train_source_artifacts(config, prior_args.out, false, false, true);
      save_config(resolved, fs::path(prior_args.out) / "config.json");
      std::cout << "shape prior: " << resolved.checkpoints.shape_prior << '\n';
    } else if (*adapt) {
      auto config = resolve_config(adapt_args);
      Setting setting;
      try {
        setting = parse_setting(setting_text);
      } catch (const Error&) {
        throw ConfigError("unknown setting '" + setting_text + "'; expected N, S or NS");
      }
      config.setting = setting;
      (source_type_for(setting) == SourceType::with_ring ? config.checkpoints.source_type2
                                                         : config.checkpoints.source_type1) = source_ckpt;
      if (!prior_ckpt.empty()) config.checkpoints.shape_prior = prior_ckpt;
      experiment::CrossValidationOptions options;
      options.methods = parse_methods({to_string(setting)});
      options.folds = adapt_folds;
      const auto artifacts = experiment::load_artifacts(config, options.methods);
      print_report(experiment::run_cross_validation(config, artifacts, adapt_args.out, options));
    } else if (*cv) {
      const auto config = resolve_config(cv_args);
      experiment::CrossValidationOptions options;
      if (!cv_methods.empty()) options.methods = parse_methods(cv_methods);
      options.folds = cv_folds;
      const auto artifacts = experiment::load_artifacts(config, options.methods);
      print_report(experiment::run_cross_validation(config, artifacts, cv_args.out, options));
    } else if (*synth) {
      const auto config = resolve_config(synth_args);
      experiment::CrossValidationOptions options;
      if (!synth_methods.empty()) options.methods = parse_methods(synth_methods);
      options.folds = synth_folds;
      print_report(experiment::run_synthetic_experiment(config, synth_args.out, options));
    } else if (*evaluate) {
      const auto recorded = load_report(fs::path(run_dir) / "report.json");
      const auto rescored = experiment::evaluate_run(run_dir);
      print_report(rescored);
      for (size_t m = 0; m < recorded.methods.size(); ++m) {
        for (size_t f = 0; f < recorded.methods[m].folds.size(); ++f) {
          if (recorded.methods[m].folds[f].test_dice != rescored.methods[m].folds[f].test_dice) {
            throw ContractViolation("re-scored Dice differs from report for " +
                                    display_name(recorded.methods[m].method));
          }
        }
      }
    } else if (*report) {
      std::vector<RunReport> reports;
      for (const auto& dir : report_runs) reports.push_back(load_report(fs::path(dir) / "report.json"));
      const auto merged = merge_reports(reports);
      const auto format = fs::path(report_out).extension() == ".json" ? ReportFormat::json : ReportFormat::csv;
      emit_report(merged, format, report_out);
      print_report(merged);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
