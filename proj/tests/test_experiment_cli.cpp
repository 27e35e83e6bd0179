#include "doctest_torch.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sfuda/experiment.hpp"

using namespace sfuda;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.image_size = 32;
  c.segmentation.width_multiplier = 0.25;
  c.prior_base_channels = 8;
  c.prior_bottleneck_dim = 32;
  c.source_training = {1e-2, 4, 8};
  c.prior_training = {2e-3, 4, 8};
  c.adaptation = {1e-3, 2, 8};
  c.adaent = {1e-3, 2, 8};
  c.oracle = {1e-3, 2, 8};
  c.synthetic.image_size = 32;
  c.synthetic.source_count = 16;
  c.synthetic.target_count = 12;
  c.synthetic.target.invert = true;
  return c;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("sfuda_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string command = std::string(SFUDA_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path tiny_config_file(const fs::path& dir) {
  const auto path = dir / "tiny.json";
  save_config(tiny_config(), path);
  return path;
}

}  // namespace

TEST_CASE("CLI exit codes for configuration and missing artifacts") {
  const auto dir = scratch("codes");
  const auto config = tiny_config_file(dir).string();
  CHECK(run_cli("--bogus-flag") == 2);
  CHECK(run_cli("cross-validate --config " + config + " --set loss.w_q=1 --out " + (dir / "a").string()) == 2);
  CHECK(run_cli("cross-validate --config " + config + " --set data.image_size=30 --out " + (dir / "a").string()) == 2);
  CHECK(run_cli("cross-validate --config " + (dir / "absent.json").string() + " --out " + (dir / "a").string()) != 0);
  CHECK(run_cli("adapt --config " + config + " --setting Q --source-ckpt x --out " + (dir / "a").string()) == 2);
  CHECK(run_cli("cross-validate --config " + config + " --methods N --set checkpoints.source_type2=" +
                (dir / "nowhere").string() + " --out " + (dir / "a").string()) == 3);
  CHECK(run_cli("evaluate --run " + (dir / "nothing").string()) == 3);
  CHECK(run_cli("generate-synthetic --config " + config + " --out " + (dir / "data").string()) == 0);
  CHECK(fs::exists(dir / "data" / "target" / "manifest.csv"));
}

TEST_CASE("missing artifacts name the config field") {
  auto config = tiny_config();
  config.checkpoints.shape_prior = "/nonexistent/prior";
  try {
    experiment::load_artifacts(config, {Method::shape});
    FAIL("expected MissingArtifact");
  } catch (const MissingArtifact& e) {
    CHECK(std::string(e.what()).find("checkpoints.") != std::string::npos);
  }
  CHECK_NOTHROW(experiment::load_artifacts(config, {}));
}

TEST_CASE("end-to-end run through the CLI: outputs, label-free audit, evaluation and reports") {
  const auto dir = scratch("e2e");
  const auto config = tiny_config_file(dir).string();
  const auto out = dir / "exp";
  REQUIRE(run_cli("run-synthetic --config " + config + " --methods no_adaptation adaent N S NS oracle --fold 0 1 --out " +
                  out.string()) == 0);
  const auto run = out / "run";
  for (const char* name : {"config.json", "metrics.csv", "report.json", "report.csv", "audit.log"}) {
    CHECK(fs::exists(run / name));
  }
  const auto report = load_report(run / "report.json");
  CHECK(report.methods.size() == 6);
  for (const auto& m : report.methods) {
    CHECK(m.folds.size() == 2);
    for (const auto& f : m.folds) {
      CHECK(fs::exists(run / "checkpoints" / method_key(m.method) / ("fold" + std::to_string(f.fold)) / "params.bin"));
      CHECK((f.test_dice >= 0.0 && f.test_dice <= 1.0));
    }
  }

  // Only oracle fine-tuning and scoring may touch target masks.
  std::ifstream audit(run / "audit.log");
  int reads = 0;
  for (std::string line; std::getline(audit, line);) {
    ++reads;
    CHECK(line.find("label-free") == std::string::npos);
    const bool allowed_phase = line.find("\toracle-") != std::string::npos || line.find("\tscore:") != std::string::npos;
    CHECK(allowed_phase);
  }
  CHECK(reads > 0);

  CHECK(run_cli("evaluate --run " + run.string()) == 0);
  const auto rescored = experiment::evaluate_run(run);
  CHECK(report_to_json(rescored) == report_to_json(report));

  CHECK(run_cli("report --runs " + run.string() + " --out " + (dir / "t1.csv").string()) == 0);
  CHECK(run_cli("report --runs " + run.string() + " --out " + (dir / "t2.csv").string()) == 0);
  CHECK(run_cli("report --runs " + run.string() + " --out " + (dir / "t.json").string()) == 0);
  CHECK(slurp(dir / "t1.csv") == slurp(dir / "t2.csv"));
  CHECK(nlohmann::json::parse(slurp(dir / "t.json")).at("methods").size() == 6);
  CHECK(run_cli("report --runs " + run.string() + " " + run.string() + " --out " + (dir / "dup.csv").string()) == 4);

  // A checkpoint that no longer matches the report is refused.
  auto tampered = nlohmann::json::parse(slurp(run / "report.json"));
  tampered["methods"][0]["folds"][0]["digest"] = std::string(64, '0');
  std::ofstream(run / "report.json") << tampered.dump(2);
  CHECK(run_cli("evaluate --run " + run.string()) == 4);
}
