// End-to-end tests that drive the installed CLI binary through std::system.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "advcausal/checkpoint.hpp"
#include "advcausal/config.hpp"

using namespace advcausal;
namespace fs = std::filesystem;

namespace {

const std::string kTool = ADVCAUSAL_TOOL_PATH;
const std::string kToyConfig = std::string(ADVCAUSAL_CONFIG_DIR) + "/toy.cfg";
const std::string kGoldenDir = std::string(ADVCAUSAL_GOLDEN_DIR) + "/toy";

int run(const std::string& args) {
  const std::string cmd = kTool + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() /
                       ("advcausal_cli_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void run_toy_pipeline(const fs::path& out) {
  const std::string base = "--config " + kToyConfig + " --out " + out.string();
  REQUIRE(run("gen-data " + base) == 0);
  REQUIRE(run("train " + base + " --defense at") == 0);
  REQUIRE(run("train " + base + " --defense adml") == 0);
  REQUIRE(run("attack " + base + " --checkpoint " + (out / "checkpoint_at.bin").string() +
              " --attack pgd") == 0);
  REQUIRE(run("estimate-theta " + base + " --checkpoint " +
              (out / "checkpoint_at.bin").string()) == 0);
  REQUIRE(run("estimate-theta " + base + " --checkpoint " +
              (out / "checkpoint_adml.bin").string()) == 0);
  REQUIRE(run("report " + base + " --checkpoints " + (out / "checkpoint_at.bin").string() +
              "," + (out / "checkpoint_adml.bin").string()) == 0);
}

}  // namespace

TEST_CASE("usage and config errors exit with categorized codes") {
  CHECK(run("") == 2);
  CHECK(run("frobnicate --config " + kToyConfig) == 2);
  CHECK(run("gen-data") == 2);                             // missing --config
  CHECK(run("gen-data --config /nonexistent.cfg") == 2);   // config error
  CHECK(run("gen-data --config " + kToyConfig + " --bogus 1") == 2);
  CHECK(run("train --config " + kToyConfig + " --defense nope --out " +
            fresh_dir("usage").string()) == 2);

  // train before gen-data: i/o error
  const fs::path out = fresh_dir("no_data");
  CHECK(run("train --config " + kToyConfig + " --defense at --out " + out.string()) == 4);

  // adml without an AT checkpoint: contract error
  const fs::path out2 = fresh_dir("no_base");
  REQUIRE(run("gen-data --config " + kToyConfig + " --out " + out2.string()) == 0);
  CHECK(run("train --config " + kToyConfig + " --defense adml --out " + out2.string()) == 3);
}

TEST_CASE("zero-epoch training checkpoints the freshly initialized model") {
  const fs::path out = fresh_dir("zero_epochs");
  // copy the toy config with epochs = 0
  const fs::path cfg = out / "cfg.cfg";
  std::string text = slurp(kToyConfig);
  const auto pos = text.find("epochs = 6");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 10, "epochs = 0");
  std::ofstream(cfg) << text;

  const std::string base = "--config " + cfg.string() + " --out " + out.string();
  REQUIRE(run("gen-data " + base) == 0);
  REQUIRE(run("train " + base + " --defense at") == 0);

  const Classifier trained = load_classifier(out / "checkpoint_at.bin");
  const ExperimentConfig parsed = load_experiment_config(cfg);
  ClassifierSpec spec = parsed.model;
  spec.input_dim = 2;
  spec.num_classes = 3;
  const Classifier fresh = init_classifier(spec);
  CHECK(trained.checksum() == fresh.checksum());

  // history exists and holds only the header
  std::ifstream hist(out / "history_at.csv");
  std::string line;
  std::getline(hist, line);
  CHECK(line == "epoch,clean_acc,pgd_acc,loss,lr");
  CHECK(!std::getline(hist, line));
}

TEST_CASE("report with a single checkpoint emits no rho block") {
  const fs::path out = fresh_dir("single_report");
  const std::string base = "--config " + kToyConfig + " --out " + out.string();
  REQUIRE(run("gen-data " + base) == 0);
  REQUIRE(run("train " + base + " --defense at") == 0);
  REQUIRE(run("report " + base + " --checkpoints " +
              (out / "checkpoint_at.bin").string()) == 0);
  const RobustnessReport report = parse_report_json(out / "report_checkpoint_at.json");
  CHECK(!report.rho.has_value());
  CHECK(report.attacks.size() == 3);
}

TEST_CASE("toy pipeline reproduces the committed golden outputs byte-for-byte") {
  REQUIRE_MESSAGE(fs::exists(kGoldenDir), "golden directory missing: " << kGoldenDir);
  const fs::path out = fresh_dir("golden");
  run_toy_pipeline(out);

  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(kGoldenDir)) {
    const fs::path mine = out / entry.path().filename();
    REQUIRE_MESSAGE(fs::exists(mine), "missing output " << mine.string());
    CHECK_MESSAGE(slurp(mine) == slurp(entry.path()),
                  "byte mismatch in " << entry.path().filename().string());
    ++compared;
  }
  CHECK(compared == 20);
}

TEST_CASE("environment variable ADVCAUSAL_OUT overrides --out") {
  const fs::path out_flag = fresh_dir("flag_dir");
  const fs::path out_env = fresh_dir("env_dir");
  const std::string cmd = "ADVCAUSAL_OUT=" + out_env.string() + " " + kTool +
                          " gen-data --config " + kToyConfig + " --out " +
                          out_flag.string() + " >/dev/null 2>&1";
  REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
  CHECK(fs::exists(out_env / "train.ds"));
  CHECK(!fs::exists(out_flag / "train.ds"));
}

TEST_CASE("commands do not mutate their input files") {
  const fs::path out = fresh_dir("immutable");
  const std::string base = "--config " + kToyConfig + " --out " + out.string();
  REQUIRE(run("gen-data " + base) == 0);
  const std::string train_before = slurp(out / "train.ds");
  const std::string config_before = slurp(kToyConfig);
  REQUIRE(run("train " + base + " --defense at") == 0);
  CHECK(slurp(out / "train.ds") == train_before);
  CHECK(slurp(kToyConfig) == config_before);
}
