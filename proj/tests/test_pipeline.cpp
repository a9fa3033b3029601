#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "sacloc/error.hpp"
#include "sacloc/pipeline.hpp"
#include "support.hpp"

using namespace sacloc;
using sacloc::testing::read_file;
using sacloc::testing::TempDir;
using sacloc::testing::write_text;

namespace {

RunConfig tiny_config(const std::filesystem::path& out) {
  RunConfig cfg;
  cfg.output_dir = out;
  cfg.model.hidden = 8;
  cfg.model.heads = 2;
  cfg.train.epochs = 2;
  cfg.train.batch_size = 16;
  cfg.regions = 3;
  cfg.synth.environment.ap_count = 8;
  cfg.synth.train_samples = 150;
  cfg.synth.test_samples = 50;
  return cfg;
}

const char* kTinyJson = R"({
  "model": {"hidden": 8, "heads": 2},
  "train": {"epochs": 2, "batch_size": 16},
  "conformal": {"k": 3},
  "synth": {"ap_count": 8, "train_samples": 150, "test_samples": 50}
})";

struct CliResult {
  int status = 0;
  std::string out, err;
};

CliResult run_cli(const std::string& args, const TempDir& dir) {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd = "SACLOC_LOG=info " + std::string(SACLOC_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

}  // namespace

TEST_CASE("config defaults mirror the reference settings") {
  const RunConfig cfg;
  CHECK(cfg.graph.proximity_m == 20.0);
  CHECK(cfg.graph.rssi_threshold == -75.0);
  CHECK(cfg.model.hidden == 500);
  CHECK(cfg.model.heads == 4);
  CHECK(cfg.model.layers == 2);
  CHECK(cfg.train.epochs == 100);
  CHECK(cfg.train.batch_size == 64);
  CHECK(cfg.train.base_lr == 0.001);
  CHECK(cfg.train.weight_decay == 1e-4);
  CHECK(cfg.train.dropout == 0.4);
  CHECK(cfg.alpha == 0.1);
  CHECK(cfg.regions == 5);
  CHECK(cfg.train_fraction == 0.8);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("config JSON overrides, round trip and strict keys") {
  RunConfig cfg;
  apply_config_json(cfg, nlohmann::json::parse(R"({"graph": {"tau": -70}, "conformal": {"alpha": 0.05,
      "assignment": "ground_truth", "sweep_alphas": [0.1, 0.2]}, "output_dir": "elsewhere"})"));
  CHECK(cfg.graph.rssi_threshold == -70.0);
  CHECK(cfg.graph.proximity_m == 20.0);
  CHECK(cfg.alpha == 0.05);
  CHECK(cfg.assignment == AssignmentMode::kGroundTruth);
  CHECK(cfg.sweep_alphas == std::vector<double>{0.1, 0.2});
  CHECK(cfg.output_dir == "elsewhere");
  CHECK(cfg.checkpoint_path() == std::filesystem::path("elsewhere") / "model.ckpt");
  CHECK(cfg.fingerprints_path() == std::filesystem::path("elsewhere") / "train.csv");

  RunConfig back;
  apply_config_json(back, run_config_to_json(cfg));
  CHECK(run_config_to_json(back) == run_config_to_json(cfg));

  for (const char* bad : {R"({"grpah": {}})", R"({"graph": {"tau": -70, "d": 3}})", R"({"train": {"epochs": "ten"}})",
                          R"({"conformal": {"assignment": "both"}})"}) {
    RunConfig c;
    try {
      apply_config_json(c, nlohmann::json::parse(bad));
      FAIL("expected ConfigError for " << bad);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kConfigError);
    }
  }
  RunConfig invalid;
  invalid.alpha = 1.5;
  CHECK_THROWS_AS(invalid.validate(), Error);
  invalid = RunConfig{};
  invalid.model.heads = 3;
  CHECK_THROWS_AS(invalid.validate(), Error);
}

TEST_CASE("config file loading") {
  TempDir dir("cfg");
  write_text(dir / "c.json", kTinyJson);
  const RunConfig cfg = load_run_config(dir / "c.json");
  CHECK(cfg.model.hidden == 8);
  CHECK(cfg.regions == 3);
  write_text(dir / "broken.json", "{ not json");
  CHECK_THROWS_AS(load_run_config(dir / "broken.json"), Error);
  CHECK_THROWS_AS(load_run_config(dir / "absent.json"), Error);
}

TEST_CASE("stage prerequisites") {
  TempDir dir("pipe");
  const RunConfig cfg = tiny_config(dir.path());
  for (auto stage : {+[](const RunConfig& c) { run_calibrate(c); }, +[](const RunConfig& c) { run_evaluate(c); },
                     +[](const RunConfig& c) { run_sweep(c); }}) {
    try {
      stage(cfg);
      FAIL("expected MissingArtifact");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kMissingArtifact);
    }
  }
  CHECK_THROWS_AS(run_train(cfg), Error);
}

TEST_CASE("full pipeline is byte-reproducible") {
  TempDir a("pipe"), b("pipe");
  for (const TempDir* d : {&a, &b}) {
    const RunConfig cfg = tiny_config(d->path());
    run_synth(cfg);
    const auto trained = run_train(cfg);
    CHECK(trained.train_count == 120);
    CHECK(trained.calibration_count == 30);
    const auto cal = run_calibrate(cfg);
    CHECK(cal.total == 30);
    const Report report = run_evaluate(cfg);
    CHECK(report.metrics->count == 50);
    run_sweep(cfg);
  }
  for (const char* f : {"inventory.csv", "train.csv", "test.csv", "model.ckpt", "train_log.csv", "calibration.json",
                        "report.json", "report.txt", "fig_error_map.csv", "sweep/fig_alpha_radius.csv",
                        "sweep/fig_alpha_coverage.csv", "sweep/report.json"}) {
    CAPTURE(f);
    REQUIRE(std::filesystem::exists(a / f));
    CHECK(read_file(a / f) == read_file(b / f));
  }
  const RunConfig cfg = tiny_config(a.path());
  std::vector<double> rssi(8, kRssiSentinel);
  const auto out = run_predict(cfg, rssi);
  CHECK(out.no_connected_aps);
  CHECK(std::isfinite(out.set.center.x));
  rssi.pop_back();
  CHECK_THROWS_AS(run_predict(cfg, rssi), Error);
}

TEST_CASE("cli help exits zero and lists flags") {
  TempDir dir("cli");
  const auto top = run_cli("--help", dir);
  CHECK(top.status == 0);
  for (const char* cmd : {"synth", "train", "calibrate", "predict", "evaluate", "sweep"}) {
    CHECK(top.out.find(cmd) != std::string::npos);
    const auto r = run_cli(std::string(cmd) + " --help", dir);
    CAPTURE(cmd);
    CHECK(r.status == 0);
    for (const char* flag : {"--config", "--alpha", "--k", "--epochs", "--output-dir", "--workers"}) {
      CHECK(r.out.find(flag) != std::string::npos);
    }
  }
  CHECK(run_cli("predict --help", dir).out.find("--rssi-file") != std::string::npos);
}

TEST_CASE("cli end to end") {
  TempDir dir("cli");
  write_text(dir / "c.json", kTinyJson);
  const std::string common = "--config " + (dir / "c.json").string() + " --output-dir " + (dir / "out").string();

  const auto missing = run_cli("evaluate " + common, dir);
  CHECK(missing.status != 0);
  CHECK(missing.err.find("MissingArtifact") != std::string::npos);
  CHECK(std::count(missing.err.begin(), missing.err.end(), '\n') == 1);

  CHECK(run_cli("synth " + common, dir).status == 0);
  CHECK(run_cli("train " + common, dir).status == 0);
  const auto no_cal = run_cli("evaluate " + common, dir);
  CHECK(no_cal.status != 0);
  CHECK(no_cal.err.find("MissingArtifact") != std::string::npos);
  CHECK(run_cli("calibrate " + common + " --alpha 0.2", dir).status == 0);
  const auto cal = nlohmann::json::parse(read_file(dir / "out" / "calibration.json"));
  CHECK(cal.at("alpha").get<double>() == 0.2);
  const auto eval = run_cli("evaluate " + common, dir);
  CHECK(eval.status == 0);
  CHECK(std::filesystem::exists(dir / "out" / "report.json"));
  CHECK(std::filesystem::exists(dir / "out" / "report.txt"));
  CHECK(run_cli("sweep " + common, dir).status == 0);
  CHECK(std::filesystem::exists(dir / "out" / "sweep" / "fig_alpha_radius.csv"));

  const auto pred = run_cli("predict " + common + " --rssi 100,100,100,100,100,100,100,100", dir);
  CHECK(pred.status == 0);
  CHECK(pred.err.find("no_connected_aps") != std::string::npos);
  double x = 0, y = 0;
  std::size_t region = 0;
  char tail[16] = {};
  CHECK(std::sscanf(pred.out.c_str(), "%lf %lf %zu %15s", &x, &y, &region, tail) == 4);
  CHECK(region < 3);

  write_text(dir / "scan.csv", "a,b,c,d,e,f,g,h\n-50,-60,100,-70,100,-80,-90,100\n");
  CHECK(run_cli("predict " + common + " --rssi-file " + (dir / "scan.csv").string(), dir).status == 0);
  CHECK(run_cli("predict " + common + " --rssi 1,2", dir).status != 0);
  CHECK(run_cli("predict " + common, dir).status != 0);
  CHECK(run_cli("train " + common + " --assignment sideways", dir).status != 0);

  write_text(dir / "bad.json", R"({"modle": {}})");
  const auto bad = run_cli("train --config " + (dir / "bad.json").string(), dir);
  CHECK(bad.status != 0);
  CHECK(bad.err.find("ConfigError") != std::string::npos);
}
