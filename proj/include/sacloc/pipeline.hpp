#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sacloc/conformal.hpp"
#include "sacloc/dataset.hpp"
#include "sacloc/evalreport.hpp"
#include "sacloc/graph.hpp"
#include "sacloc/model.hpp"
#include "sacloc/regions.hpp"
#include "sacloc/train.hpp"

namespace sacloc {

struct SeedConfig {
  std::uint64_t split = 7;
  std::uint64_t init = 11;
  std::uint64_t train = 13;
  std::uint64_t kmeans = 17;
  std::uint64_t synth = 19;
};

struct SynthSection {
  SyntheticConfig environment;
  std::size_t train_samples = 3750;
  std::size_t test_samples = 750;
};

// Everything a pipeline run needs. Defaults are the reference settings;
// a JSON file overrides them, and command-line flags override the file.
struct RunConfig {
  std::filesystem::path fingerprints;  // empty: <output_dir>/train.csv
  std::filesystem::path inventory;     // empty: <output_dir>/inventory.csv
  std::filesystem::path test;          // empty: <output_dir>/test.csv
  std::filesystem::path output_dir = "out";

  GraphConfig graph;
  RssiScale rssi;
  ModelConfig model{0, 500, 4, 0, 2};
  TrainConfig train;
  double train_fraction = 0.8;

  double alpha = 0.1;
  std::size_t regions = 5;
  AssignmentMode assignment = AssignmentMode::kMixed;
  KMeansOptions kmeans;
  std::vector<double> sweep_alphas{0.01, 0.05, 0.10, 0.15, 0.20};

  SeedConfig seeds;
  SynthSection synth;

  std::filesystem::path fingerprints_path() const;
  std::filesystem::path inventory_path() const;
  std::filesystem::path test_path() const;
  std::filesystem::path checkpoint_path() const { return output_dir / "model.ckpt"; }
  std::filesystem::path loss_log_path() const { return output_dir / "train_log.csv"; }
  std::filesystem::path calibration_path() const { return output_dir / "calibration.json"; }
  std::filesystem::path sweep_dir() const { return output_dir / "sweep"; }

  void validate() const;
};

// Applies the keys present in `j` on top of `cfg`. Unknown keys raise ConfigError.
void apply_config_json(RunConfig& cfg, const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_to_json(const RunConfig& cfg);

struct SynthOutputs {
  std::filesystem::path inventory, train, test;
};
SynthOutputs run_synth(const RunConfig& cfg);

struct TrainOutputs {
  TrainResult result;
  std::size_t train_count = 0;
  std::size_t calibration_count = 0;
};
TrainOutputs run_train(const RunConfig& cfg);

SacpCalibration run_calibrate(const RunConfig& cfg);

struct PredictOutput {
  PredictionSet set;
  bool no_connected_aps = false;
};
PredictOutput run_predict(const RunConfig& cfg, const std::vector<double>& rssi);

Report run_evaluate(const RunConfig& cfg);
SweepResult run_sweep(const RunConfig& cfg);

}  // namespace sacloc
