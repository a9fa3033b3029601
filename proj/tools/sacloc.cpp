// sacloc: train a graph-transformer Wi-Fi localizer and wrap it in
// region-wise conformal prediction sets.
//
// Settings are resolved as built-in defaults < --config file < flags.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sacloc/csv.hpp"
#include "sacloc/error.hpp"
#include "sacloc/log.hpp"
#include "sacloc/pipeline.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> output_dir, fingerprints, inventory, test, assignment;
  std::optional<double> alpha, lr, dropout, tau, d_p;
  std::optional<std::size_t> k, epochs, hidden, heads, batch_size, workers;
  std::string rssi, rssi_file;
};

void add_common_options(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--config", o.config, "JSON config file (flags override its values)")->check(CLI::ExistingFile);
  cmd.add_option("--output-dir", o.output_dir, "Directory for all artifacts (default: out)");
  cmd.add_option("--fingerprints", o.fingerprints, "Training fingerprint CSV (default: <output-dir>/train.csv)");
  cmd.add_option("--inventory", o.inventory, "AP inventory CSV (default: <output-dir>/inventory.csv)");
  cmd.add_option("--test", o.test, "Test fingerprint CSV (default: <output-dir>/test.csv)");
  cmd.add_option("--tau", o.tau, "User-AP link threshold in dBm (default: -75)");
  cmd.add_option("--d-p", o.d_p, "AP-AP proximity radius in meters (default: 20)");
  cmd.add_option("--hidden", o.hidden, "Hidden width h (default: 500)");
  cmd.add_option("--heads", o.heads, "Attention heads E (default: 4)");
  cmd.add_option("--epochs", o.epochs, "Training epochs (default: 100)");
  cmd.add_option("--batch-size", o.batch_size, "Mini-batch size (default: 64)");
  cmd.add_option("--lr", o.lr, "Base learning rate (default: 0.001)");
  cmd.add_option("--dropout", o.dropout, "Dropout rate (default: 0.4)");
  cmd.add_option("--workers", o.workers, "Training threads; fixed count gives reproducible results (default: 1)");
  cmd.add_option("--alpha", o.alpha, "Miscoverage level (default: 0.1)");
  cmd.add_option("--k", o.k, "Number of K-Means regions (default: 5)");
  cmd.add_option("--assignment", o.assignment, "Region assignment: mixed, ground_truth or predicted (default: mixed)")
      ->check(CLI::IsMember({"mixed", "ground_truth", "predicted"}));
}

sacloc::RunConfig resolve(const Overrides& o) {
  sacloc::RunConfig cfg = o.config.empty() ? sacloc::RunConfig{} : sacloc::load_run_config(o.config);
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.fingerprints) cfg.fingerprints = *o.fingerprints;
  if (o.inventory) cfg.inventory = *o.inventory;
  if (o.test) cfg.test = *o.test;
  if (o.tau) cfg.graph.rssi_threshold = *o.tau;
  if (o.d_p) cfg.graph.proximity_m = *o.d_p;
  if (o.hidden) cfg.model.hidden = *o.hidden;
  if (o.heads) cfg.model.heads = *o.heads;
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.batch_size) cfg.train.batch_size = *o.batch_size;
  if (o.lr) cfg.train.base_lr = *o.lr;
  if (o.dropout) cfg.train.dropout = *o.dropout;
  if (o.workers) cfg.train.workers = *o.workers;
  if (o.alpha) cfg.alpha = *o.alpha;
  if (o.k) cfg.regions = *o.k;
  if (o.assignment) cfg.assignment = sacloc::parse_assignment_mode(*o.assignment);
  return cfg;
}

std::vector<double> parse_rssi_list(const std::string& text) {
  std::string normalized = text;
  for (char& c : normalized) {
    if (c == ';' || c == ' ' || c == '\t') c = ',';
  }
  std::vector<double> out;
  for (const auto& cell : sacloc::csv::split_line(normalized)) {
    if (cell.empty()) continue;
    double v = 0.0;
    if (!sacloc::csv::parse_double(cell, v)) {
      throw sacloc::Error(sacloc::ErrorCode::kMalformedRow, "bad RSSI value '" + std::string(cell) + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw sacloc::Error(sacloc::ErrorCode::kEmptyInput, "no RSSI values given");
  return out;
}

// Reads the last non-empty line, so a file with an AP-id header row works too.
std::vector<double> read_rssi_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw sacloc::Error(sacloc::ErrorCode::kIoError, "cannot read " + path);
  std::string line, last;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) last = line;
  }
  return parse_rssi_list(last);
}

std::string fmt_radius(double r) { return std::isinf(r) ? "inf" : sacloc::csv::format_double(r); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wi-Fi RSSI localization with a graph transformer and spatially adaptive conformal prediction"};
  app.require_subcommand(1);
  app.footer("Precedence: built-in defaults < --config JSON < command-line flags.\n"
             "Set SACLOC_LOG (e.g. debug, warn) to control log verbosity.");

  Overrides o;
  auto* synth = app.add_subcommand("synth", "Write a synthetic AP inventory plus train and test fingerprints");
  auto* train = app.add_subcommand("train", "Train the model; writes model.ckpt and train_log.csv");
  auto* calibrate = app.add_subcommand("calibrate", "Fit regions and radii on the held-out split; writes calibration.json");
  auto* predict = app.add_subcommand("predict", "Predict one RSSI vector; prints x y region radius");
  auto* evaluate = app.add_subcommand("evaluate", "Score the test file; writes report.json, report.txt and figure CSVs");
  auto* sweep = app.add_subcommand("sweep", "Radii and coverage over the alpha grid; writes to <output-dir>/sweep");
  for (auto* cmd : {synth, train, calibrate, predict, evaluate, sweep}) add_common_options(*cmd, o);
  auto* rssi_group = predict->add_option_group("input", "RSSI vector source");
  rssi_group->add_option("--rssi", o.rssi, "Comma-separated RSSI values in inventory order (100 = not detected)");
  rssi_group->add_option("--rssi-file", o.rssi_file, "File whose last line holds the RSSI values")
      ->check(CLI::ExistingFile);
  rssi_group->require_option(1);

  CLI11_PARSE(app, argc, argv);

  try {
    sacloc::log();
    const sacloc::RunConfig cfg = resolve(o);
    if (synth->parsed()) {
      const auto out = sacloc::run_synth(cfg);
      std::printf("%s\n%s\n%s\n", out.inventory.c_str(), out.train.c_str(), out.test.c_str());
    } else if (train->parsed()) {
      const auto out = sacloc::run_train(cfg);
      const double final_mae = out.result.log.empty() ? 0.0 : out.result.log.back().train_mae;
      std::printf("trained on %zu samples, final train MAE %.4f m -> %s\n", out.train_count, final_mae,
                  cfg.checkpoint_path().c_str());
    } else if (calibrate->parsed()) {
      const auto cal = sacloc::run_calibrate(cfg);
      for (std::size_t r = 0; r < cal.radii.size(); ++r) {
        std::printf("region %zu: n=%zu radius=%s\n", r, cal.counts[r], fmt_radius(cal.radii[r]).c_str());
      }
      std::printf("global: n=%zu radius=%s\n", cal.total, fmt_radius(cal.global_radius).c_str());
    } else if (predict->parsed()) {
      const auto rssi = o.rssi_file.empty() ? parse_rssi_list(o.rssi) : read_rssi_file(o.rssi_file);
      const auto out = sacloc::run_predict(cfg, rssi);
      std::printf("%s %s %zu %s\n", sacloc::csv::format_double(out.set.center.x).c_str(),
                  sacloc::csv::format_double(out.set.center.y).c_str(), out.set.region,
                  fmt_radius(out.set.radius).c_str());
    } else if (evaluate->parsed()) {
      const auto report = sacloc::run_evaluate(cfg);
      std::cout << sacloc::format_metrics_table(*report.metrics, report.baseline);
    } else if (sweep->parsed()) {
      sacloc::run_sweep(cfg);
      std::printf("sweep written to %s\n", cfg.sweep_dir().c_str());
    }
  } catch (const sacloc::Error& e) {
    std::fprintf(stderr, "sacloc: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "sacloc: %s\n", e.what());
    return 1;
  }
  return 0;
}
