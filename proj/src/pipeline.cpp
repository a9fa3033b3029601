#include "sacloc/pipeline.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "sacloc/checkpoint.hpp"
#include "sacloc/error.hpp"
#include "sacloc/log.hpp"

namespace sacloc {

namespace {

using Setter = std::function<void(const nlohmann::json&)>;

void apply_section(const nlohmann::json& j, const std::string& section, const std::map<std::string, Setter>& setters) {
  if (!j.is_object()) throw Error(ErrorCode::kConfigError, "'" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) {
      throw Error(ErrorCode::kConfigError, "unknown key '" + (section.empty() ? key : section + "." + key) + "'");
    }
    try {
      it->second(value);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kConfigError, "bad value for '" + (section.empty() ? key : section + "." + key) +
                                               "': " + e.what());
    }
  }
}

template <typename T>
Setter set(T& field) {
  return [&field](const nlohmann::json& v) { field = v.get<T>(); };
}

Setter set_path(std::filesystem::path& field) {
  return [&field](const nlohmann::json& v) { field = v.get<std::string>(); };
}

void require_file(const std::filesystem::path& path, const std::string& what) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::kMissingArtifact, what + " not found: " + path.string());
}

struct LoadedModel {
  Checkpoint checkpoint;
  GraphConfig graph;
  RssiScale rssi;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
};

LoadedModel load_model(const RunConfig& cfg) {
  require_file(cfg.checkpoint_path(), "checkpoint (run `train` first)");
  LoadedModel lm;
  lm.checkpoint = load_checkpoint(cfg.checkpoint_path());
  const auto& meta = lm.checkpoint.metadata;
  try {
    lm.graph.proximity_m = meta.at("graph").at("d_p").get<double>();
    lm.graph.rssi_threshold = meta.at("graph").at("tau").get<double>();
    lm.rssi.floor = meta.at("rssi").at("floor").get<double>();
    lm.rssi.ceiling = meta.at("rssi").at("ceiling").get<double>();
    lm.train_fraction = meta.at("train_fraction").get<double>();
    lm.split_seed = meta.at("split_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kBadCheckpoint, std::string("checkpoint metadata incomplete: ") + e.what());
  }
  if (lm.graph.proximity_m != cfg.graph.proximity_m || lm.graph.rssi_threshold != cfg.graph.rssi_threshold) {
    log().warn("graph settings differ from the checkpoint; using the checkpoint's d_p = {}, tau = {}",
               lm.graph.proximity_m, lm.graph.rssi_threshold);
  }
  return lm;
}

ApInventory load_matching_inventory(const RunConfig& cfg, const LoadedModel& lm) {
  require_file(cfg.inventory_path(), "AP inventory");
  ApInventory inventory = load_inventory(cfg.inventory_path());
  if (inventory.size() != lm.checkpoint.model.config.ap_count) {
    throw Error(ErrorCode::kDimensionMismatch, "inventory has " + std::to_string(inventory.size()) +
                                                   " APs, model was trained on " +
                                                   std::to_string(lm.checkpoint.model.config.ap_count));
  }
  return inventory;
}

std::vector<Point2> truths_of(std::span<const FingerprintSample> samples) {
  std::vector<Point2> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.truth);
  return out;
}

struct CalibrationInputs {
  std::vector<Point2> preds;
  std::vector<Point2> truths;
};

CalibrationInputs calibration_inputs(const RunConfig& cfg, const LoadedModel& lm, const GraphBuilder& builder) {
  require_file(cfg.fingerprints_path(), "fingerprint file");
  const auto samples = load_fingerprints(cfg.fingerprints_path(), builder.inventory());
  const auto [train_set, cal_set] = split_train_calibration(samples, lm.train_fraction, lm.split_seed);
  if (cal_set.empty()) throw Error(ErrorCode::kEmptyCalibration, "calibration split is empty");
  const auto graphs = builder.build_all(cal_set);
  return {predict_meters(lm.checkpoint.model, graphs), truths_of(cal_set)};
}

}  // namespace

std::filesystem::path RunConfig::fingerprints_path() const {
  return fingerprints.empty() ? output_dir / "train.csv" : fingerprints;
}
std::filesystem::path RunConfig::inventory_path() const {
  return inventory.empty() ? output_dir / "inventory.csv" : inventory;
}
std::filesystem::path RunConfig::test_path() const { return test.empty() ? output_dir / "test.csv" : test; }

void RunConfig::validate() const {
  try {
    graph.validate();
    train.validate();
    synth.environment.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfigError, e.what());
  }
  if (!(rssi.floor < rssi.ceiling)) throw Error(ErrorCode::kConfigError, "rssi.floor must be below rssi.ceiling");
  if (model.hidden == 0 || model.heads == 0 || model.layers == 0) {
    throw Error(ErrorCode::kConfigError, "model sizes must be positive");
  }
  if (model.head_dim == 0 && model.hidden % model.heads != 0) {
    throw Error(ErrorCode::kConfigError, "model.heads must divide model.hidden");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::kConfigError, "train.train_fraction must lie in (0, 1)");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::kConfigError, "conformal.alpha must lie in (0, 1)");
  if (regions == 0) throw Error(ErrorCode::kConfigError, "conformal.k must be >= 1");
  for (std::size_t i = 0; i < sweep_alphas.size(); ++i) {
    if (!(sweep_alphas[i] > 0.0 && sweep_alphas[i] < 1.0) || (i > 0 && !(sweep_alphas[i] > sweep_alphas[i - 1]))) {
      throw Error(ErrorCode::kConfigError, "conformal.sweep_alphas must be strictly increasing inside (0, 1)");
    }
  }
}

void apply_config_json(RunConfig& cfg, const nlohmann::json& j) {
  auto& env = cfg.synth.environment;
  apply_section(j, "",
                {{"output_dir", set_path(cfg.output_dir)},
                 {"data",
                  [&](const nlohmann::json& v) {
                    apply_section(v, "data",
                                  {{"fingerprints", set_path(cfg.fingerprints)},
                                   {"inventory", set_path(cfg.inventory)},
                                   {"test", set_path(cfg.test)}});
                  }},
                 {"graph",
                  [&](const nlohmann::json& v) {
                    apply_section(v, "graph",
                                  {{"d_p", set(cfg.graph.proximity_m)}, {"tau", set(cfg.graph.rssi_threshold)}});
                  }},
                 {"rssi",
                  [&](const nlohmann::json& v) {
                    apply_section(v, "rssi", {{"floor", set(cfg.rssi.floor)}, {"ceiling", set(cfg.rssi.ceiling)}});
                  }},
                 {"model",
                  [&](const nlohmann::json& v) {
                    apply_section(v, "model",
                                  {{"hidden", set(cfg.model.hidden)},
                                   {"heads", set(cfg.model.heads)},
                                   {"head_dim", set(cfg.model.head_dim)},
                                   {"layers", set(cfg.model.layers)}});
                  }},
                 {"train",
                  [&](const nlohmann::json& v) {
                    apply_section(v, "train",
                                  {{"epochs", set(cfg.train.epochs)},
                                   {"batch_size", set(cfg.train.batch_size)},
                                   {"lr", set(cfg.train.base_lr)},
                                   {"min_lr", set(cfg.train.min_lr)},
                                   {"weight_decay", set(cfg.train.weight_decay)},
                                   {"dropout", set(cfg.train.dropout)},
                                   {"workers", set(cfg.train.workers)},
                                   {"train_fraction", set(cfg.train_fraction)}});
                  }},
                 {"conformal",
                  [&](const nlohmann::json& v) {
                    apply_section(v, "conformal",
                                  {{"alpha", set(cfg.alpha)},
                                   {"k", set(cfg.regions)},
                                   {"assignment",
                                    [&](const nlohmann::json& a) {
                                      cfg.assignment = parse_assignment_mode(a.get<std::string>());
                                    }},
                                   {"restarts", set(cfg.kmeans.restarts)},
                                   {"max_iterations", set(cfg.kmeans.max_iterations)},
                                   {"tolerance", set(cfg.kmeans.tolerance)},
                                   {"sweep_alphas", set(cfg.sweep_alphas)}});
                  }},
                 {"seeds",
                  [&](const nlohmann::json& v) {
                    apply_section(v, "seeds",
                                  {{"split", set(cfg.seeds.split)},
                                   {"init", set(cfg.seeds.init)},
                                   {"train", set(cfg.seeds.train)},
                                   {"kmeans", set(cfg.seeds.kmeans)},
                                   {"synth", set(cfg.seeds.synth)}});
                  }},
                 {"synth", [&](const nlohmann::json& v) {
                    apply_section(v, "synth",
                                  {{"ap_count", set(env.ap_count)},
                                   {"width", set(env.width)},
                                   {"height", set(env.height)},
                                   {"path_loss_exponent", set(env.path_loss_exponent)},
                                   {"reference_power", set(env.reference_power)},
                                   {"noise_sigma", set(env.noise_sigma)},
                                   {"detection_floor", set(env.detection_floor)},
                                   {"train_samples", set(cfg.synth.train_samples)},
                                   {"test_samples", set(cfg.synth.test_samples)}});
                  }}});
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::kConfigError, "config file not found: " + path.string());
  std::ifstream in(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kConfigError, std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  apply_config_json(cfg, j);
  return cfg;
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  const auto& env = cfg.synth.environment;
  return {{"output_dir", cfg.output_dir.string()},
          {"data",
           {{"fingerprints", cfg.fingerprints.string()},
            {"inventory", cfg.inventory.string()},
            {"test", cfg.test.string()}}},
          {"graph", {{"d_p", cfg.graph.proximity_m}, {"tau", cfg.graph.rssi_threshold}}},
          {"rssi", {{"floor", cfg.rssi.floor}, {"ceiling", cfg.rssi.ceiling}}},
          {"model",
           {{"hidden", cfg.model.hidden},
            {"heads", cfg.model.heads},
            {"head_dim", cfg.model.head_dim},
            {"layers", cfg.model.layers}}},
          {"train",
           {{"epochs", cfg.train.epochs},
            {"batch_size", cfg.train.batch_size},
            {"lr", cfg.train.base_lr},
            {"min_lr", cfg.train.min_lr},
            {"weight_decay", cfg.train.weight_decay},
            {"dropout", cfg.train.dropout},
            {"workers", cfg.train.workers},
            {"train_fraction", cfg.train_fraction}}},
          {"conformal",
           {{"alpha", cfg.alpha},
            {"k", cfg.regions},
            {"assignment", assignment_mode_name(cfg.assignment)},
            {"restarts", cfg.kmeans.restarts},
            {"max_iterations", cfg.kmeans.max_iterations},
            {"tolerance", cfg.kmeans.tolerance},
            {"sweep_alphas", cfg.sweep_alphas}}},
          {"seeds",
           {{"split", cfg.seeds.split},
            {"init", cfg.seeds.init},
            {"train", cfg.seeds.train},
            {"kmeans", cfg.seeds.kmeans},
            {"synth", cfg.seeds.synth}}},
          {"synth",
           {{"ap_count", env.ap_count},
            {"width", env.width},
            {"height", env.height},
            {"path_loss_exponent", env.path_loss_exponent},
            {"reference_power", env.reference_power},
            {"noise_sigma", env.noise_sigma},
            {"detection_floor", env.detection_floor},
            {"train_samples", cfg.synth.train_samples},
            {"test_samples", cfg.synth.test_samples}}}};
}

SynthOutputs run_synth(const RunConfig& cfg) {
  cfg.validate();
  SyntheticConfig env = cfg.synth.environment;
  env.seed = cfg.seeds.synth;
  env.sample_count = cfg.synth.train_samples;
  auto [inventory, train_samples] = generate_synthetic(env);
  env.sample_count = cfg.synth.test_samples;
  const auto test_samples = generate_samples(inventory, env, 1);

  SynthOutputs out{cfg.inventory_path(), cfg.fingerprints_path(), cfg.test_path()};
  write_inventory(out.inventory, inventory);
  write_fingerprints(out.train, inventory, train_samples);
  write_fingerprints(out.test, inventory, test_samples);
  log().info("synthetic dataset: {} APs, {} train, {} test samples in {}", inventory.size(), train_samples.size(),
             test_samples.size(), out.train.parent_path().string());
  return out;
}

TrainOutputs run_train(const RunConfig& cfg) {
  cfg.validate();
  require_file(cfg.inventory_path(), "AP inventory");
  require_file(cfg.fingerprints_path(), "fingerprint file");
  const ApInventory inventory = load_inventory(cfg.inventory_path());
  const auto samples = load_fingerprints(cfg.fingerprints_path(), inventory);
  const auto [train_set, cal_set] = split_train_calibration(samples, cfg.train_fraction, cfg.seeds.split);

  const GraphBuilder builder(inventory, cfg.graph, cfg.rssi);
  ModelConfig mc = cfg.model;
  mc.ap_count = inventory.size();
  GtModel model = GtModel::create(mc, builder.frame(), cfg.seeds.init);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seeds.train;
  log().info("training on {} samples ({} held out for calibration), {} parameters", train_set.size(), cal_set.size(),
             model.parameter_count());

  TrainOutputs out;
  out.result = train(std::move(model), train_set, tc, builder);
  out.train_count = train_set.size();
  out.calibration_count = cal_set.size();

  Checkpoint ckpt;
  ckpt.model = out.result.model;
  ckpt.adam = out.result.adam;
  ckpt.epochs_completed = tc.epochs;
  ckpt.metadata = {{"graph", {{"d_p", cfg.graph.proximity_m}, {"tau", cfg.graph.rssi_threshold}}},
                   {"rssi", {{"floor", cfg.rssi.floor}, {"ceiling", cfg.rssi.ceiling}}},
                   {"train_fraction", cfg.train_fraction},
                   {"split_seed", cfg.seeds.split},
                   {"train_seed", tc.seed},
                   {"init_seed", cfg.seeds.init},
                   {"ap_ids", inventory.ap_ids}};
  std::filesystem::create_directories(cfg.output_dir);
  save_checkpoint(cfg.checkpoint_path(), ckpt);
  write_loss_log(cfg.loss_log_path(), out.result.log);
  return out;
}

SacpCalibration run_calibrate(const RunConfig& cfg) {
  cfg.validate();
  const LoadedModel lm = load_model(cfg);
  const GraphBuilder builder(load_matching_inventory(cfg, lm), lm.graph, lm.rssi);
  const CalibrationInputs cal = calibration_inputs(cfg, lm, builder);
  KMeansOptions km = cfg.kmeans;
  km.seed = cfg.seeds.kmeans;
  const SacpCalibration calibration = calibrate(cal.preds, cal.truths, cfg.alpha, cfg.regions, km, cfg.assignment);
  save_calibration(cfg.calibration_path(), calibration);
  log().info("calibrated {} regions on {} samples; global radius {:.3f} m", calibration.regions.k(),
             calibration.total, calibration.global_radius);
  return calibration;
}

PredictOutput run_predict(const RunConfig& cfg, const std::vector<double>& rssi) {
  const LoadedModel lm = load_model(cfg);
  require_file(cfg.calibration_path(), "calibration file (run `calibrate` first)");
  const SacpCalibration calibration = load_calibration(cfg.calibration_path());
  const GraphBuilder builder(load_matching_inventory(cfg, lm), lm.graph, lm.rssi);
  FingerprintSample sample;
  sample.rssi = rssi;
  for (double v : rssi) {
    if (is_detected(v) && !(v <= 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "RSSI values must be <= 0 dBm or the sentinel 100");
    }
  }
  const LocGraph graph = builder.build(sample);
  PredictOutput out;
  out.no_connected_aps = graph.user_edges().empty();
  if (out.no_connected_aps) log().warn("no_connected_aps: no AP reaches the link threshold; prediction uses the user features alone");
  out.set = predict_set(lm.checkpoint.model, calibration, graph);
  return out;
}

Report run_evaluate(const RunConfig& cfg) {
  cfg.validate();
  const LoadedModel lm = load_model(cfg);
  require_file(cfg.calibration_path(), "calibration file (run `calibrate` first)");
  const SacpCalibration calibration = load_calibration(cfg.calibration_path());
  const ApInventory inventory = load_matching_inventory(cfg, lm);
  const GraphBuilder builder(inventory, lm.graph, lm.rssi);
  require_file(cfg.test_path(), "test file");
  const auto test_samples = load_fingerprints(cfg.test_path(), inventory);
  const auto graphs = builder.build_all(test_samples);
  const auto preds = predict_meters(lm.checkpoint.model, graphs);
  const auto truths = truths_of(test_samples);

  std::vector<Point2> baseline;
  baseline.reserve(test_samples.size());
  for (const auto& s : test_samples) baseline.push_back(weighted_centroid_baseline(s, inventory));

  Report report;
  report.alpha = calibration.alpha;
  report.metrics = point_metrics(preds, truths);
  report.baseline = point_metrics(baseline, truths);
  report.coverage = coverage_by_region(preds, truths, calibration, calibration.mode);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    report.error_map.push_back({truths[i], nonconformity_score(preds[i], truths[i]),
                                test_region(calibration.regions, calibration.mode, preds[i], truths[i])});
  }
  emit_report(report, cfg.output_dir);
  log().info("test median error {:.3f} m (baseline {:.3f} m); coverage {:.1f}% global, {:.1f}% pooled",
             report.metrics->median, report.baseline->median, 100.0 * report.coverage->global.coverage,
             100.0 * report.coverage->pooled.coverage);
  return report;
}

SweepResult run_sweep(const RunConfig& cfg) {
  cfg.validate();
  const LoadedModel lm = load_model(cfg);
  require_file(cfg.calibration_path(), "calibration file (run `calibrate` first)");
  const SacpCalibration calibration = load_calibration(cfg.calibration_path());
  const ApInventory inventory = load_matching_inventory(cfg, lm);
  const GraphBuilder builder(inventory, lm.graph, lm.rssi);
  const CalibrationInputs cal = calibration_inputs(cfg, lm, builder);
  require_file(cfg.test_path(), "test file");
  const auto test_samples = load_fingerprints(cfg.test_path(), inventory);
  const auto test_preds = predict_meters(lm.checkpoint.model, builder.build_all(test_samples));
  const auto test_truths = truths_of(test_samples);

  Report report;
  report.sweep = alpha_sweep(calibration.regions, cal.preds, cal.truths, test_preds, test_truths, cfg.sweep_alphas,
                             calibration.mode);
  emit_report(report, cfg.sweep_dir());
  return *report.sweep;
}

}  // namespace sacloc
