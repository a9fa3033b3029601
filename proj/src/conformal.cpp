#include "sacloc/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "sacloc/error.hpp"
#include "sacloc/log.hpp"

namespace sacloc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

nlohmann::json radius_json(double r) { return std::isinf(r) ? nlohmann::json("inf") : nlohmann::json(r); }

double radius_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return kInf;
    throw Error(ErrorCode::kConfigError, "radius must be a number or \"inf\"");
  }
  return j.get<double>();
}

void check_pairs(std::span<const Point2> preds, std::span<const Point2> truths) {
  if (preds.empty()) throw Error(ErrorCode::kEmptyCalibration, "calibration set is empty");
  if (preds.size() != truths.size()) {
    throw Error(ErrorCode::kShapeMismatch, std::to_string(preds.size()) + " predictions vs " +
                                               std::to_string(truths.size()) + " truths");
  }
}

}  // namespace

std::string_view assignment_mode_name(AssignmentMode mode) {
  switch (mode) {
    case AssignmentMode::kMixed: return "mixed";
    case AssignmentMode::kGroundTruth: return "ground_truth";
    case AssignmentMode::kPredicted: return "predicted";
  }
  return "mixed";
}

AssignmentMode parse_assignment_mode(std::string_view name) {
  if (name == "mixed") return AssignmentMode::kMixed;
  if (name == "ground_truth") return AssignmentMode::kGroundTruth;
  if (name == "predicted") return AssignmentMode::kPredicted;
  throw Error(ErrorCode::kConfigError, "unknown assignment mode '" + std::string(name) +
                                           "' (expected mixed, ground_truth or predicted)");
}

std::size_t calibration_region(const RegionModel& regions, AssignmentMode mode, Point2 pred, Point2 truth) {
  return assign_region(regions, mode == AssignmentMode::kPredicted ? pred : truth);
}

std::size_t test_region(const RegionModel& regions, AssignmentMode mode, Point2 pred, Point2 truth) {
  return assign_region(regions, mode == AssignmentMode::kGroundTruth ? truth : pred);
}

double nonconformity_score(Point2 pred, Point2 truth) {
  const double dx = pred.x - truth.x;
  const double dy = pred.y - truth.y;
  return std::sqrt(dx * dx + dy * dy);
}

std::optional<std::size_t> conformal_rank(std::size_t n, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must lie in (0, 1)");
  const long double target = (1.0L - static_cast<long double>(alpha)) * static_cast<long double>(n + 1);
  const auto p = static_cast<std::size_t>(std::ceil(target - 1e-9L));
  if (p > n) return std::nullopt;
  return std::max<std::size_t>(p, 1);
}

double conformal_radius(std::span<const double> scores, double alpha) {
  const auto p = conformal_rank(scores.size(), alpha);
  if (!p) return kInf;
  std::vector<double> work(scores.begin(), scores.end());
  auto nth = work.begin() + static_cast<std::ptrdiff_t>(*p - 1);
  std::nth_element(work.begin(), nth, work.end());
  return *nth;
}

bool PredictionSet::contains(Point2 p) const {
  return nonconformity_score(center, p) <= radius;
}

SacpCalibration calibrate_with_regions(const RegionModel& regions, std::span<const Point2> preds,
                                       std::span<const Point2> truths, double alpha, AssignmentMode mode) {
  check_pairs(preds, truths);
  if (regions.k() == 0) throw Error(ErrorCode::kInvalidArgument, "region model has no centroids");
  SacpCalibration cal;
  cal.alpha = alpha;
  cal.mode = mode;
  cal.regions = regions;
  cal.total = preds.size();

  std::vector<std::vector<double>> per_region(regions.k());
  std::vector<double> all;
  all.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double s = nonconformity_score(preds[i], truths[i]);
    per_region[calibration_region(regions, mode, preds[i], truths[i])].push_back(s);
    all.push_back(s);
  }
  for (std::size_t r = 0; r < regions.k(); ++r) {
    cal.counts.push_back(per_region[r].size());
    cal.radii.push_back(conformal_radius(per_region[r], alpha));
    if (std::isinf(cal.radii.back())) {
      log().warn("region {} has only {} calibration samples; radius is infinite at alpha = {}", r,
                 per_region[r].size(), alpha);
    }
  }
  cal.global_radius = conformal_radius(all, alpha);
  return cal;
}

SacpCalibration calibrate(std::span<const Point2> preds, std::span<const Point2> truths, double alpha, std::size_t k,
                          const KMeansOptions& kmeans, AssignmentMode mode) {
  check_pairs(preds, truths);
  const RegionModel regions = kmeans_fit(truths, k, kmeans);
  return calibrate_with_regions(regions, preds, truths, alpha, mode);
}

PredictionSet make_prediction_set(const SacpCalibration& calibration, Point2 center) {
  PredictionSet set;
  set.center = center;
  set.region = assign_region(calibration.regions, center);
  set.radius = calibration.radii.at(set.region);
  return set;
}

PredictionSet predict_set(const GtModel& model, const SacpCalibration& calibration, const LocGraph& graph) {
  return make_prediction_set(calibration, model.frame.denormalize(model_forward(model, graph)));
}

nlohmann::json calibration_to_json(const SacpCalibration& cal) {
  nlohmann::json regions = nlohmann::json::array();
  for (std::size_t r = 0; r < cal.regions.k(); ++r) {
    regions.push_back({{"id", r},
                       {"centroid", {cal.regions.centroids[r].x, cal.regions.centroids[r].y}},
                       {"count", cal.counts[r]},
                       {"radius", radius_json(cal.radii[r])}});
  }
  return {{"format", "sacloc-calibration"},
          {"version", 1},
          {"alpha", cal.alpha},
          {"assignment", assignment_mode_name(cal.mode)},
          {"k", cal.regions.k()},
          {"regions", regions},
          {"global", {{"count", cal.total}, {"radius", radius_json(cal.global_radius)}}},
          {"region_model",
           {{"seed", cal.regions.options.seed},
            {"max_iterations", cal.regions.options.max_iterations},
            {"tolerance", cal.regions.options.tolerance},
            {"restarts", cal.regions.options.restarts},
            {"iterations", cal.regions.iterations},
            {"inertia", cal.regions.inertia}}}};
}

SacpCalibration calibration_from_json(const nlohmann::json& j) {
  try {
    SacpCalibration cal;
    cal.alpha = j.at("alpha").get<double>();
    cal.mode = parse_assignment_mode(j.at("assignment").get<std::string>());
    for (const auto& r : j.at("regions")) {
      cal.regions.centroids.push_back({r.at("centroid")[0].get<double>(), r.at("centroid")[1].get<double>()});
      cal.counts.push_back(r.at("count").get<std::size_t>());
      cal.radii.push_back(radius_from_json(r.at("radius")));
    }
    cal.total = j.at("global").at("count").get<std::size_t>();
    cal.global_radius = radius_from_json(j.at("global").at("radius"));
    const auto& rm = j.at("region_model");
    cal.regions.options.seed = rm.at("seed").get<std::uint64_t>();
    cal.regions.options.max_iterations = rm.at("max_iterations").get<std::size_t>();
    cal.regions.options.tolerance = rm.at("tolerance").get<double>();
    cal.regions.options.restarts = rm.at("restarts").get<std::size_t>();
    cal.regions.iterations = rm.at("iterations").get<std::size_t>();
    cal.regions.inertia = rm.at("inertia").get<double>();
    if (cal.regions.k() == 0) throw Error(ErrorCode::kConfigError, "calibration has no regions");
    return cal;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("malformed calibration: ") + e.what());
  }
}

void save_calibration(const std::filesystem::path& path, const SacpCalibration& calibration) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << calibration_to_json(calibration).dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

SacpCalibration load_calibration(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kMissingArtifact, "calibration file not found: " + path.string());
  }
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  try {
    return calibration_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kConfigError, std::string("calibration is not valid JSON: ") + e.what());
  }
}

}  // namespace sacloc
