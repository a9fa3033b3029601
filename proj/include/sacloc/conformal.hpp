#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sacloc/dataset.hpp"
#include "sacloc/graph.hpp"
#include "sacloc/model.hpp"
#include "sacloc/regions.hpp"

namespace sacloc {

// How samples are mapped to regions. kMixed assigns calibration samples by
// ground truth and test samples by prediction; the symmetric modes use the
// same coordinate on both sides.
enum class AssignmentMode { kMixed, kGroundTruth, kPredicted };

std::string_view assignment_mode_name(AssignmentMode mode);
AssignmentMode parse_assignment_mode(std::string_view name);

// Region of a (prediction, truth) pair on the calibration or test side.
std::size_t calibration_region(const RegionModel& regions, AssignmentMode mode, Point2 pred, Point2 truth);
std::size_t test_region(const RegionModel& regions, AssignmentMode mode, Point2 pred, Point2 truth);

double nonconformity_score(Point2 pred, Point2 truth);

// Rank p = ceil((1 - alpha)(n + 1)); nullopt when p > n (the radius must be
// infinite). The ceiling tolerates 1e-9 of floating-point excess so that e.g.
// 0.9 * 20 gives 18.
std::optional<std::size_t> conformal_rank(std::size_t n, double alpha);

// p-th smallest score (1-indexed, duplicates kept), or +inf.
double conformal_radius(std::span<const double> scores, double alpha);

struct SacpCalibration {
  double alpha = 0.1;
  AssignmentMode mode = AssignmentMode::kMixed;
  RegionModel regions;
  std::vector<double> radii;        // per region, may be +inf
  std::vector<std::size_t> counts;  // calibration samples per region
  double global_radius = 0.0;
  std::size_t total = 0;
};

struct PredictionSet {
  Point2 center;            // meters
  std::size_t region = 0;
  double radius = 0.0;      // meters, may be +inf

  bool contains(Point2 p) const;
};

// Fits the region model on the calibration ground truth, then computes
// per-region and global radii.
SacpCalibration calibrate(std::span<const Point2> preds, std::span<const Point2> truths, double alpha, std::size_t k,
                          const KMeansOptions& kmeans = {}, AssignmentMode mode = AssignmentMode::kMixed);
// Same, reusing an already fitted region model.
SacpCalibration calibrate_with_regions(const RegionModel& regions, std::span<const Point2> preds,
                                       std::span<const Point2> truths, double alpha,
                                       AssignmentMode mode = AssignmentMode::kMixed);

// Circle around a point estimate (meters), region chosen from the prediction.
PredictionSet make_prediction_set(const SacpCalibration& calibration, Point2 center);
PredictionSet predict_set(const GtModel& model, const SacpCalibration& calibration, const LocGraph& graph);

nlohmann::json calibration_to_json(const SacpCalibration& calibration);
SacpCalibration calibration_from_json(const nlohmann::json& j);
void save_calibration(const std::filesystem::path& path, const SacpCalibration& calibration);
// Throws MissingArtifact when the file does not exist.
SacpCalibration load_calibration(const std::filesystem::path& path);

}  // namespace sacloc
