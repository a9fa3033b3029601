#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sacloc/conformal.hpp"
#include "sacloc/dataset.hpp"

namespace sacloc {

// mae_l1 is the mean of |dx| + |dy| (the training objective); the remaining
// statistics are over Euclidean errors. Percentiles interpolate linearly
// between order statistics at position q * (n - 1).
struct PointMetrics {
  std::size_t count = 0;
  double mae_l1 = 0.0;
  double mae_euclid = 0.0;
  double rmse = 0.0;
  double median = 0.0;
  double p75 = 0.0;
  double p95 = 0.0;
};

double percentile(std::span<const double> sorted, double q);
PointMetrics point_metrics(std::span<const Point2> preds, std::span<const Point2> truths);

struct CoverageRow {
  std::size_t region = 0;
  std::size_t count = 0;
  std::size_t covered = 0;
  double radius = 0.0;
  double coverage = 0.0;  // covered / count, 0 for an empty region
};

// Per-region rows use each sample's region radius. `global` uses the single
// global radius for every sample; `pooled` is the region-radius coverage over
// all samples (the sum of the region rows).
struct CoverageReport {
  AssignmentMode mode = AssignmentMode::kMixed;
  std::vector<CoverageRow> regions;
  CoverageRow global;
  CoverageRow pooled;
};

CoverageReport coverage_by_region(std::span<const Point2> preds, std::span<const Point2> truths,
                                  const SacpCalibration& calibration, AssignmentMode mode);

struct SweepResult {
  std::vector<double> alphas;
  std::vector<std::vector<double>> radii;     // [alpha][region]
  std::vector<double> global_radius;          // [alpha]
  std::vector<std::vector<double>> coverage;  // [alpha][region]
  std::vector<double> global_coverage;        // global radius
  std::vector<double> pooled_coverage;        // region radii
};

// Recalibrates at every alpha with the same region model. The grid must be
// strictly increasing inside (0, 1).
SweepResult alpha_sweep(const RegionModel& regions, std::span<const Point2> cal_preds,
                        std::span<const Point2> cal_truths, std::span<const Point2> test_preds,
                        std::span<const Point2> test_truths, std::span<const double> alphas,
                        AssignmentMode mode = AssignmentMode::kMixed);

struct WeightedCentroidConfig {
  double reference_dbm = -30.0;
};

// Sum of w_j * pos_j over detected APs with w_j = 1 / (|rssi_j - ref| + 1);
// the inventory centroid when nothing is detected.
Point2 weighted_centroid_baseline(const FingerprintSample& sample, const ApInventory& inventory,
                                  const WeightedCentroidConfig& cfg = {});

struct ErrorMapPoint {
  Point2 truth;
  double error = 0.0;
  std::size_t region = 0;
};

struct Report {
  std::optional<PointMetrics> metrics;
  std::optional<PointMetrics> baseline;
  std::optional<CoverageReport> coverage;
  std::optional<SweepResult> sweep;
  std::vector<ErrorMapPoint> error_map;
  std::optional<double> alpha;
};

// Writes report.json and report.txt, plus fig_error_map.csv when the error
// map is present and fig_alpha_coverage.csv / fig_alpha_radius.csv when a
// sweep is present. Returns the written paths.
std::vector<std::filesystem::path> emit_report(const Report& report, const std::filesystem::path& dir);

std::string format_metrics_table(const PointMetrics& metrics, const std::optional<PointMetrics>& baseline);

}  // namespace sacloc
