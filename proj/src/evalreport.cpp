#include "sacloc/evalreport.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "sacloc/error.hpp"

namespace sacloc {

namespace {

nlohmann::json number_or_inf(double v) { return std::isinf(v) ? nlohmann::json("inf") : nlohmann::json(v); }

nlohmann::json metrics_json(const PointMetrics& m) {
  return {{"count", m.count},   {"mae_l1", m.mae_l1}, {"mae_euclid", m.mae_euclid}, {"rmse", m.rmse},
          {"median", m.median}, {"p75", m.p75},       {"p95", m.p95}};
}

nlohmann::json row_json(const CoverageRow& r) {
  return {{"count", r.count}, {"covered", r.covered}, {"radius", number_or_inf(r.radius)}, {"coverage", r.coverage}};
}

void finish_row(CoverageRow& row) {
  row.coverage = row.count == 0 ? 0.0 : static_cast<double>(row.covered) / static_cast<double>(row.count);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

std::string fixed(double v) { return std::isinf(v) ? std::string("inf") : fmt::format("{:.6f}", v); }

}  // namespace

double percentile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error(ErrorCode::kEmptyInput, "percentile of an empty set");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

PointMetrics point_metrics(std::span<const Point2> preds, std::span<const Point2> truths) {
  if (preds.empty()) throw Error(ErrorCode::kEmptyInput, "no predictions to score");
  if (preds.size() != truths.size()) {
    throw Error(ErrorCode::kShapeMismatch, std::to_string(preds.size()) + " predictions vs " +
                                               std::to_string(truths.size()) + " truths");
  }
  PointMetrics m;
  m.count = preds.size();
  std::vector<double> errors;
  errors.reserve(preds.size());
  double l1 = 0.0, sq = 0.0, eu = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double dx = preds[i].x - truths[i].x;
    const double dy = preds[i].y - truths[i].y;
    l1 += std::abs(dx) + std::abs(dy);
    const double e = std::sqrt(dx * dx + dy * dy);
    eu += e;
    sq += e * e;
    errors.push_back(e);
  }
  const auto n = static_cast<double>(preds.size());
  m.mae_l1 = l1 / n;
  m.mae_euclid = eu / n;
  m.rmse = std::sqrt(sq / n);
  std::sort(errors.begin(), errors.end());
  m.median = percentile(errors, 0.5);
  m.p75 = percentile(errors, 0.75);
  m.p95 = percentile(errors, 0.95);
  return m;
}

CoverageReport coverage_by_region(std::span<const Point2> preds, std::span<const Point2> truths,
                                  const SacpCalibration& calibration, AssignmentMode mode) {
  if (preds.empty()) throw Error(ErrorCode::kEmptyInput, "no test samples");
  if (preds.size() != truths.size()) {
    throw Error(ErrorCode::kShapeMismatch, std::to_string(preds.size()) + " predictions vs " +
                                               std::to_string(truths.size()) + " truths");
  }
  CoverageReport report;
  report.mode = mode;
  const std::size_t k = calibration.regions.k();
  for (std::size_t r = 0; r < k; ++r) report.regions.push_back({r, 0, 0, calibration.radii[r], 0.0});
  report.global.radius = calibration.global_radius;
  report.global.region = k;
  report.pooled.region = k;
  report.pooled.radius = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const std::size_t r = test_region(calibration.regions, mode, preds[i], truths[i]);
    const double score = nonconformity_score(preds[i], truths[i]);
    auto& row = report.regions[r];
    ++row.count;
    const bool hit = score <= row.radius;
    row.covered += hit;
    ++report.pooled.count;
    report.pooled.covered += hit;
    ++report.global.count;
    report.global.covered += score <= calibration.global_radius;
  }
  for (auto& row : report.regions) finish_row(row);
  finish_row(report.global);
  finish_row(report.pooled);
  return report;
}

SweepResult alpha_sweep(const RegionModel& regions, std::span<const Point2> cal_preds,
                        std::span<const Point2> cal_truths, std::span<const Point2> test_preds,
                        std::span<const Point2> test_truths, std::span<const double> alphas, AssignmentMode mode) {
  if (alphas.empty()) throw Error(ErrorCode::kInvalidArgument, "empty alpha grid");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] > 0.0 && alphas[i] < 1.0) || (i > 0 && !(alphas[i] > alphas[i - 1]))) {
      throw Error(ErrorCode::kInvalidArgument, "alpha grid must be strictly increasing inside (0, 1)");
    }
  }
  SweepResult sweep;
  for (double alpha : alphas) {
    const SacpCalibration cal = calibrate_with_regions(regions, cal_preds, cal_truths, alpha, mode);
    const CoverageReport cov = coverage_by_region(test_preds, test_truths, cal, mode);
    sweep.alphas.push_back(alpha);
    sweep.radii.push_back(cal.radii);
    sweep.global_radius.push_back(cal.global_radius);
    std::vector<double> c;
    for (const auto& row : cov.regions) c.push_back(row.coverage);
    sweep.coverage.push_back(std::move(c));
    sweep.global_coverage.push_back(cov.global.coverage);
    sweep.pooled_coverage.push_back(cov.pooled.coverage);
  }
  return sweep;
}

Point2 weighted_centroid_baseline(const FingerprintSample& sample, const ApInventory& inventory,
                                  const WeightedCentroidConfig& cfg) {
  if (sample.rssi.size() != inventory.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "sample has " + std::to_string(sample.rssi.size()) +
                                                   " RSSI values, inventory has " + std::to_string(inventory.size()));
  }
  double wsum = 0.0;
  Point2 acc;
  for (std::size_t j = 0; j < sample.rssi.size(); ++j) {
    const double v = sample.rssi[j];
    if (!is_detected(v)) continue;
    const double w = 1.0 / (std::abs(v - cfg.reference_dbm) + 1.0);
    acc.x += w * inventory.positions[j].x;
    acc.y += w * inventory.positions[j].y;
    wsum += w;
  }
  if (wsum == 0.0) return inventory.centroid();
  return {acc.x / wsum, acc.y / wsum};
}

std::string format_metrics_table(const PointMetrics& metrics, const std::optional<PointMetrics>& baseline) {
  std::string out = "Localization error (meters); percentiles interpolate linearly between order statistics\n";
  out += fmt::format("{:<20}{:>10}{:>12}{:>10}{:>10}{:>12}{:>12}{:>8}\n", "Method", "MAE (L1)", "MAE (Eucl)",
                     "RMSE", "Median", "75th %ile", "95th %ile", "N");
  auto line = [](const std::string& name, const PointMetrics& m) {
    return fmt::format("{:<20}{:>10.3f}{:>12.3f}{:>10.3f}{:>10.3f}{:>12.3f}{:>12.3f}{:>8}\n", name, m.mae_l1,
                       m.mae_euclid, m.rmse, m.median, m.p75, m.p95, m.count);
  };
  out += line("Graph transformer", metrics);
  if (baseline) out += line("Weighted centroid", *baseline);
  return out;
}

std::vector<std::filesystem::path> emit_report(const Report& report, const std::filesystem::path& dir) {
  if (!report.metrics && !report.coverage && !report.sweep && report.error_map.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "report has no sections");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());

  std::vector<std::filesystem::path> written;
  nlohmann::json j = nlohmann::json::object();
  std::string text;
  j["percentile_convention"] = "linear interpolation at q*(n-1)";
  if (report.alpha) j["alpha"] = *report.alpha;
  if (report.metrics) {
    j["point_metrics"] = metrics_json(*report.metrics);
    text += format_metrics_table(*report.metrics, report.baseline);
  }
  if (report.baseline) j["baseline_metrics"] = metrics_json(*report.baseline);
  if (report.coverage) {
    const auto& cov = *report.coverage;
    nlohmann::json rows = nlohmann::json::array();
    if (!text.empty()) text += '\n';
    text += fmt::format("Coverage by region (test assignment: {})\n", assignment_mode_name(cov.mode));
    text += fmt::format("{:<10}{:>16}{:>14}{:>16}\n", "Region", "# Test Samples", "Radius (m)", "Coverage (%)");
    for (const auto& r : cov.regions) {
      nlohmann::json row = row_json(r);
      row["region"] = r.region;
      rows.push_back(row);
      text += fmt::format("{:<10}{:>16}{:>14}{:>16.1f}\n", fmt::format("R{}", r.region), r.count,
                          std::isinf(r.radius) ? std::string("inf") : fmt::format("{:.2f}", r.radius),
                          100.0 * r.coverage);
    }
    text += fmt::format("{:<10}{:>16}{:>14}{:>16.1f}\n", "Global", cov.global.count,
                        std::isinf(cov.global.radius) ? std::string("inf") : fmt::format("{:.2f}", cov.global.radius),
                        100.0 * cov.global.coverage);
    text += fmt::format("{:<10}{:>16}{:>14}{:>16.1f}\n", "Pooled", cov.pooled.count, "per-region",
                        100.0 * cov.pooled.coverage);
    nlohmann::json pooled = {{"count", cov.pooled.count}, {"covered", cov.pooled.covered},
                             {"coverage", cov.pooled.coverage}};
    j["coverage"] = {{"assignment", assignment_mode_name(cov.mode)},
                     {"regions", rows},
                     {"global", row_json(cov.global)},
                     {"pooled", pooled}};
  }
  if (report.sweep) {
    const auto& s = *report.sweep;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t a = 0; a < s.alphas.size(); ++a) {
      nlohmann::json radii = nlohmann::json::array();
      for (double r : s.radii[a]) radii.push_back(number_or_inf(r));
      rows.push_back({{"alpha", s.alphas[a]},
                      {"radii", radii},
                      {"global_radius", number_or_inf(s.global_radius[a])},
                      {"coverage", s.coverage[a]},
                      {"global_coverage", s.global_coverage[a]},
                      {"pooled_coverage", s.pooled_coverage[a]}});
    }
    j["alpha_sweep"] = rows;

    std::string radius_csv = "alpha,region,radius\n";
    std::string coverage_csv = "alpha,region,coverage\n";
    for (std::size_t a = 0; a < s.alphas.size(); ++a) {
      const std::string alpha = fmt::format("{:.4f}", s.alphas[a]);
      for (std::size_t r = 0; r < s.radii[a].size(); ++r) {
        radius_csv += fmt::format("{},R{},{}\n", alpha, r, fixed(s.radii[a][r]));
        coverage_csv += fmt::format("{},R{},{}\n", alpha, r, fixed(s.coverage[a][r]));
      }
      radius_csv += fmt::format("{},global,{}\n", alpha, fixed(s.global_radius[a]));
      coverage_csv += fmt::format("{},global,{}\n", alpha, fixed(s.global_coverage[a]));
      coverage_csv += fmt::format("{},pooled,{}\n", alpha, fixed(s.pooled_coverage[a]));
    }
    write_file(dir / "fig_alpha_radius.csv", radius_csv);
    write_file(dir / "fig_alpha_coverage.csv", coverage_csv);
    written.push_back(dir / "fig_alpha_radius.csv");
    written.push_back(dir / "fig_alpha_coverage.csv");

    if (!text.empty()) text += '\n';
    text += "Alpha sweep: radius (m) per region and global\n";
    text += fmt::format("{:<8}", "alpha");
    for (std::size_t r = 0; r < s.radii.front().size(); ++r) text += fmt::format("{:>10}", fmt::format("R{}", r));
    text += fmt::format("{:>10}{:>12}{:>12}\n", "global", "cov(glob)", "cov(pool)");
    for (std::size_t a = 0; a < s.alphas.size(); ++a) {
      text += fmt::format("{:<8.3f}", s.alphas[a]);
      for (double r : s.radii[a]) text += fmt::format("{:>10}", std::isinf(r) ? std::string("inf") : fmt::format("{:.2f}", r));
      text += fmt::format("{:>10.2f}{:>12.3f}{:>12.3f}\n", s.global_radius[a], s.global_coverage[a], s.pooled_coverage[a]);
    }
  }
  if (!report.error_map.empty()) {
    std::string csv = "x,y,error_m,region\n";
    for (const auto& p : report.error_map) {
      csv += fmt::format("{:.6f},{:.6f},{:.6f},{}\n", p.truth.x, p.truth.y, p.error, p.region);
    }
    write_file(dir / "fig_error_map.csv", csv);
    written.push_back(dir / "fig_error_map.csv");
  }
  write_file(dir / "report.json", j.dump(2) + "\n");
  write_file(dir / "report.txt", text);
  written.insert(written.begin(), {dir / "report.json", dir / "report.txt"});
  return written;
}

}  // namespace sacloc
