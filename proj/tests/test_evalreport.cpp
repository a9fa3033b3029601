#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "sacloc/error.hpp"
#include "sacloc/evalreport.hpp"
#include "support.hpp"

using namespace sacloc;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Pairs {
  std::vector<Point2> preds, truths;
};

Pairs random_pairs(std::size_t n, std::uint64_t seed, double noise = 3.0) {
  Rng rng(seed, "pairs");
  Pairs p;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 t{rng.uniform(0, 100), rng.uniform(0, 40)};
    p.truths.push_back(t);
    p.preds.push_back({t.x + noise * rng.normal(), t.y + noise * rng.normal()});
  }
  return p;
}

// Percentile by the textbook definition: rank h = q (n - 1), interpolate
// between floor(h) and floor(h) + 1.
double brute_percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

TEST_CASE("perfect predictor has zero metrics") {
  const auto p = random_pairs(10, 1);
  const PointMetrics m = point_metrics(p.truths, p.truths);
  CHECK(m.count == 10);
  CHECK(m.mae_l1 == 0.0);
  CHECK(m.mae_euclid == 0.0);
  CHECK(m.rmse == 0.0);
  CHECK(m.median == 0.0);
  CHECK(m.p95 == 0.0);
}

TEST_CASE("interpolated percentiles on errors 3, 4, 5") {
  const std::vector<Point2> preds{{0, 0}, {0, 0}, {0, 0}};
  const std::vector<Point2> truths{{3, 0}, {0, 4}, {3, 4}};
  const PointMetrics m = point_metrics(preds, truths);
  CHECK(m.median == 4.0);
  CHECK(m.p95 == doctest::Approx(4.9).epsilon(1e-15));
  CHECK(m.p75 == 4.5);
  CHECK(m.mae_l1 == doctest::Approx(14.0 / 3.0));
  CHECK(m.mae_euclid == 4.0);
  CHECK(m.rmse == doctest::Approx(std::sqrt(50.0 / 3.0)));
}

TEST_CASE("metrics match a brute-force recomputation") {
  const auto p = random_pairs(1000, 7);
  const PointMetrics m = point_metrics(p.preds, p.truths);
  std::vector<double> e;
  double l1 = 0, sq = 0, eu = 0;
  for (std::size_t i = 0; i < 1000; ++i) {
    const double dx = p.preds[i].x - p.truths[i].x, dy = p.preds[i].y - p.truths[i].y;
    e.push_back(std::hypot(dx, dy));
    l1 += std::abs(dx) + std::abs(dy);
    eu += e.back();
    sq += e.back() * e.back();
  }
  CHECK(std::abs(m.mae_l1 - l1 / 1000) < 1e-9);
  CHECK(std::abs(m.mae_euclid - eu / 1000) < 1e-9);
  CHECK(std::abs(m.rmse - std::sqrt(sq / 1000)) < 1e-9);
  CHECK(std::abs(m.median - brute_percentile(e, 0.5)) < 1e-9);
  CHECK(std::abs(m.p75 - brute_percentile(e, 0.75)) < 1e-9);
  CHECK(std::abs(m.p95 - brute_percentile(e, 0.95)) < 1e-9);
}

TEST_CASE("percentile ordering holds on random inputs") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed, "sizes");
    const auto p = random_pairs(1 + rng.below(50), seed, rng.uniform(0.1, 10));
    const PointMetrics m = point_metrics(p.preds, p.truths);
    CHECK(m.median <= m.p75);
    CHECK(m.p75 <= m.p95);
    CHECK(m.rmse >= 0.0);
  }
  CHECK_THROWS_AS(point_metrics(std::span<const Point2>{}, std::span<const Point2>{}), Error);
}

TEST_CASE("coverage extremes") {
  const auto p = random_pairs(50, 3);
  SacpCalibration cal;
  cal.regions.centroids = {{25, 20}, {75, 20}};
  cal.radii = {kInf, kInf};
  cal.global_radius = kInf;
  const auto all = coverage_by_region(p.preds, p.truths, cal, AssignmentMode::kMixed);
  CHECK(all.global.coverage == 1.0);
  CHECK(all.pooled.coverage == 1.0);
  for (const auto& r : all.regions) {
    if (r.count > 0) CHECK(r.coverage == 1.0);
  }
  cal.radii = {0.0, 0.0};
  cal.global_radius = 0.0;
  const auto none = coverage_by_region(p.preds, p.truths, cal, AssignmentMode::kMixed);
  CHECK(none.global.coverage == 0.0);
  CHECK(none.pooled.coverage == 0.0);
  CHECK_THROWS_AS(coverage_by_region(std::span<const Point2>{}, std::span<const Point2>{}, cal,
                                     AssignmentMode::kMixed),
                  Error);
}

TEST_CASE("grouped coverage agrees with a flat scan") {
  const auto cal_pairs = random_pairs(400, 11);
  const auto test = random_pairs(300, 12);
  for (auto mode : {AssignmentMode::kMixed, AssignmentMode::kGroundTruth, AssignmentMode::kPredicted}) {
    const auto cal = calibrate(cal_pairs.preds, cal_pairs.truths, 0.1, 5, {2}, mode);
    const auto rep = coverage_by_region(test.preds, test.truths, cal, mode);
    std::size_t count = 0, covered = 0, flat_pooled = 0, flat_global = 0;
    for (const auto& r : rep.regions) {
      count += r.count;
      covered += r.covered;
    }
    for (std::size_t i = 0; i < test.preds.size(); ++i) {
      const auto set = make_prediction_set(cal, test.preds[i]);
      const std::size_t region = test_region(cal.regions, mode, test.preds[i], test.truths[i]);
      flat_pooled += nonconformity_score(test.preds[i], test.truths[i]) <= cal.radii[region];
      flat_global += nonconformity_score(test.preds[i], test.truths[i]) <= cal.global_radius;
      if (mode != AssignmentMode::kGroundTruth) CHECK(set.region == region);
    }
    CHECK(count == test.preds.size());
    CHECK(covered == rep.pooled.covered);
    CHECK(covered == flat_pooled);
    CHECK(rep.global.covered == flat_global);
    CHECK(rep.global.count == test.preds.size());
  }
}

TEST_CASE("alpha sweep is monotone and near nominal on exchangeable data") {
  const auto cal_pairs = random_pairs(3000, 21);
  const auto test = random_pairs(3000, 22);
  const RegionModel regions = kmeans_fit(cal_pairs.truths, 5, {1});
  const std::vector<double> grid{0.01, 0.05, 0.10, 0.15, 0.20};
  const auto sweep = alpha_sweep(regions, cal_pairs.preds, cal_pairs.truths, test.preds, test.truths, grid,
                                 AssignmentMode::kGroundTruth);
  REQUIRE(sweep.radii.size() == 5);
  for (std::size_t a = 0; a < grid.size(); ++a) {
    CHECK(std::abs(sweep.global_coverage[a] - (1.0 - grid[a])) <= 0.03);
    if (a > 0) {
      CHECK(sweep.global_radius[a] <= sweep.global_radius[a - 1]);
      for (std::size_t r = 0; r < 5; ++r) CHECK(sweep.radii[a][r] <= sweep.radii[a - 1][r]);
    }
  }
  const std::vector<double> bad{0.2, 0.1};
  CHECK_THROWS_AS(alpha_sweep(regions, cal_pairs.preds, cal_pairs.truths, test.preds, test.truths, bad), Error);
}

TEST_CASE("weighted centroid baseline") {
  ApInventory inv;
  inv.ap_ids = {"a", "b", "c"};
  inv.positions = {{0, 0}, {10, 0}, {5, 9}};
  FingerprintSample s;
  s.rssi = {-60, 100, 100};
  CHECK(weighted_centroid_baseline(s, inv) == Point2{0, 0});
  s.rssi = {-60, -60, 100};
  CHECK(weighted_centroid_baseline(s, inv) == Point2{5, 0});
  s.rssi = {100, 100, 100};
  CHECK(weighted_centroid_baseline(s, inv) == inv.centroid());
  s.rssi = {-30, -39, 100};
  const Point2 p = weighted_centroid_baseline(s, inv);
  CHECK(p.x == doctest::Approx(10.0 * 0.1 / 1.1));
}

TEST_CASE("report files") {
  testing::TempDir dir("report");
  const auto cal_pairs = random_pairs(200, 31);
  const auto test = random_pairs(100, 32);
  const auto cal = calibrate(cal_pairs.preds, cal_pairs.truths, 0.1, 5, {3});
  Report report;
  report.alpha = 0.1;
  report.metrics = point_metrics(test.preds, test.truths);
  report.coverage = coverage_by_region(test.preds, test.truths, cal, cal.mode);
  for (std::size_t i = 0; i < test.preds.size(); ++i) {
    report.error_map.push_back({test.truths[i], nonconformity_score(test.preds[i], test.truths[i]),
                                test_region(cal.regions, cal.mode, test.preds[i], test.truths[i])});
  }
  const std::vector<double> grid{0.01, 0.05, 0.10, 0.15, 0.20};
  report.sweep = alpha_sweep(cal.regions, cal_pairs.preds, cal_pairs.truths, test.preds, test.truths, grid);
  emit_report(report, dir.path());
  for (const char* f : {"report.json", "report.txt", "fig_error_map.csv", "fig_alpha_radius.csv",
                        "fig_alpha_coverage.csv"}) {
    CHECK(std::filesystem::exists(dir / f));
  }
  const auto j = nlohmann::json::parse(testing::read_file(dir / "report.json"));
  CHECK(j.contains("point_metrics"));
  CHECK(j["point_metrics"]["median"].get<double>() == report.metrics->median);
  const std::string radius_csv = testing::read_file(dir / "fig_alpha_radius.csv");
  CHECK(std::count(radius_csv.begin(), radius_csv.end(), '\n') == 1 + 5 * (5 + 1));
  const std::string map_csv = testing::read_file(dir / "fig_error_map.csv");
  CHECK(map_csv.rfind("x,y,error_m,region\n", 0) == 0);
  CHECK(std::count(map_csv.begin(), map_csv.end(), '\n') == 101);

  testing::TempDir again("report");
  emit_report(report, again.path());
  for (const char* f : {"report.json", "report.txt", "fig_error_map.csv", "fig_alpha_radius.csv",
                        "fig_alpha_coverage.csv"}) {
    CHECK(testing::read_file(dir / f) == testing::read_file(again / f));
  }
}

TEST_CASE("metrics-only report") {
  testing::TempDir dir("report");
  const auto p = random_pairs(20, 2);
  Report report;
  report.metrics = point_metrics(p.preds, p.truths);
  emit_report(report, dir.path());
  const auto j = nlohmann::json::parse(testing::read_file(dir / "report.json"));
  CHECK(j.contains("point_metrics"));
  const std::string txt = testing::read_file(dir / "report.txt");
  for (const char* col : {"MAE", "RMSE", "Median", "75th", "95th"}) CHECK(txt.find(col) != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir / "fig_alpha_radius.csv"));
  CHECK_THROWS_AS(emit_report(Report{}, dir.path()), Error);
}
