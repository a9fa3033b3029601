#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "sacloc/error.hpp"
#include "sacloc/regions.hpp"
#include "support.hpp"

using namespace sacloc;

namespace {

std::vector<Point2> sorted(std::vector<Point2> v) {
  std::sort(v.begin(), v.end(), [](Point2 a, Point2 b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });
  return v;
}

}  // namespace

TEST_CASE("two symmetric clusters") {
  const std::vector<Point2> pts{{0, 0}, {0, 1}, {10, 0}, {10, 1}};
  const RegionModel m = kmeans_fit(pts, 2, {3});
  const auto c = sorted(m.centroids);
  CHECK(c[0] == Point2{0, 0.5});
  CHECK(c[1] == Point2{10, 0.5});
}

TEST_CASE("k = 1 gives the mean and k = n gives the points") {
  Rng rng(2, "pts");
  std::vector<Point2> pts;
  double sx = 0, sy = 0;
  for (int i = 0; i < 30; ++i) {
    pts.push_back({rng.uniform(0, 50), rng.uniform(0, 20)});
    sx += pts.back().x;
    sy += pts.back().y;
  }
  const RegionModel one = kmeans_fit(pts, 1);
  CHECK(one.centroids[0].x == doctest::Approx(sx / 30).epsilon(1e-12));
  CHECK(one.centroids[0].y == doctest::Approx(sy / 30).epsilon(1e-12));
  const RegionModel all = kmeans_fit(pts, 30);
  CHECK(sorted(all.centroids) == sorted(pts));
  CHECK(all.inertia == 0.0);
}

TEST_CASE("assignment examples") {
  RegionModel m;
  m.centroids = {{0, 0}, {10, 0}, {5, 5}};
  CHECK(assign_region(m, {5, 5}) == 2);
  CHECK(assign_region(m, {5, 0}) == 0);
  CHECK(assign_region(m, {4, 0}) == 0);
  CHECK(assign_region(m, {6, 0}) == 1);
}

TEST_CASE("assignment equals a brute-force argmin") {
  Rng rng(11, "assign");
  RegionModel m;
  for (int i = 0; i < 7; ++i) m.centroids.push_back({rng.uniform(0, 100), rng.uniform(0, 40)});
  for (int i = 0; i < 10000; ++i) {
    const Point2 p{rng.uniform(-10, 110), rng.uniform(-10, 50)};
    std::size_t best = 0;
    double bd = 1e300;
    for (std::size_t c = 0; c < m.centroids.size(); ++c) {
      const double dx = p.x - m.centroids[c].x, dy = p.y - m.centroids[c].y;
      const double d = dx * dx + dy * dy;
      if (d < bd) {
        bd = d;
        best = c;
      }
    }
    REQUIRE(assign_region(m, p) == best);
  }
}

TEST_CASE("objective never increases and the fit is deterministic") {
  Rng rng(4, "lloyd");
  std::vector<Point2> pts;
  for (int i = 0; i < 800; ++i) pts.push_back({rng.uniform(0, 100), rng.uniform(0, 40)});
  const RegionModel a = kmeans_fit(pts, 5, {9});
  const RegionModel b = kmeans_fit(pts, 5, {9});
  CHECK(a.centroids == b.centroids);
  REQUIRE(!a.objective.empty());
  for (std::size_t i = 1; i < a.objective.size(); ++i) CHECK(a.objective[i] <= a.objective[i - 1] + 1e-9);
  std::vector<std::size_t> owned(5, 0);
  for (const auto& p : pts) ++owned[assign_region(a, p)];
  for (auto n : owned) CHECK(n >= 1);
  const auto c = sorted(a.centroids);
  for (std::size_t i = 1; i < c.size(); ++i) CHECK_FALSE(c[i] == c[i - 1]);
}

TEST_CASE("well-separated blobs are recovered exactly") {
  Rng rng(13, "blobs");
  const std::vector<Point2> centers{{0, 0}, {100, 0}, {0, 100}, {100, 100}, {50, 50}};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::vector<Point2> pts;
    std::vector<std::size_t> label;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      for (int i = 0; i < 60; ++i) {
        pts.push_back({centers[c].x + rng.normal(), centers[c].y + rng.normal()});
        label.push_back(c);
      }
    }
    KMeansOptions opt;
    opt.seed = seed;
    opt.restarts = 4;
    const RegionModel m = kmeans_fit(pts, 5, opt);
    std::map<std::size_t, std::set<std::size_t>> found_for_true;
    for (std::size_t i = 0; i < pts.size(); ++i) found_for_true[label[i]].insert(assign_region(m, pts[i]));
    std::set<std::size_t> used;
    for (const auto& [truth, found] : found_for_true) {
      CHECK(found.size() == 1);
      used.insert(*found.begin());
    }
    CHECK(used.size() == 5);
  }
}

TEST_CASE("too few points") {
  const std::vector<Point2> pts{{0, 0}, {1, 1}};
  try {
    kmeans_fit(pts, 3);
    FAIL("expected TooFewPoints");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTooFewPoints);
  }
  const std::vector<Point2> dup{{1, 1}, {1, 1}, {1, 1}};
  CHECK_THROWS_AS(kmeans_fit(dup, 2), Error);
  CHECK_THROWS_AS(kmeans_fit(pts, 0), Error);
}
