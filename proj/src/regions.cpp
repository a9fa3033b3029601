#include "sacloc/regions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "sacloc/error.hpp"
#include "sacloc/rng.hpp"

namespace sacloc {

namespace {

double squared_distance(Point2 a, Point2 b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

std::size_t nearest(std::span<const Point2> centroids, Point2 p) {
  std::size_t best = 0;
  double best_d = squared_distance(centroids[0], p);
  for (std::size_t c = 1; c < centroids.size(); ++c) {
    const double d = squared_distance(centroids[c], p);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<Point2> seed_plus_plus(std::span<const Point2> points, std::size_t k, Rng& rng) {
  std::vector<Point2> centroids;
  centroids.push_back(points[rng.below(points.size())]);
  std::vector<double> d2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) d2[i] = squared_distance(points[i], centroids[0]);
  while (centroids.size() < k) {
    double total = 0.0;
    for (double d : d2) total += d;
    const double target = rng.uniform() * total;
    double acc = 0.0;
    std::size_t pick = points.size() - 1;
    for (std::size_t i = 0; i < points.size(); ++i) {
      acc += d2[i];
      if (acc > target && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    // Guard against rounding landing on an already chosen point.
    if (d2[pick] == 0.0) {
      pick = static_cast<std::size_t>(std::max_element(d2.begin(), d2.end()) - d2.begin());
    }
    centroids.push_back(points[pick]);
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::min(d2[i], squared_distance(points[i], centroids.back()));
    }
  }
  return centroids;
}

RegionModel lloyd(std::span<const Point2> points, std::size_t k, const KMeansOptions& options, Rng rng) {
  RegionModel model;
  model.options = options;
  model.centroids = seed_plus_plus(points, k, rng);
  std::vector<std::size_t> label(points.size());
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      label[i] = nearest(model.centroids, points[i]);
      inertia += squared_distance(points[i], model.centroids[label[i]]);
    }
    model.objective.push_back(inertia);

    std::vector<Point2> sums(k);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      sums[label[i]].x += points[i].x;
      sums[label[i]].y += points[i].y;
      ++counts[label[i]];
    }
    std::vector<Point2> next(k);
    std::vector<bool> taken(points.size(), false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        next[c] = {sums[c].x / static_cast<double>(counts[c]), sums[c].y / static_cast<double>(counts[c])};
        continue;
      }
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        const double d = squared_distance(points[i], model.centroids[label[i]]);
        if (!taken[i] && d > far_d) {
          far_d = d;
          far = i;
        }
      }
      taken[far] = true;
      next[c] = points[far];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) shift = std::max(shift, std::sqrt(squared_distance(next[c], model.centroids[c])));
    model.centroids = std::move(next);
    model.iterations = it + 1;
    if (shift < options.tolerance) break;
  }
  model.inertia = 0.0;
  for (const auto& p : points) model.inertia += squared_distance(p, model.centroids[nearest(model.centroids, p)]);
  return model;
}

}  // namespace

RegionModel kmeans_fit(std::span<const Point2> points, std::size_t k, const KMeansOptions& options) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be at least 1");
  if (points.size() < k) {
    throw Error(ErrorCode::kTooFewPoints, std::to_string(points.size()) + " points for k = " + std::to_string(k));
  }
  std::set<std::pair<double, double>> distinct;
  for (const auto& p : points) {
    distinct.emplace(p.x, p.y);
    if (distinct.size() >= k) break;
  }
  if (distinct.size() < k) {
    throw Error(ErrorCode::kTooFewPoints, "fewer than " + std::to_string(k) + " distinct points");
  }
  const Rng root(options.seed, "kmeans");
  RegionModel best;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, options.restarts); ++r) {
    RegionModel candidate = lloyd(points, k, options, root.fork(r));
    if (r == 0 || candidate.inertia < best.inertia) best = std::move(candidate);
  }
  return best;
}

std::size_t assign_region(const RegionModel& model, Point2 point) {
  return nearest(model.centroids, point);
}

}  // namespace sacloc
