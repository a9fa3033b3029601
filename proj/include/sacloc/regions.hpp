#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sacloc/dataset.hpp"

namespace sacloc {

struct KMeansOptions {
  std::uint64_t seed = 0;
  std::size_t max_iterations = 100;
  double tolerance = 1e-6;  // meters; stop when every centroid moves less
  std::size_t restarts = 1; // best-of-n by within-cluster sum of squares
};

struct RegionModel {
  std::vector<Point2> centroids;
  KMeansOptions options;
  double inertia = 0.0;            // within-cluster sum of squares at the end
  std::size_t iterations = 0;
  std::vector<double> objective;   // inertia after each assignment step

  std::size_t k() const { return centroids.size(); }
};

// k-means++ seeding followed by Lloyd iterations. Empty clusters are reseeded
// to the point farthest from its current centroid. Throws TooFewPoints when
// there are fewer distinct points than k.
RegionModel kmeans_fit(std::span<const Point2> points, std::size_t k, const KMeansOptions& options = {});

// Nearest centroid by squared Euclidean distance; ties go to the lowest id.
std::size_t assign_region(const RegionModel& model, Point2 point);

}  // namespace sacloc
