#include "sacloc/graph.hpp"

#include <cmath>
#include <fstream>

#include "sacloc/error.hpp"

namespace sacloc {

void GraphConfig::validate() const {
  if (!(proximity_m > 0.0)) throw Error(ErrorCode::kInvalidArgument, "AP proximity threshold must be > 0");
  if (!(rssi_threshold <= 0.0)) throw Error(ErrorCode::kInvalidArgument, "RSSI threshold must be <= 0 dBm");
}

std::size_t BoolMatrix::count() const {
  std::size_t c = 0;
  for (auto b : bits_) c += b;
  return c;
}

std::vector<std::size_t> LocGraph::user_edges() const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < ap_count(); ++j) {
    if (adjacency(kUserIndex, ap_node(j))) out.push_back(j);
  }
  return out;
}

BoolMatrix build_ap_adjacency(const ApInventory& inventory, const GraphConfig& cfg) {
  cfg.validate();
  const std::size_t m = inventory.size();
  BoolMatrix adj(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const auto& a = inventory.positions[i];
      const auto& b = inventory.positions[j];
      if (std::hypot(a.x - b.x, a.y - b.y) <= cfg.proximity_m) {
        adj.set(i, j);
        adj.set(j, i);
      }
    }
  }
  return adj;
}

namespace {

LocGraph assemble(const FingerprintSample& sample, const BoolMatrix& ap_adjacency, const GraphConfig& cfg,
                  const RssiScale& scale, std::vector<Point2> ap_features) {
  const std::size_t m = ap_features.size();
  if (sample.rssi.size() != m) {
    throw Error(ErrorCode::kDimensionMismatch, "sample has " + std::to_string(sample.rssi.size()) +
                                                   " RSSI values, inventory has " + std::to_string(m));
  }
  if (ap_adjacency.size() != m) {
    throw Error(ErrorCode::kDimensionMismatch, "AP adjacency is " + std::to_string(ap_adjacency.size()) +
                                                   " wide, inventory has " + std::to_string(m));
  }
  LocGraph g;
  g.adjacency = BoolMatrix(m + 1);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (ap_adjacency(i, j)) g.adjacency.set(LocGraph::ap_node(i), LocGraph::ap_node(j));
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    // The sentinel must be screened out before the threshold test: 100 >= tau always holds.
    const double v = sample.rssi[j];
    if (is_detected(v) && v >= cfg.rssi_threshold) g.adjacency.set(LocGraph::kUserIndex, LocGraph::ap_node(j));
  }
  g.user_features = normalize_rssi(sample.rssi, scale);
  g.ap_features = std::move(ap_features);
  return g;
}

std::vector<Point2> normalized_positions(const ApInventory& inventory, const CoordinateFrame& frame) {
  std::vector<Point2> out;
  out.reserve(inventory.size());
  for (const auto& p : inventory.positions) out.push_back(frame.normalize(p));
  return out;
}

}  // namespace

LocGraph build_sample_graph(const FingerprintSample& sample, const ApInventory& inventory,
                            const BoolMatrix& ap_adjacency, const GraphConfig& cfg, const RssiScale& scale) {
  return assemble(sample, ap_adjacency, cfg, scale,
                  normalized_positions(inventory, CoordinateFrame::from_inventory(inventory)));
}

GraphBuilder::GraphBuilder(ApInventory inventory, GraphConfig cfg, RssiScale scale)
    : inventory_(std::move(inventory)),
      cfg_(cfg),
      scale_(scale),
      ap_adjacency_(build_ap_adjacency(inventory_, cfg_)),
      frame_(CoordinateFrame::from_inventory(inventory_)),
      ap_features_(normalized_positions(inventory_, frame_)) {}

LocGraph GraphBuilder::build(const FingerprintSample& sample) const {
  return assemble(sample, ap_adjacency_, cfg_, scale_, ap_features_);
}

std::vector<LocGraph> GraphBuilder::build_all(std::span<const FingerprintSample> samples) const {
  std::vector<LocGraph> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(build(s));
  return out;
}

void write_edge_list(const std::filesystem::path& path, const LocGraph& graph) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << "src,dst\n";
  const std::size_t n = graph.node_count();
  for (std::size_t dst = 0; dst < n; ++dst) {
    for (std::size_t src = 0; src < n; ++src) {
      if (graph.adjacency(dst, src)) out << src << ',' << dst << '\n';
    }
  }
}

}  // namespace sacloc
