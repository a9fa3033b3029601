#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sacloc/dataset.hpp"

namespace sacloc {

struct GraphConfig {
  double proximity_m = 20.0;       // AP-AP link when distance <= this
  double rssi_threshold = -75.0;   // user-AP link when a detected RSSI >= this

  void validate() const;
};

// Dense square boolean matrix, row-major.
class BoolMatrix {
 public:
  BoolMatrix() = default;
  explicit BoolMatrix(std::size_t n) : n_(n), bits_(n * n, 0) {}

  std::size_t size() const { return n_; }
  bool operator()(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool value = true) { bits_[i * n_ + j] = value ? 1 : 0; }
  std::size_t count() const;

  friend bool operator==(const BoolMatrix&, const BoolMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Node 0 is the user; AP j (0-based in the inventory) is node j + 1.
// adjacency(i, j) = 1 means node i aggregates from node j. The user row holds
// physical links; the user column is always zero.
struct LocGraph {
  static constexpr std::size_t kUserIndex = 0;

  BoolMatrix adjacency;
  std::vector<double> user_features;  // normalized RSSI, length m
  std::vector<Point2> ap_features;    // normalized AP coordinates, length m

  std::size_t ap_count() const { return ap_features.size(); }
  std::size_t node_count() const { return ap_features.size() + 1; }
  static std::size_t ap_node(std::size_t ap) { return ap + 1; }

  // Inventory indices of APs linked to the user.
  std::vector<std::size_t> user_edges() const;
};

BoolMatrix build_ap_adjacency(const ApInventory& inventory, const GraphConfig& cfg);

LocGraph build_sample_graph(const FingerprintSample& sample, const ApInventory& inventory,
                            const BoolMatrix& ap_adjacency, const GraphConfig& cfg,
                            const RssiScale& scale = {});

// Caches the AP block and coordinate frame for one inventory.
class GraphBuilder {
 public:
  GraphBuilder(ApInventory inventory, GraphConfig cfg, RssiScale scale = {});

  LocGraph build(const FingerprintSample& sample) const;
  std::vector<LocGraph> build_all(std::span<const FingerprintSample> samples) const;

  const ApInventory& inventory() const { return inventory_; }
  const BoolMatrix& ap_adjacency() const { return ap_adjacency_; }
  const CoordinateFrame& frame() const { return frame_; }
  const GraphConfig& config() const { return cfg_; }

 private:
  ApInventory inventory_;
  GraphConfig cfg_;
  RssiScale scale_;
  BoolMatrix ap_adjacency_;
  CoordinateFrame frame_;
  std::vector<Point2> ap_features_;
};

// Debug dump: one "src,dst" line per directed edge (message flows src -> dst).
void write_edge_list(const std::filesystem::path& path, const LocGraph& graph);

}  // namespace sacloc
