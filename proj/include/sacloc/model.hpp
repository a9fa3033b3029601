#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "sacloc/autodiff.hpp"
#include "sacloc/dataset.hpp"
#include "sacloc/graph.hpp"
#include "sacloc/optim.hpp"
#include "sacloc/rng.hpp"

namespace sacloc {

struct ModelConfig {
  std::size_t ap_count = 0;
  std::size_t hidden = 500;
  std::size_t heads = 4;
  std::size_t head_dim = 0;  // 0 selects hidden / heads
  std::size_t layers = 2;

  std::size_t resolved_head_dim() const { return head_dim != 0 ? head_dim : hidden / heads; }
  void validate() const;
};

// W1..W4 of one attention head, each in_dim x head_dim (row-vector convention).
struct AttentionHead {
  ad::Parameter root;     // W1, applied to the node itself
  ad::Parameter message;  // W2, applied to neighbors
  ad::Parameter query;    // W3
  ad::Parameter key;      // W4
};

// Heads are averaged, then `merge` (head_dim x in_dim) restores the width.
struct TransformerConvLayer {
  std::size_t in_dim = 0;
  std::size_t head_dim = 0;
  std::vector<AttentionHead> heads;
  ad::Parameter merge;
};

struct NodeEncoders {
  ad::Parameter user_weight;  // m x h
  ad::Parameter user_bias;    // 1 x h
  ad::Parameter ap_weight;    // 2 x h
  ad::Parameter ap_bias;      // 1 x h
};

struct GtModel {
  ModelConfig config;
  CoordinateFrame frame;
  NodeEncoders encoders;
  std::vector<TransformerConvLayer> layers;
  ad::Parameter head_weight;  // h x 2
  ad::Parameter head_bias;    // 1 x 2

  // Glorot-uniform weights, zero biases.
  static GtModel create(const ModelConfig& config, const CoordinateFrame& frame, std::uint64_t seed);

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();
};

// Directed edges: node dst aggregates from node src.
struct EdgeIndex {
  std::vector<std::uint32_t> dst;
  std::vector<std::uint32_t> src;
  std::size_t node_count = 0;

  std::size_t size() const { return dst.size(); }
};

EdgeIndex edges_from_adjacency(const BoolMatrix& adjacency);

// Block-diagonal super-graph of B samples. Node order: the B user nodes
// first, then AP j of graph g at B + g*m + j.
struct GraphBatch {
  std::size_t graphs = 0;
  std::size_t ap_count = 0;
  ad::Tensor user_features;  // B x m
  ad::Tensor ap_features;    // (B*m) x 2
  EdgeIndex edges;

  std::size_t node_count() const { return graphs * (ap_count + 1); }
};

GraphBatch make_batch(std::span<const LocGraph* const> graphs);
GraphBatch make_batch(std::span<const LocGraph> graphs);

enum class Mode { kTrain, kEval };

struct BoundLayer {
  std::vector<std::array<ad::Var, 4>> heads;  // root, message, query, key
  ad::Var merge;
  std::size_t head_dim = 0;
};

struct BoundModel {
  ad::Var user_weight, user_bias, ap_weight, ap_bias;
  std::vector<BoundLayer> layers;
  ad::Var head_weight, head_bias;
};

// Puts every parameter on the tape once. With `grad_sinks` (aligned with
// model.parameters()) the parameters are differentiable leaves; without,
// they are constants.
BoundModel bind(ad::Tape& tape, const GtModel& model, std::span<ad::Tensor* const> grad_sinks = {});

// Attention weights of one layer/head, aligned with the batch edge list.
struct AttentionTrace {
  std::size_t layer = 0;
  std::size_t head = 0;
  std::vector<double> beta;
};

struct ForwardOptions {
  Mode mode = Mode::kEval;
  double dropout = 0.0;
  Rng* rng = nullptr;  // required in training mode with dropout > 0
  std::vector<AttentionTrace>* trace = nullptr;
};

// One TransformerConv layer over an edge list:
//   z_i = mean_e( W1e x_i + sum_j beta_ij W2e x_j ) * merge
//   beta_ij = softmax_j( (x_i W3e) . (x_j W4e) / sqrt(head_dim) )
ad::Var transformer_conv(const BoundLayer& layer, ad::Var x, const EdgeIndex& edges,
                         std::size_t layer_index = 0, std::vector<AttentionTrace>* trace = nullptr);

// Eval-mode convenience over a dense adjacency; no gradients.
ad::Tensor transformer_conv(const TransformerConvLayer& layer, const ad::Tensor& x, const BoolMatrix& adjacency);

// Direct computation of beta_i over the listed neighbors (node features x are
// the layer input, before projection). Throws EmptyNeighborhood.
std::vector<double> attention_coefficients(const TransformerConvLayer& layer, std::size_t head,
                                           const ad::Tensor& x, std::size_t node,
                                           std::span<const std::size_t> neighbors);

// Returns B x 2 normalized coordinates.
ad::Var forward_batch(ad::Tape& tape, const BoundModel& bound, const GtModel& model, const GraphBatch& batch,
                      const ForwardOptions& options = {});

// Normalized (x, y) for one graph. Throws DimensionMismatch if the graph's AP
// count differs from the model's.
Point2 model_forward(const GtModel& model, const LocGraph& graph, Mode mode = Mode::kEval, Rng* rng = nullptr,
                     double dropout = 0.0);

// Eval-mode predictions in meters.
std::vector<Point2> predict_meters(const GtModel& model, std::span<const LocGraph> graphs,
                                   std::size_t batch_size = 256);

// Mean over samples of |dx| + |dy| in meters.
double mae_loss(std::span<const Point2> preds, std::span<const Point2> truths);
// Tape version on normalized predictions; converted to meters through `frame`.
// The sum is divided by `denominator` (0 means the number of rows).
ad::Var mae_loss(ad::Var pred_normalized, std::span<const Point2> truths, const CoordinateFrame& frame,
                 std::size_t denominator = 0);

}  // namespace sacloc
