#include "sacloc/model.hpp"

#include <cmath>
#include <numeric>

#include "sacloc/error.hpp"

namespace sacloc {

namespace {

ad::Parameter glorot(std::string name, std::size_t rows, std::size_t cols, Rng& rng) {
  ad::Parameter p{std::move(name), ad::Tensor(rows, cols), {}};
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (double& v : p.value.data) v = rng.uniform(-limit, limit);
  return p;
}

ad::Parameter zeros(std::string name, std::size_t rows, std::size_t cols) {
  return ad::Parameter{std::move(name), ad::Tensor(rows, cols, 0.0), {}};
}

template <typename Model, typename Visit>
void for_each_parameter(Model& model, Visit&& visit) {
  visit(model.encoders.user_weight);
  visit(model.encoders.user_bias);
  visit(model.encoders.ap_weight);
  visit(model.encoders.ap_bias);
  for (auto& layer : model.layers) {
    for (auto& head : layer.heads) {
      visit(head.root);
      visit(head.message);
      visit(head.query);
      visit(head.key);
    }
    visit(layer.merge);
  }
  visit(model.head_weight);
  visit(model.head_bias);
}

// Pairwise reduction keeps sums of identical power-of-two head counts exact.
ad::Var tree_sum(std::vector<ad::Var> terms) {
  while (terms.size() > 1) {
    std::vector<ad::Var> next;
    for (std::size_t i = 0; i + 1 < terms.size(); i += 2) next.push_back(ad::add(terms[i], terms[i + 1]));
    if (terms.size() % 2 == 1) next.push_back(terms.back());
    terms = std::move(next);
  }
  return terms.front();
}

}  // namespace

void ModelConfig::validate() const {
  if (ap_count == 0) throw Error(ErrorCode::kInvalidArgument, "model needs at least one AP");
  if (hidden == 0 || heads == 0 || layers == 0) {
    throw Error(ErrorCode::kInvalidArgument, "hidden size, heads and layers must be positive");
  }
  if (head_dim == 0 && hidden % heads != 0) {
    throw Error(ErrorCode::kInvalidArgument, "heads (" + std::to_string(heads) + ") must divide hidden (" +
                                                 std::to_string(hidden) + ")");
  }
}

GtModel GtModel::create(const ModelConfig& config, const CoordinateFrame& frame, std::uint64_t seed) {
  config.validate();
  Rng rng(seed, "init");
  const std::size_t h = config.hidden;
  const std::size_t he = config.resolved_head_dim();
  GtModel model;
  model.config = config;
  model.frame = frame;
  model.encoders.user_weight = glorot("encoder.user.weight", config.ap_count, h, rng);
  model.encoders.user_bias = zeros("encoder.user.bias", 1, h);
  model.encoders.ap_weight = glorot("encoder.ap.weight", 2, h, rng);
  model.encoders.ap_bias = zeros("encoder.ap.bias", 1, h);
  for (std::size_t l = 0; l < config.layers; ++l) {
    TransformerConvLayer layer;
    layer.in_dim = h;
    layer.head_dim = he;
    const std::string prefix = "layer" + std::to_string(l + 1);
    for (std::size_t e = 0; e < config.heads; ++e) {
      const std::string hp = prefix + ".head" + std::to_string(e);
      layer.heads.push_back({glorot(hp + ".root", h, he, rng), glorot(hp + ".message", h, he, rng),
                             glorot(hp + ".query", h, he, rng), glorot(hp + ".key", h, he, rng)});
    }
    layer.merge = glorot(prefix + ".merge", he, h, rng);
    model.layers.push_back(std::move(layer));
  }
  model.head_weight = glorot("head.weight", h, 2, rng);
  model.head_bias = zeros("head.bias", 1, 2);
  return model;
}

std::vector<ad::Parameter*> GtModel::parameters() {
  std::vector<ad::Parameter*> out;
  for_each_parameter(*this, [&](ad::Parameter& p) { out.push_back(&p); });
  return out;
}

std::vector<const ad::Parameter*> GtModel::parameters() const {
  std::vector<const ad::Parameter*> out;
  for_each_parameter(*this, [&](const ad::Parameter& p) { out.push_back(&p); });
  return out;
}

std::size_t GtModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

void GtModel::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

EdgeIndex edges_from_adjacency(const BoolMatrix& adjacency) {
  EdgeIndex edges;
  edges.node_count = adjacency.size();
  for (std::size_t i = 0; i < adjacency.size(); ++i) {
    for (std::size_t j = 0; j < adjacency.size(); ++j) {
      if (adjacency(i, j)) {
        edges.dst.push_back(static_cast<std::uint32_t>(i));
        edges.src.push_back(static_cast<std::uint32_t>(j));
      }
    }
  }
  return edges;
}

GraphBatch make_batch(std::span<const LocGraph* const> graphs) {
  if (graphs.empty()) throw Error(ErrorCode::kEmptyBatch, "cannot batch zero graphs");
  GraphBatch batch;
  batch.graphs = graphs.size();
  batch.ap_count = graphs.front()->ap_count();
  const std::size_t b = batch.graphs;
  const std::size_t m = batch.ap_count;
  batch.user_features = ad::Tensor(b, m);
  batch.ap_features = ad::Tensor(b * m, 2);
  batch.edges.node_count = batch.node_count();

  // Local node 0 is the user, local node j+1 is AP j.
  auto global = [b, m](std::size_t g, std::size_t local) -> std::uint32_t {
    return static_cast<std::uint32_t>(local == 0 ? g : b + g * m + (local - 1));
  };
  for (std::size_t g = 0; g < b; ++g) {
    const LocGraph& graph = *graphs[g];
    if (graph.ap_count() != m || graph.user_features.size() != m || graph.adjacency.size() != m + 1) {
      throw Error(ErrorCode::kDimensionMismatch, "graph " + std::to_string(g) + " has " +
                                                     std::to_string(graph.ap_count()) + " APs, expected " +
                                                     std::to_string(m));
    }
    std::copy(graph.user_features.begin(), graph.user_features.end(), batch.user_features.row(g).begin());
    for (std::size_t j = 0; j < m; ++j) {
      batch.ap_features(g * m + j, 0) = graph.ap_features[j].x;
      batch.ap_features(g * m + j, 1) = graph.ap_features[j].y;
    }
    for (std::size_t i = 0; i <= m; ++i) {
      for (std::size_t j = 0; j <= m; ++j) {
        if (graph.adjacency(i, j)) {
          batch.edges.dst.push_back(global(g, i));
          batch.edges.src.push_back(global(g, j));
        }
      }
    }
  }
  return batch;
}

GraphBatch make_batch(std::span<const LocGraph> graphs) {
  std::vector<const LocGraph*> ptrs;
  ptrs.reserve(graphs.size());
  for (const auto& g : graphs) ptrs.push_back(&g);
  return make_batch(ptrs);
}

BoundModel bind(ad::Tape& tape, const GtModel& model, std::span<ad::Tensor* const> grad_sinks) {
  const auto params = model.parameters();
  if (!grad_sinks.empty() && grad_sinks.size() != params.size()) {
    throw Error(ErrorCode::kShapeMismatch, "bind: " + std::to_string(grad_sinks.size()) + " gradient sinks for " +
                                               std::to_string(params.size()) + " parameters");
  }
  std::size_t next = 0;
  auto put = [&]() {
    const ad::Parameter* p = params[next];
    ad::Var v = grad_sinks.empty() ? tape.constant(p->value) : tape.parameter(p->value, grad_sinks[next]);
    ++next;
    return v;
  };
  BoundModel bound;
  bound.user_weight = put();
  bound.user_bias = put();
  bound.ap_weight = put();
  bound.ap_bias = put();
  for (const auto& layer : model.layers) {
    BoundLayer bl;
    bl.head_dim = layer.head_dim;
    for (std::size_t e = 0; e < layer.heads.size(); ++e) {
      std::array<ad::Var, 4> h{};
      for (auto& v : h) v = put();
      bl.heads.push_back(h);
    }
    bl.merge = put();
    bound.layers.push_back(std::move(bl));
  }
  bound.head_weight = put();
  bound.head_bias = put();
  return bound;
}

ad::Var transformer_conv(const BoundLayer& layer, ad::Var x, const EdgeIndex& edges,
                         std::size_t layer_index, std::vector<AttentionTrace>* trace) {
  if (x.rows() != edges.node_count) {
    throw Error(ErrorCode::kShapeMismatch, "transformer_conv: " + std::to_string(x.rows()) +
                                               " feature rows for " + std::to_string(edges.node_count) + " nodes");
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(layer.head_dim));
  std::vector<ad::Var> per_head;
  per_head.reserve(layer.heads.size());
  for (std::size_t e = 0; e < layer.heads.size(); ++e) {
    const auto& [root, message, query, key] = layer.heads[e];
    ad::Var z = ad::matmul(x, root);
    if (edges.size() > 0) {
      ad::Var q = ad::select_rows(ad::matmul(x, query), edges.dst);
      ad::Var k = ad::select_rows(ad::matmul(x, key), edges.src);
      ad::Var beta = ad::segment_softmax(ad::scale(ad::row_dot(q, k), inv_sqrt), edges.dst, edges.node_count);
      if (trace != nullptr) trace->push_back({layer_index, e, beta.value().data});
      ad::Var msg = ad::scale_rows(beta, ad::select_rows(ad::matmul(x, message), edges.src));
      z = ad::add(z, ad::scatter_add_rows(msg, edges.dst, edges.node_count));
    }
    per_head.push_back(z);
  }
  ad::Var avg = ad::scale(tree_sum(std::move(per_head)), 1.0 / static_cast<double>(layer.heads.size()));
  return ad::matmul(avg, layer.merge);
}

ad::Tensor transformer_conv(const TransformerConvLayer& layer, const ad::Tensor& x, const BoolMatrix& adjacency) {
  ad::Tape tape;
  BoundLayer bl;
  bl.head_dim = layer.head_dim;
  for (const auto& h : layer.heads) {
    bl.heads.push_back({tape.constant(h.root.value), tape.constant(h.message.value), tape.constant(h.query.value),
                        tape.constant(h.key.value)});
  }
  bl.merge = tape.constant(layer.merge.value);
  return transformer_conv(bl, tape.constant(x), edges_from_adjacency(adjacency)).value();
}

std::vector<double> attention_coefficients(const TransformerConvLayer& layer, std::size_t head,
                                           const ad::Tensor& x, std::size_t node,
                                           std::span<const std::size_t> neighbors) {
  if (neighbors.empty()) {
    throw Error(ErrorCode::kEmptyNeighborhood, "node " + std::to_string(node) + " has no neighbors");
  }
  const auto& w = layer.heads.at(head);
  const std::size_t in = layer.in_dim;
  const std::size_t he = layer.head_dim;
  auto project = [&](const ad::Tensor& weight, std::size_t row) {
    std::vector<double> out(he, 0.0);
    for (std::size_t c = 0; c < he; ++c) {
      for (std::size_t k = 0; k < in; ++k) out[c] += x(row, k) * weight(k, c);
    }
    return out;
  };
  const auto q = project(w.query.value, node);
  std::vector<double> logits;
  for (std::size_t j : neighbors) {
    const auto k = project(w.key.value, j);
    logits.push_back(std::inner_product(q.begin(), q.end(), k.begin(), 0.0) / std::sqrt(static_cast<double>(he)));
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& l : logits) z += (l = std::exp(l - mx));
  for (double& l : logits) l /= z;
  return logits;
}

ad::Var forward_batch(ad::Tape& tape, const BoundModel& bound, const GtModel& model, const GraphBatch& batch,
                      const ForwardOptions& options) {
  if (batch.ap_count != model.config.ap_count) {
    throw Error(ErrorCode::kDimensionMismatch, "graph has " + std::to_string(batch.ap_count) +
                                                   " APs, model expects " + std::to_string(model.config.ap_count));
  }
  const bool training = options.mode == Mode::kTrain && options.dropout > 0.0;
  if (training && options.rng == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "training-mode dropout needs a random stream");
  }
  ad::Var users = ad::add(ad::matmul(tape.constant(batch.user_features), bound.user_weight), bound.user_bias);
  ad::Var aps = ad::add(ad::matmul(tape.constant(batch.ap_features), bound.ap_weight), bound.ap_bias);
  const std::array<ad::Var, 2> parts{users, aps};
  ad::Var x = ad::concat_rows(parts);
  for (std::size_t l = 0; l < bound.layers.size(); ++l) {
    x = ad::relu(transformer_conv(bound.layers[l], x, batch.edges, l, options.trace));
    if (training) {
      x = ad::mul(x, tape.constant(ad::dropout_mask(x.rows(), x.cols(), options.dropout, *options.rng, true)));
    }
  }
  std::vector<std::uint32_t> user_rows(batch.graphs);
  std::iota(user_rows.begin(), user_rows.end(), 0u);
  ad::Var readout = ad::select_rows(x, user_rows);
  return ad::add(ad::matmul(readout, bound.head_weight), bound.head_bias);
}

Point2 model_forward(const GtModel& model, const LocGraph& graph, Mode mode, Rng* rng, double dropout) {
  if (graph.ap_count() != model.config.ap_count) {
    throw Error(ErrorCode::kDimensionMismatch, "graph has " + std::to_string(graph.ap_count()) +
                                                   " APs, model expects " + std::to_string(model.config.ap_count));
  }
  ad::Tape tape;
  const BoundModel bound = bind(tape, model);
  const LocGraph* one[] = {&graph};
  ForwardOptions options;
  options.mode = mode;
  options.rng = rng;
  options.dropout = mode == Mode::kTrain ? dropout : 0.0;
  const ad::Tensor& out = forward_batch(tape, bound, model, make_batch(one), options).value();
  return {out(0, 0), out(0, 1)};
}

std::vector<Point2> predict_meters(const GtModel& model, std::span<const LocGraph> graphs, std::size_t batch_size) {
  std::vector<Point2> out;
  out.reserve(graphs.size());
  for (std::size_t start = 0; start < graphs.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, graphs.size() - start);
    ad::Tape tape;
    const BoundModel bound = bind(tape, model);
    const GraphBatch batch = make_batch(graphs.subspan(start, n));
    const ad::Tensor& pred = forward_batch(tape, bound, model, batch).value();
    for (std::size_t r = 0; r < n; ++r) out.push_back(model.frame.denormalize({pred(r, 0), pred(r, 1)}));
  }
  return out;
}

double mae_loss(std::span<const Point2> preds, std::span<const Point2> truths) {
  if (preds.empty()) throw Error(ErrorCode::kEmptyBatch, "MAE of an empty batch");
  if (preds.size() != truths.size()) {
    throw Error(ErrorCode::kShapeMismatch, std::to_string(preds.size()) + " predictions vs " +
                                               std::to_string(truths.size()) + " truths");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    s += std::abs(truths[i].x - preds[i].x) + std::abs(truths[i].y - preds[i].y);
  }
  return s / static_cast<double>(preds.size());
}

ad::Var mae_loss(ad::Var pred_normalized, std::span<const Point2> truths, const CoordinateFrame& frame,
                 std::size_t denominator) {
  ad::Tape& tape = *pred_normalized.tape;
  const std::size_t n = pred_normalized.rows();
  if (n == 0) throw Error(ErrorCode::kEmptyBatch, "MAE of an empty batch");
  if (pred_normalized.cols() != 2 || truths.size() != n) {
    throw Error(ErrorCode::kShapeMismatch, "mae_loss: predictions " + pred_normalized.value().shape_string() +
                                               " vs " + std::to_string(truths.size()) + " truths");
  }
  ad::Tensor to_meters(2, 2, 0.0);
  to_meters(0, 0) = frame.span.x;
  to_meters(1, 1) = frame.span.y;
  ad::Tensor origin(1, 2);
  origin(0, 0) = frame.origin.x;
  origin(0, 1) = frame.origin.y;
  ad::Tensor truth(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    truth(i, 0) = truths[i].x;
    truth(i, 1) = truths[i].y;
  }
  ad::Var meters = ad::add(ad::matmul(pred_normalized, tape.constant(to_meters)), tape.constant(origin));
  ad::Var total = ad::abs_sum(ad::sub(meters, tape.constant(std::move(truth))));
  return ad::scale(total, 1.0 / static_cast<double>(denominator == 0 ? n : denominator));
}

}  // namespace sacloc
