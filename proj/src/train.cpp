#include "sacloc/train.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include <fmt/format.h>

#include "sacloc/error.hpp"
#include "sacloc/log.hpp"

namespace sacloc {

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0 || workers == 0) {
    throw Error(ErrorCode::kInvalidArgument, "epochs, batch size and workers must be positive");
  }
  if (!(base_lr >= 0.0) || !(min_lr >= 0.0) || min_lr > base_lr) {
    throw Error(ErrorCode::kInvalidArgument, "learning rates must satisfy 0 <= min_lr <= base_lr");
  }
  if (!(weight_decay >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "weight decay must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::kInvalidArgument, "dropout must lie in [0, 1)");
}

namespace {

struct ShardResult {
  std::vector<ad::Tensor> grads;
  double loss = 0.0;
};

// Forward + backward for one shard. Loss is divided by the full batch size so
// shard gradients add up to the batch gradient.
double run_shard(const GtModel& model, std::span<const LocGraph* const> graphs, std::span<const Point2> truths,
                 std::size_t batch_size, double dropout, Rng rng, std::span<ad::Tensor* const> sinks) {
  ad::Tape tape;
  const BoundModel bound = bind(tape, model, sinks);
  ForwardOptions options;
  options.mode = Mode::kTrain;
  options.dropout = dropout;
  options.rng = &rng;
  const GraphBatch batch = make_batch(graphs);
  ad::Var pred = forward_batch(tape, bound, model, batch, options);
  ad::Var loss = mae_loss(pred, truths, model.frame, batch_size);
  tape.backward(loss);
  return loss.value().item();
}

}  // namespace

TrainResult train(GtModel model, std::span<const LocGraph> graphs, std::span<const Point2> truths,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (graphs.empty()) throw Error(ErrorCode::kEmptyInput, "no training samples");
  if (graphs.size() != truths.size()) {
    throw Error(ErrorCode::kShapeMismatch, std::to_string(graphs.size()) + " graphs vs " +
                                               std::to_string(truths.size()) + " truths");
  }
  TrainResult result;
  result.adam.weight_decay = cfg.weight_decay;
  const ad::CosineSchedule schedule{cfg.base_lr, cfg.epochs, cfg.min_lr};
  const Rng shuffle_root(cfg.seed, "shuffle");
  const Rng dropout_root(cfg.seed, "dropout");

  std::vector<std::size_t> order(graphs.size());
  std::vector<const LocGraph*> batch_graphs;
  std::vector<Point2> batch_truths;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = ad::cosine_lr(schedule, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = shuffle_root.fork(epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      batch_graphs.clear();
      batch_truths.clear();
      for (std::size_t i = start; i < start + n; ++i) {
        batch_graphs.push_back(&graphs[order[i]]);
        batch_truths.push_back(truths[order[i]]);
      }
      model.zero_grad();
      auto params = model.parameters();
      const Rng batch_rng = dropout_root.fork(epoch).fork(batch_index);
      const std::size_t shards = std::min(cfg.workers, n);
      double batch_loss = 0.0;
      if (shards == 1) {
        std::vector<ad::Tensor*> sinks;
        for (auto* p : params) sinks.push_back(&p->grad);
        batch_loss = run_shard(model, batch_graphs, batch_truths, n, cfg.dropout, batch_rng, sinks);
      } else {
        std::vector<ShardResult> results(shards);
        std::vector<std::thread> threads;
        const std::size_t per = (n + shards - 1) / shards;
        for (std::size_t w = 0; w < shards; ++w) {
          const std::size_t lo = std::min(n, w * per);
          const std::size_t hi = std::min(n, lo + per);
          if (lo == hi) continue;
          threads.emplace_back([&, w, lo, hi] {
            auto& r = results[w];
            r.grads.resize(params.size());
            std::vector<ad::Tensor*> sinks;
            for (auto& g : r.grads) sinks.push_back(&g);
            r.loss = run_shard(model, std::span(batch_graphs).subspan(lo, hi - lo),
                               std::span(batch_truths).subspan(lo, hi - lo), n, cfg.dropout, batch_rng.fork(w),
                               sinks);
          });
        }
        for (auto& t : threads) t.join();
        // Fixed shard order keeps the reduction deterministic.
        for (const auto& r : results) {
          batch_loss += r.loss;
          for (std::size_t i = 0; i < r.grads.size(); ++i) {
            if (r.grads[i].empty()) continue;
            auto& dst = params[i]->grad.data;
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += r.grads[i].data[j];
          }
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw Error(ErrorCode::kTrainingDiverged, "non-finite loss in epoch " + std::to_string(epoch));
      }
      ad::adam_step(params, result.adam, lr);
      loss_sum += batch_loss * static_cast<double>(n);
    }
    const double epoch_mae = loss_sum / static_cast<double>(order.size());
    result.log.push_back({epoch + 1, lr, epoch_mae});
    log().info("epoch {}/{} lr={:.6g} train_mae={:.4f} m", epoch + 1, cfg.epochs, lr, epoch_mae);
  }
  result.model = std::move(model);
  return result;
}

TrainResult train(GtModel model, std::span<const FingerprintSample> samples, const TrainConfig& cfg,
                  const GraphBuilder& builder) {
  if (samples.empty()) throw Error(ErrorCode::kEmptyInput, "no training samples");
  const auto graphs = builder.build_all(samples);
  std::vector<Point2> truths;
  truths.reserve(samples.size());
  for (const auto& s : samples) truths.push_back(s.truth);
  return train(std::move(model), graphs, truths, cfg);
}

void write_loss_log(const std::filesystem::path& path, std::span<const EpochLog> log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << "epoch,lr,train_mae\n";
  for (const auto& e : log) out << fmt::format("{},{:.10g},{:.10g}\n", e.epoch, e.lr, e.train_mae);
  if (!out) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

}  // namespace sacloc
