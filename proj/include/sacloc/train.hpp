#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sacloc/graph.hpp"
#include "sacloc/model.hpp"
#include "sacloc/optim.hpp"

namespace sacloc {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double base_lr = 1e-3;
  double min_lr = 0.0;
  double weight_decay = 1e-4;
  double dropout = 0.4;
  std::uint64_t seed = 0;
  // Shards each mini-batch across this many tapes. Results are reproducible
  // for a fixed worker count but differ in the last bits between counts.
  std::size_t workers = 1;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_mae = 0.0;  // meters, averaged over the epoch's samples in training mode
};

struct TrainResult {
  GtModel model;
  ad::AdamState adam;
  std::vector<EpochLog> log;
};

// Mini-batch Adam on the meter-space MAE, learning rate annealed per epoch
// with a cosine schedule down to min_lr. Throws TrainingDiverged on a
// non-finite loss.
TrainResult train(GtModel model, std::span<const LocGraph> graphs, std::span<const Point2> truths,
                  const TrainConfig& cfg);
TrainResult train(GtModel model, std::span<const FingerprintSample> samples, const TrainConfig& cfg,
                  const GraphBuilder& builder);

// Plain text, header "epoch,lr,train_mae".
void write_loss_log(const std::filesystem::path& path, std::span<const EpochLog> log);

}  // namespace sacloc
