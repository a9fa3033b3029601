#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "sacloc/autodiff.hpp"
#include "sacloc/dataset.hpp"
#include "sacloc/graph.hpp"
#include "sacloc/model.hpp"
#include "sacloc/rng.hpp"

namespace sacloc::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("sacloc_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline ad::Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  ad::Tensor t(rows, cols);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Small inventory on a line-ish layout plus one random sample, for model tests.
struct ToyProblem {
  ApInventory inventory;
  GraphConfig graph_cfg;
  std::vector<FingerprintSample> samples;
};

inline ToyProblem toy_problem(std::size_t ap_count, std::size_t sample_count, std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.ap_count = ap_count;
  cfg.width = 30.0;
  cfg.height = 12.0;
  cfg.sample_count = sample_count;
  cfg.seed = seed;
  auto [inventory, samples] = generate_synthetic(cfg);
  ToyProblem p;
  p.inventory = std::move(inventory);
  p.samples = std::move(samples);
  p.graph_cfg.proximity_m = 15.0;
  p.graph_cfg.rssi_threshold = -80.0;
  return p;
}

// Max over entries of |a - n| / max(|a|, |n|, floor).
inline double max_relative_error(const ad::Tensor& analytic, const ad::Tensor& numeric, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data[i];
    const double n = numeric.data[i];
    const double denom = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

// Central differences of f with respect to every entry of *x (restored afterwards).
inline ad::Tensor numeric_gradient(ad::Tensor* x, const std::function<double()>& f, double step = 1e-5) {
  ad::Tensor g(x->rows, x->cols);
  for (std::size_t i = 0; i < x->size(); ++i) {
    const double saved = x->data[i];
    x->data[i] = saved + step;
    const double up = f();
    x->data[i] = saved - step;
    const double down = f();
    x->data[i] = saved;
    g.data[i] = (up - down) / (2.0 * step);
  }
  return g;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
};

// Full-model gradient check of loss = sum(pred^2) + MAE(pred) on one batch.
// With dropout > 0 the mask stream is re-created for every evaluation so the
// function stays fixed.
inline GradCheckResult model_gradient_check(GtModel& model, std::span<const LocGraph> graphs,
                                            std::span<const Point2> truths, double dropout, std::uint64_t seed) {
  const GraphBatch batch = make_batch(graphs);
  const Mode mode = dropout > 0.0 ? Mode::kTrain : Mode::kEval;
  auto loss_on = [&](ad::Tape& tape, const BoundModel& bound) {
    Rng rng(seed, "gradcheck");
    ForwardOptions opt{mode, dropout, &rng, nullptr};
    const ad::Var pred = forward_batch(tape, bound, model, batch, opt);
    return ad::add(ad::sum(ad::mul(pred, pred)), mae_loss(pred, truths, model.frame));
  };
  model.zero_grad();
  const auto params = model.parameters();
  std::vector<ad::Tensor*> sinks;
  for (auto* p : params) sinks.push_back(&p->grad);
  {
    ad::Tape tape;
    const BoundModel bound = sacloc::bind(tape, model, sinks);
    tape.backward(loss_on(tape, bound));
  }
  auto value = [&] {
    ad::Tape tape;
    const BoundModel bound = sacloc::bind(tape, model);
    return loss_on(tape, bound).value().item();
  };
  GradCheckResult result;
  for (auto* p : params) {
    const ad::Tensor numeric = numeric_gradient(&p->value, value);
    result.max_rel_error = std::max(result.max_rel_error, max_relative_error(p->grad, numeric));
    result.entries += p->value.size();
  }
  return result;
}

}  // namespace sacloc::testing
