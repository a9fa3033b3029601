#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sacloc/autodiff.hpp"
#include "sacloc/rng.hpp"

namespace sacloc::ad {

// A learnable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad = Tensor(value.rows, value.cols, 0.0); }
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

// Bias-corrected Adam with decoupled weight decay:
//   theta -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
// Moment buffers are created on the first call. lr must be >= 0.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state,
               double lr);
void adam_step(std::span<Parameter* const> params, AdamState& state, double lr);

struct CosineSchedule {
  double base_lr = 1e-3;
  std::size_t total_steps = 1;
  double min_lr = 0.0;
};

// min_lr + (base_lr - min_lr) * (1 + cos(pi * step / total_steps)) / 2.
// Throws StepOutOfRange when step > total_steps.
double cosine_lr(const CosineSchedule& schedule, std::size_t step);

// Inverted dropout: entries are 1/(1-rate) with probability 1-rate, else 0.
// Outside training the mask is all ones.
Tensor dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng, bool training);

}  // namespace sacloc::ad
