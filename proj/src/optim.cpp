#include "sacloc/optim.hpp"

#include <cmath>
#include <numbers>

#include "sacloc/error.hpp"

namespace sacloc::ad {

void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state,
               double lr) {
  if (params.size() != grads.size()) {
    throw Error(ErrorCode::kShapeMismatch, "adam_step: " + std::to_string(params.size()) + " parameters, " +
                                               std::to_string(grads.size()) + " gradients");
  }
  if (!(lr >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "adam_step: learning rate must be >= 0");
  if (state.first_moment.empty()) {
    for (const Tensor* p : params) {
      state.first_moment.emplace_back(p->rows, p->cols, 0.0);
      state.second_moment.emplace_back(p->rows, p->cols, 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw Error(ErrorCode::kShapeMismatch, "adam_step: optimizer state tracks " +
                                               std::to_string(state.first_moment.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*grads[i]) || !params[i]->same_shape(state.first_moment[i])) {
      throw Error(ErrorCode::kShapeMismatch, "adam_step: parameter " + params[i]->shape_string() +
                                                 " vs gradient " + grads[i]->shape_string() + " / state " +
                                                 state.first_moment[i].shape_string());
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& theta = params[i]->data;
    const auto& g = grads[i]->data;
    auto& m = state.first_moment[i].data;
    auto& v = state.second_moment[i].data;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      theta[j] -= lr * (m_hat / (std::sqrt(v_hat) + state.epsilon) + state.weight_decay * theta[j]);
    }
  }
}

void adam_step(std::span<Parameter* const> params, AdamState& state, double lr) {
  std::vector<Tensor*> values;
  std::vector<const Tensor*> grads;
  values.reserve(params.size());
  grads.reserve(params.size());
  for (Parameter* p : params) {
    if (p->grad.empty()) p->zero_grad();
    values.push_back(&p->value);
    grads.push_back(&p->grad);
  }
  adam_step(values, grads, state, lr);
}

double cosine_lr(const CosineSchedule& schedule, std::size_t step) {
  if (schedule.total_steps < 1) throw Error(ErrorCode::kInvalidArgument, "cosine schedule needs total_steps >= 1");
  if (step > schedule.total_steps) {
    throw Error(ErrorCode::kStepOutOfRange, "step " + std::to_string(step) + " exceeds " +
                                                std::to_string(schedule.total_steps));
  }
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(schedule.total_steps);
  return schedule.min_lr + 0.5 * (schedule.base_lr - schedule.min_lr) * (1.0 + std::cos(phase));
}

Tensor dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error(ErrorCode::kInvalidArgument, "dropout rate must lie in [0, 1)");
  Tensor mask(rows, cols, 1.0);
  if (!training || rate == 0.0) return mask;
  const double keep = 1.0 - rate;
  const double scale = 1.0 / keep;
  for (double& v : mask.data) v = rng.uniform() < keep ? scale : 0.0;
  return mask;
}

}  // namespace sacloc::ad
