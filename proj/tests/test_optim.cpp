#include <doctest.h>

#include <cmath>
#include <numbers>

#include "sacloc/error.hpp"
#include "sacloc/optim.hpp"

using namespace sacloc;
using namespace sacloc::ad;

namespace {

void step_one(Tensor& theta, const Tensor& grad, AdamState& state, double lr) {
  Tensor* params[] = {&theta};
  const Tensor* grads[] = {&grad};
  adam_step(params, grads, state, lr);
}

}  // namespace

TEST_CASE("Adam fixed point with zero gradient and no decay") {
  Tensor theta = Tensor::from_rows({{0.3, -1.2}, {5.0, 0.0}});
  const Tensor before = theta;
  const Tensor zero(2, 2, 0.0);
  AdamState state;
  for (int i = 0; i < 10; ++i) step_one(theta, zero, state, 0.01);
  CHECK(theta == before);
  CHECK(state.step == 10);
}

TEST_CASE("Adam first step moves by lr") {
  Tensor theta = Tensor::scalar(2.0);
  AdamState state;
  step_one(theta, Tensor::scalar(1.0), state, 0.1);
  // m_hat = 1, v_hat = 1, so the step is 0.1 / (1 + 1e-8).
  CHECK(theta.item() == doctest::Approx(2.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
}

TEST_CASE("Adam decoupled decay-only step") {
  Tensor theta = Tensor::scalar(1.0);
  AdamState state;
  state.weight_decay = 1e-4;
  step_one(theta, Tensor::scalar(0.0), state, 0.001);
  CHECK(theta.item() == doctest::Approx(1.0 - 1e-7).epsilon(1e-15));
}

TEST_CASE("Adam matches a scalar reference over several steps") {
  Tensor theta = Tensor::scalar(0.5);
  AdamState state;
  state.weight_decay = 0.01;
  double t = 0.5, m = 0, v = 0;
  const double grads[] = {0.3, -1.0, 2.5, 0.0, -0.7};
  for (int k = 0; k < 5; ++k) {
    const double g = grads[k];
    step_one(theta, Tensor::scalar(g), state, 0.05);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, k + 1));
    const double vh = v / (1 - std::pow(0.999, k + 1));
    t -= 0.05 * (mh / (std::sqrt(vh) + 1e-8) + 0.01 * t);
    CHECK(theta.item() == doctest::Approx(t).epsilon(1e-13));
  }
}

TEST_CASE("Adam zero learning rate leaves parameters bit-unchanged") {
  Tensor theta = Tensor::from_rows({{0.1, 0.2, 0.3}});
  const Tensor before = theta;
  AdamState state;
  state.weight_decay = 0.0;
  step_one(theta, Tensor::from_rows({{1.0, -2.0, 3.0}}), state, 0.0);
  CHECK(theta == before);
}

TEST_CASE("Adam shape checks") {
  Tensor theta(2, 2);
  AdamState state;
  try {
    step_one(theta, Tensor(2, 3), state, 0.1);
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kShapeMismatch);
  }
  CHECK_THROWS_AS(step_one(theta, Tensor(2, 2), state, -1.0), Error);
}

TEST_CASE("Adam over Parameter objects") {
  Parameter p{"w", Tensor::scalar(1.0), Tensor::scalar(1.0)};
  Parameter* ps[] = {&p};
  AdamState state;
  adam_step(ps, state, 0.1);
  CHECK(p.value.item() == doctest::Approx(0.9).epsilon(1e-7));
  p.zero_grad();
  CHECK(p.grad == Tensor::scalar(0.0));
}

TEST_CASE("cosine schedule values") {
  const CosineSchedule s{0.001, 100, 0.0};
  CHECK(cosine_lr(s, 0) == 0.001);
  CHECK(cosine_lr(s, 100) == doctest::Approx(0.0));
  CHECK(std::abs(cosine_lr(s, 100)) < 1e-18);
  CHECK(cosine_lr(s, 50) == doctest::Approx(0.0005).epsilon(1e-15));
  const CosineSchedule floor{0.01, 10, 0.002};
  CHECK(cosine_lr(floor, 5) == doctest::Approx(0.006).epsilon(1e-15));
  CHECK(cosine_lr(floor, 10) == doctest::Approx(0.002).epsilon(1e-15));
  try {
    cosine_lr(s, 101);
    FAIL("expected StepOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kStepOutOfRange);
  }
}

TEST_CASE("cosine schedule is non-increasing") {
  for (std::size_t total : {1u, 7u, 100u}) {
    const CosineSchedule s{0.003, total, 0.0001};
    for (std::size_t k = 1; k <= total; ++k) CHECK(cosine_lr(s, k) <= cosine_lr(s, k - 1));
  }
}

TEST_CASE("dropout masks") {
  Rng rng(1, "drop");
  const Tensor ones = dropout_mask(3, 4, 0.0, rng, true);
  CHECK(ones == Tensor(3, 4, 1.0));
  CHECK(dropout_mask(3, 4, 0.4, rng, false) == Tensor(3, 4, 1.0));
  const Tensor big = dropout_mask(1000, 1000, 0.4, rng, true);
  double total = 0.0;
  std::size_t zeros = 0, bad = 0;
  for (double v : big.data) {
    total += v;
    if (v == 0.0) ++zeros;
    else if (v != 1.0 / 0.6) ++bad;
  }
  CHECK(bad == 0);
  CHECK(std::abs(total / 1e6 - 1.0) < 0.01);
  CHECK(std::abs(static_cast<double>(zeros) / 1e6 - 0.4) < 0.01);
  Rng a(7, "same"), b(7, "same");
  CHECK(dropout_mask(10, 10, 0.5, a, true) == dropout_mask(10, 10, 0.5, b, true));
  CHECK_THROWS_AS(dropout_mask(2, 2, 1.0, rng, true), Error);
}
