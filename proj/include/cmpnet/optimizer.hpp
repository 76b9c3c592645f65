#pragma once

#include <cstdint>
#include <vector>

#include "cmpnet/autodiff.hpp"

namespace cmpnet {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Per-parameter first/second moments, aligned with the parameter list.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor<float>> first_moment;
  std::vector<Tensor<float>> second_moment;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Zero moments shaped like `params`.
AdamState make_adam_state(const std::vector<Parameter<float>>& params);

/// w <- w - lr * grad.
void sgd_step(std::vector<Parameter<float>>& params, double learning_rate);

/// Bias-corrected Adam:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   w <- w - lr * m_hat / (sqrt(v_hat) + eps),
/// with m_hat = m/(1-b1^t), v_hat = v/(1-b2^t) and t incremented first.
void adam_step(std::vector<Parameter<float>>& params, AdamState& state, const AdamConfig& cfg);

}  // namespace cmpnet
