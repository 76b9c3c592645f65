#include "cmpnet/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace cmpnet {

AdamState make_adam_state(const std::vector<Parameter<float>>& params) {
  AdamState state;
  for (const Parameter<float>& p : params) {
    state.first_moment.emplace_back(p.value.shape());
    state.second_moment.emplace_back(p.value.shape());
  }
  return state;
}

namespace {
void check_grad(const Parameter<float>& p) {
  if (p.grad.shape() != p.value.shape()) {
    throw std::logic_error("missing gradient for parameter " + p.name);
  }
}
}  // namespace

void sgd_step(std::vector<Parameter<float>>& params, double learning_rate) {
  const auto lr = static_cast<float>(learning_rate);
  for (Parameter<float>& p : params) {
    check_grad(p);
    for (std::size_t i = 0; i < p.value.numel(); ++i) p.value[i] -= lr * p.grad[i];
  }
}

void adam_step(std::vector<Parameter<float>>& params, AdamState& state, const AdamConfig& cfg) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw std::logic_error("optimizer state does not match the parameter list");
  }
  for (const Parameter<float>& p : params) check_grad(p);

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  const auto b1 = static_cast<float>(cfg.beta1);
  const auto b2 = static_cast<float>(cfg.beta2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter<float>& p = params[k];
    Tensor<float>& m = state.first_moment[k];
    Tensor<float>& v = state.second_moment[k];
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const float g = p.grad[i];
      m[i] = b1 * m[i] + (1.0f - b1) * g;
      v[i] = b2 * v[i] + (1.0f - b2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p.value[i] = static_cast<float>(p.value[i] -
                                      cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
  }
}

}  // namespace cmpnet
