#include "vla/nn/adam.hpp"

#include <cmath>

#include "vla/errors.hpp"

namespace vla::nn {

void adam_step(Network& net, AdamState& state) {
  auto params = net.parameters();
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.value->shape(), 0.0);
      state.second_moment.emplace_back(p.value->shape(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("optimizer state tracks " + std::to_string(state.first_moment.size()) +
                     " tensors, network has " + std::to_string(params.size()));
  }
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& value = *params[i].value;
    Tensor& grad = *params[i].grad;
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    if (m.shape() != value.shape()) throw ShapeError("optimizer moment shape mismatch at tensor " + std::to_string(i));
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad[k];
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      value[k] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
    grad.fill(0.0);
  }
}

}  // namespace vla::nn
