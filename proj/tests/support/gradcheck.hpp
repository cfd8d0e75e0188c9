#pragma once

// Central-difference gradient oracle shared by the unit and acceptance suites.
// It only ever calls predict(), so it never shares a code path with backward().

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "vla/nn/network.hpp"

namespace vla::oracle {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

// Checks one scalar function f at a coordinate reached through `slot`.
// A central difference at step h is compared with one at h/2; for a smooth
// function they agree to O(h^2). A ReLU or max-pool switch inside the stencil
// breaks that agreement, and such coordinates are counted as kinks and skipped.
inline void check_coordinate(double& slot, double analytic, const std::function<double()>& f, double step,
                             GradCheckResult& out) {
  const double orig = slot;
  auto central = [&](double h) {
    slot = orig + h;
    const double fp = f();
    slot = orig - h;
    const double fm = f();
    slot = orig;
    return (fp - fm) / (2.0 * h);
  };
  const double coarse = central(step);
  const double fine = central(step / 2.0);
  if (std::abs(coarse - fine) > 1e-5 * std::max({std::abs(coarse), std::abs(fine), 1e-2})) {
    ++out.skipped_kinks;
    return;
  }
  out.max_rel_error = std::max(out.max_rel_error, relative_error(analytic, coarse));
  ++out.checked;
}

// Loss = sum(output * projection); checks parameter and input gradients of
// Network::backward against central differences.
inline GradCheckResult check_network_gradients(nn::Network& net, nn::Tensor input, std::mt19937_64& rng,
                                               double step = 1e-4, std::size_t max_coords_per_tensor = 40) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const nn::Tensor out = net.forward(input);
  nn::Tensor projection(out.shape());
  for (auto& v : projection.values()) v = normal(rng);

  net.zero_grad();
  net.forward(input);
  const nn::Tensor input_grad = net.backward(projection);

  auto loss = [&]() {
    const nn::Tensor y = net.predict(input);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * projection[i];
    return s;
  };

  GradCheckResult result;
  for (auto& p : net.parameters()) {
    const std::size_t n = p.value->size();
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    const std::size_t count = std::min(n, max_coords_per_tensor);
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t k = n <= max_coords_per_tensor ? c : pick(rng);
      check_coordinate((*p.value)[k], (*p.grad)[k], loss, step, result);
    }
  }
  {
    std::uniform_int_distribution<std::size_t> pick(0, input.size() - 1);
    const std::size_t count = std::min(input.size(), max_coords_per_tensor);
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t k = input.size() <= max_coords_per_tensor ? c : pick(rng);
      check_coordinate(input[k], input_grad[k], loss, step, result);
    }
  }
  net.zero_grad();
  return result;
}

}  // namespace vla::oracle
