#pragma once

#include <cstdint>
#include <vector>

#include "vla/nn/network.hpp"

namespace vla::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators for one Network. Sized lazily on the first step.
struct AdamState {
  AdamConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;
};

// Bias-corrected adaptive-moment update; clears the gradients afterwards.
void adam_step(Network& net, AdamState& state);

}  // namespace vla::nn
