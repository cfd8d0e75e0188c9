#pragma once

#include <span>

#include "vla/nn/tensor.hpp"

namespace vla::nn {

/// Mean over the batch of the squared L2 row error, 1/B * sum_b ||pred_b - target_b||^2.
/// Writes dLoss/dpred into grad (same shape as pred).
double mse_loss(const Tensor& pred, const Tensor& target, Tensor& grad);

double sigmoid(double x);

// Numerically stable binary cross-entropy on a logit; returns loss, sets dloss/dlogit.
double bce_with_logit(double logit, double target, double& grad);

// Softmax cross-entropy over logits for one sample; grad gets dloss/dlogits.
double softmax_cross_entropy(std::span<const double> logits, std::size_t target, std::span<double> grad);

}  // namespace vla::nn
