#include "vla/nn/losses.hpp"

#include <algorithm>
#include <cmath>

#include "vla/errors.hpp"

namespace vla::nn {

double mse_loss(const Tensor& pred, const Tensor& target, Tensor& grad) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse: prediction " + shape_string(pred.shape()) + " vs target " + shape_string(target.shape()));
  }
  const double batch = static_cast<double>(pred.dim(0));
  grad = Tensor(pred.shape());
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    loss += d * d;
    grad[i] = 2.0 * d / batch;
  }
  return loss / batch;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double bce_with_logit(double logit, double target, double& grad) {
  grad = sigmoid(logit) - target;
  // max(x,0) - x*t + log(1 + exp(-|x|))
  return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

double softmax_cross_entropy(std::span<const double> logits, std::size_t target, std::span<double> grad) {
  if (target >= logits.size()) throw ShapeError("softmax target index out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double l : logits) denom += std::exp(l - mx);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    grad[i] = std::exp(logits[i] - mx) / denom - (i == target ? 1.0 : 0.0);
  }
  return -(logits[target] - mx - std::log(denom));
}

}  // namespace vla::nn
