#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "vla/nn/tensor.hpp"

namespace vla::nn {

enum class LayerKind { Dense, Conv2D, MaxPool2x2, ReLU, Tanh, Flatten };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

/// One layer descriptor plus its parameters. Dense weights are [out, in];
/// Conv2D weights are [out_ch, in_ch, 3, 3] with stride 1 and padding 1.
/// Parameter-free layers leave all tensors empty.
struct Layer {
  LayerKind kind = LayerKind::ReLU;
  std::size_t in = 0;   // features (Dense) or channels (Conv2D)
  std::size_t out = 0;
  Tensor weight;
  Tensor bias;
  Tensor grad_weight;
  Tensor grad_bias;

  bool has_parameters() const noexcept { return kind == LayerKind::Dense || kind == LayerKind::Conv2D; }
};

Layer dense(std::size_t in, std::size_t out);
Layer conv2d(std::size_t in_channels, std::size_t out_channels);
Layer max_pool();
Layer relu();
Layer tanh_layer();
Layer flatten();

struct ParamView {
  Tensor* value;
  Tensor* grad;
};

/// Feed-forward stack with reverse-mode gradients.
///
/// forward() caches what backward() needs; predict() is the cache-free
/// inference path and is safe to call concurrently on a shared network.
/// Neither touches parameters. backward() accumulates into the gradient
/// tensors, which adam_step() (or zero_grad()) clears.
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<Layer> layers);

  // Glorot-uniform weights, zero biases.
  void initialize(std::mt19937_64& rng);

  Tensor forward(const Tensor& x);
  Tensor predict(const Tensor& x) const;
  Tensor backward(const Tensor& upstream);

  void zero_grad();
  std::vector<ParamView> parameters();
  std::vector<double> flat_parameters() const;
  std::size_t parameter_count() const;

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }
  bool empty() const noexcept { return layers_.empty(); }

 private:
  struct Cache {
    std::vector<Tensor> inputs;  // per-layer input
    std::vector<Tensor> aux;     // im2col columns (Conv2D) or activation output (Tanh)
    std::vector<std::vector<std::size_t>> argmax;  // MaxPool2x2 winners
    Shape output_shape;
    bool valid = false;
  };

  Tensor run(const Tensor& x, Cache* cache) const;

  std::vector<Layer> layers_;
  Cache cache_;
};

}  // namespace vla::nn
