#include "vla/nn/network.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "vla/errors.hpp"

namespace vla::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using ConstMapRowVec = Eigen::Map<const Eigen::RowVectorXd>;

std::string layer_label(std::size_t index, const Layer& layer) {
  return "layer " + std::to_string(index) + " (" + to_string(layer.kind) + ")";
}

void im2col(const double* img, std::size_t channels, std::size_t h, std::size_t w, double* cols) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        double* dst = cols + ((c * 3 + ky) * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const auto iy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst + y * w, dst + (y + 1) * w, 0.0);
            continue;
          }
          const double* src = img + c * hw + static_cast<std::size_t>(iy) * w;
          for (std::size_t x = 0; x < w; ++x) {
            const auto ix = static_cast<std::ptrdiff_t>(x + kx) - 1;
            dst[y * w + x] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, std::size_t channels, std::size_t h, std::size_t w, double* img) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const double* src = cols + ((c * 3 + ky) * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const auto iy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          double* dst = img + c * hw + static_cast<std::size_t>(iy) * w;
          for (std::size_t x = 0; x < w; ++x) {
            const auto ix = static_cast<std::ptrdiff_t>(x + kx) - 1;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[ix] += src[y * w + x];
          }
        }
      }
    }
  }
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2D: return "conv2d";
    case LayerKind::MaxPool2x2: return "maxpool2x2";
    case LayerKind::ReLU: return "relu";
    case LayerKind::Tanh: return "tanh";
    case LayerKind::Flatten: return "flatten";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
  for (auto k : {LayerKind::Dense, LayerKind::Conv2D, LayerKind::MaxPool2x2, LayerKind::ReLU, LayerKind::Tanh,
                 LayerKind::Flatten}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown layer kind '" + name + "'");
}

Layer dense(std::size_t in, std::size_t out) {
  if (in == 0 || out == 0) throw ConfigError("dense layer widths must be positive");
  Layer l;
  l.kind = LayerKind::Dense;
  l.in = in;
  l.out = out;
  l.weight = Tensor({out, in});
  l.bias = Tensor({out});
  l.grad_weight = Tensor({out, in});
  l.grad_bias = Tensor({out});
  return l;
}

Layer conv2d(std::size_t in_channels, std::size_t out_channels) {
  if (in_channels == 0 || out_channels == 0) throw ConfigError("conv2d channel counts must be positive");
  Layer l;
  l.kind = LayerKind::Conv2D;
  l.in = in_channels;
  l.out = out_channels;
  l.weight = Tensor({out_channels, in_channels, 3, 3});
  l.bias = Tensor({out_channels});
  l.grad_weight = Tensor({out_channels, in_channels, 3, 3});
  l.grad_bias = Tensor({out_channels});
  return l;
}

namespace {
Layer plain(LayerKind kind) {
  Layer l;
  l.kind = kind;
  return l;
}
}  // namespace

Layer max_pool() { return plain(LayerKind::MaxPool2x2); }
Layer relu() { return plain(LayerKind::ReLU); }
Layer tanh_layer() { return plain(LayerKind::Tanh); }
Layer flatten() { return plain(LayerKind::Flatten); }

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) {}

void Network::initialize(std::mt19937_64& rng) {
  for (auto& l : layers_) {
    if (!l.has_parameters()) continue;
    const double fan_in = static_cast<double>(l.in) * (l.kind == LayerKind::Conv2D ? 9.0 : 1.0);
    const double fan_out = static_cast<double>(l.out) * (l.kind == LayerKind::Conv2D ? 9.0 : 1.0);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : l.weight.values()) v = dist(rng);
    l.bias.fill(0.0);
  }
  zero_grad();
}

Tensor Network::forward(const Tensor& x) { return run(x, &cache_); }

Tensor Network::predict(const Tensor& x) const { return run(x, nullptr); }

Tensor Network::run(const Tensor& x, Cache* cache) const {
  if (layers_.empty()) throw ConfigError("network has no layers");
  if (cache) {
    cache->valid = false;
    cache->inputs.assign(layers_.size(), Tensor{});
    cache->aux.assign(layers_.size(), Tensor{});
    cache->argmax.assign(layers_.size(), {});
  }
  Tensor cur = x;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    const Shape& s = cur.shape();
    Tensor next;
    switch (l.kind) {
      case LayerKind::Dense: {
        if (s.size() != 2 || s[1] != l.in) {
          throw ShapeError(layer_label(li, l) + ": expected [B x " + std::to_string(l.in) + "] input, got " +
                           shape_string(s));
        }
        const std::size_t b = s[0];
        next = Tensor({b, l.out});
        ConstMapMat xin(cur.data(), static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(l.in));
        ConstMapMat w(l.weight.data(), static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(l.in));
        MapMat y(next.data(), static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(l.out));
        y.noalias() = xin * w.transpose();
        y.rowwise() += ConstMapRowVec(l.bias.data(), static_cast<Eigen::Index>(l.out));
        break;
      }
      case LayerKind::Conv2D: {
        if (s.size() != 4 || s[1] != l.in) {
          throw ShapeError(layer_label(li, l) + ": expected [B x " + std::to_string(l.in) + " x H x W] input, got " +
                           shape_string(s));
        }
        const std::size_t b = s[0], h = s[2], w = s[3], hw = h * w, k = l.in * 9;
        next = Tensor({b, l.out, h, w});
        Tensor cols({b, k, hw});
        ConstMapMat wm(l.weight.data(), static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(k));
        for (std::size_t bi = 0; bi < b; ++bi) {
          double* col = cols.data() + bi * k * hw;
          im2col(cur.data() + bi * l.in * hw, l.in, h, w, col);
          MapMat y(next.data() + bi * l.out * hw, static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(hw));
          y.noalias() = wm * ConstMapMat(col, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(hw));
          for (std::size_t o = 0; o < l.out; ++o) y.row(static_cast<Eigen::Index>(o)).array() += l.bias[o];
        }
        if (cache) cache->aux[li] = std::move(cols);
        break;
      }
      case LayerKind::MaxPool2x2: {
        if (s.size() != 4 || s[2] % 2 != 0 || s[3] % 2 != 0) {
          throw ShapeError(layer_label(li, l) + ": expected [B x C x H x W] input with even H and W, got " +
                           shape_string(s));
        }
        const std::size_t b = s[0], c = s[1], h = s[2], w = s[3], oh = h / 2, ow = w / 2;
        next = Tensor({b, c, oh, ow});
        std::vector<std::size_t> arg(next.size());
        std::size_t o = 0;
        for (std::size_t plane = 0; plane < b * c; ++plane) {
          const std::size_t base = plane * h * w;
          for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xx = 0; xx < ow; ++xx, ++o) {
              std::size_t best = base + (2 * y) * w + 2 * xx;
              for (std::size_t dy = 0; dy < 2; ++dy) {
                for (std::size_t dx = 0; dx < 2; ++dx) {
                  const std::size_t idx = base + (2 * y + dy) * w + 2 * xx + dx;
                  if (cur[idx] > cur[best]) best = idx;
                }
              }
              next[o] = cur[best];
              arg[o] = best;
            }
          }
        }
        if (cache) cache->argmax[li] = std::move(arg);
        break;
      }
      case LayerKind::ReLU: {
        if (s.empty()) throw ShapeError(layer_label(li, l) + ": empty input");
        next = cur;
        for (auto& v : next.values()) v = v > 0.0 ? v : 0.0;
        break;
      }
      case LayerKind::Tanh: {
        if (s.empty()) throw ShapeError(layer_label(li, l) + ": empty input");
        next = cur;
        for (auto& v : next.values()) v = std::tanh(v);
        if (cache) cache->aux[li] = next;
        break;
      }
      case LayerKind::Flatten: {
        if (s.size() < 2) throw ShapeError(layer_label(li, l) + ": expected batched input, got " + shape_string(s));
        next = cur;
        next.reshape({s[0], cur.size() / s[0]});
        break;
      }
    }
    if (cache) cache->inputs[li] = std::move(cur);
    cur = std::move(next);
  }
  if (cache) {
    cache->output_shape = cur.shape();
    cache->valid = true;
  }
  return cur;
}

Tensor Network::backward(const Tensor& upstream) {
  if (!cache_.valid) throw StateError("backward called before forward");
  if (upstream.shape() != cache_.output_shape) {
    throw ShapeError("upstream gradient " + shape_string(upstream.shape()) + " does not match output " +
                     shape_string(cache_.output_shape));
  }
  Tensor grad = upstream;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    Layer& l = layers_[li];
    const Tensor& in = cache_.inputs[li];
    Tensor gin(in.shape());
    switch (l.kind) {
      case LayerKind::Dense: {
        const auto b = static_cast<Eigen::Index>(in.dim(0));
        const auto nin = static_cast<Eigen::Index>(l.in), nout = static_cast<Eigen::Index>(l.out);
        ConstMapMat xin(in.data(), b, nin);
        ConstMapMat gy(grad.data(), b, nout);
        ConstMapMat w(l.weight.data(), nout, nin);
        MapMat gw(l.grad_weight.data(), nout, nin);
        gw.noalias() += gy.transpose() * xin;
        Eigen::Map<Eigen::RowVectorXd> gb(l.grad_bias.data(), nout);
        gb += gy.colwise().sum();
        MapMat gx(gin.data(), b, nin);
        gx.noalias() = gy * w;
        break;
      }
      case LayerKind::Conv2D: {
        const std::size_t b = in.dim(0), h = in.dim(2), w = in.dim(3), hw = h * w, k = l.in * 9;
        const Tensor& cols = cache_.aux[li];
        ConstMapMat wm(l.weight.data(), static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(k));
        MapMat gw(l.grad_weight.data(), static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(k));
        RowMat gcols(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(hw));
        for (std::size_t bi = 0; bi < b; ++bi) {
          ConstMapMat gy(grad.data() + bi * l.out * hw, static_cast<Eigen::Index>(l.out),
                         static_cast<Eigen::Index>(hw));
          ConstMapMat col(cols.data() + bi * k * hw, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(hw));
          gw.noalias() += gy * col.transpose();
          for (std::size_t o = 0; o < l.out; ++o) l.grad_bias[o] += gy.row(static_cast<Eigen::Index>(o)).sum();
          gcols.noalias() = wm.transpose() * gy;
          col2im_add(gcols.data(), l.in, h, w, gin.data() + bi * l.in * hw);
        }
        break;
      }
      case LayerKind::MaxPool2x2: {
        const auto& arg = cache_.argmax[li];
        for (std::size_t o = 0; o < arg.size(); ++o) gin[arg[o]] += grad[o];
        break;
      }
      case LayerKind::ReLU: {
        for (std::size_t i = 0; i < in.size(); ++i) gin[i] = in[i] > 0.0 ? grad[i] : 0.0;
        break;
      }
      case LayerKind::Tanh: {
        const Tensor& y = cache_.aux[li];
        for (std::size_t i = 0; i < in.size(); ++i) gin[i] = grad[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case LayerKind::Flatten: {
        gin = grad;
        gin.reshape(in.shape());
        break;
      }
    }
    grad = std::move(gin);
  }
  return grad;
}

void Network::zero_grad() {
  for (auto& l : layers_) {
    if (!l.has_parameters()) continue;
    l.grad_weight.fill(0.0);
    l.grad_bias.fill(0.0);
  }
}

std::vector<ParamView> Network::parameters() {
  std::vector<ParamView> out;
  for (auto& l : layers_) {
    if (!l.has_parameters()) continue;
    out.push_back({&l.weight, &l.grad_weight});
    out.push_back({&l.bias, &l.grad_bias});
  }
  return out;
}

std::vector<double> Network::flat_parameters() const {
  std::vector<double> out;
  for (const auto& l : layers_) {
    if (!l.has_parameters()) continue;
    out.insert(out.end(), l.weight.values().begin(), l.weight.values().end());
    out.insert(out.end(), l.bias.values().begin(), l.bias.values().end());
  }
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) {
    if (l.has_parameters()) n += l.weight.size() + l.bias.size();
  }
  return n;
}

}  // namespace vla::nn
