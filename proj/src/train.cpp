// Copyright 2026 The latentfuzz Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "latentfuzz/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kernels.hpp"
#include "latentfuzz/error.hpp"
#include "latentfuzz/rng.hpp"

namespace latentfuzz {

namespace {

using Params = std::vector<std::vector<std::vector<double>>>;

Params to_double(const Model& model) {
  Params p(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    for (const auto& np : model.layers[i].params) {
      p[i].emplace_back(np.value.data.begin(), np.value.data.end());
    }
  }
  return p;
}

void to_float(const Params& p, Model& model) {
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    for (std::size_t j = 0; j < p[i].size(); ++j) {
      auto& dst = model.layers[i].params[j].value.data;
      std::transform(p[i][j].begin(), p[i][j].end(), dst.begin(),
                     [](double v) { return static_cast<float>(v); });
    }
  }
}

Params zeros_like(const Params& p) {
  Params z(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (const auto& t : p[i]) z[i].emplace_back(t.size(), 0.0);
  }
  return z;
}

std::size_t spatial_of(const Shape& s) { return s.size() == 3 ? s[1] * s[2] : 1; }

// Double precision batch network over a fixed Model topology.
class Network {
 public:
  Network(const Model& model, std::size_t batch, BnMode mode)
      : model_(model), shapes_(layer_output_shapes(model)), batch_(batch), mode_(mode) {
    sizes_.push_back(element_count(model.input_shape));
    for (const auto& s : shapes_) sizes_.push_back(element_count(s));
    acts_.resize(model.layers.size() + 1);
    for (std::size_t i = 0; i < acts_.size(); ++i) acts_[i].assign(batch * sizes_[i], 0.0);
    bn_xhat_.resize(model.layers.size());
    bn_inv_std_.resize(model.layers.size());
    bn_mean_.resize(model.layers.size());
    bn_var_.resize(model.layers.size());
  }

  const Shape& in_shape(std::size_t layer) const {
    return layer == 0 ? model_.input_shape : shapes_[layer - 1];
  }

  void load_inputs(std::span<const Tensor> inputs) {
    for (std::size_t n = 0; n < batch_; ++n) {
      const auto& d = inputs[n].data;
      std::copy(d.begin(), d.end(), acts_[0].begin() + static_cast<std::ptrdiff_t>(n * sizes_[0]));
    }
  }

  std::span<const double> output(std::size_t n) const {
    return std::span<const double>(acts_.back()).subspan(n * sizes_.back(), sizes_.back());
  }
  std::span<const double> act(std::size_t layer_out, std::size_t n) const {
    return std::span<const double>(acts_[layer_out]).subspan(n * sizes_[layer_out], sizes_[layer_out]);
  }

  void forward(const Params& p) {
    for (std::size_t i = 0; i < model_.layers.size(); ++i) forward_layer(i, p);
  }

  // Returns dL/d(acts[from]) seeds for the loss; then backpropagates into grads.
  double loss_and_backward(const Params& p, std::span<const int> labels, Loss loss, Params* grads) {
    const std::size_t L = model_.layers.size();
    const double inv_b = 1.0 / static_cast<double>(batch_);
    double total = 0.0;
    std::size_t start;  // Backpropagation starts below this activation index.
    std::vector<double> grad;
    if (loss == Loss::CrossEntropy) {
      if (L == 0 || model_.layers.back().kind != LayerKind::Softmax) {
        throw Error("cross-entropy requires a trailing Softmax layer");
      }
      const std::size_t k = sizes_[L];
      grad.assign(batch_ * k, 0.0);
      for (std::size_t n = 0; n < batch_; ++n) {
        const auto probs = output(n);
        check_label(labels[n], k);
        total -= std::log(std::max(probs[labels[n]], 1e-300));
        for (std::size_t j = 0; j < k; ++j) {
          grad[n * k + j] = (probs[j] - (static_cast<int>(j) == labels[n] ? 1.0 : 0.0)) * inv_b;
        }
      }
      start = L - 1;  // Gradient is with respect to the Softmax input.
    } else {
      const std::size_t k = sizes_[L];
      grad.assign(batch_ * k, 0.0);
      for (std::size_t n = 0; n < batch_; ++n) {
        const auto out = output(n);
        check_label(labels[n], k);
        for (std::size_t j = 0; j < k; ++j) {
          const double diff = out[j] - (static_cast<int>(j) == labels[n] ? 1.0 : 0.0);
          total += 0.5 * diff * diff;
          grad[n * k + j] = diff * inv_b;
        }
      }
      start = L;
    }
    if (grads) {
      for (std::size_t i = start; i-- > 0;) grad = backward_layer(i, p, grad, *grads);
    }
    return total * inv_b;
  }

  // Batch statistics of BatchNorm layer i from the last forward in Batch mode.
  const std::vector<double>& bn_mean(std::size_t i) const { return bn_mean_[i]; }
  const std::vector<double>& bn_var(std::size_t i) const { return bn_var_[i]; }
  std::size_t bn_count(std::size_t i) const { return batch_ * spatial_of(in_shape(i)); }

 private:
  static void check_label(int label, std::size_t k) {
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw Error("label " + std::to_string(label) + " out of range for " + std::to_string(k) +
                  " outputs");
    }
  }

  void forward_layer(std::size_t i, const Params& p) {
    const Layer& l = model_.layers[i];
    const std::size_t in_n = sizes_[i], out_n = sizes_[i + 1];
    const Shape& ishape = in_shape(i);
    std::span<const double> x_all(acts_[i]);
    std::span<double> y_all(acts_[i + 1]);
    if (l.kind == LayerKind::BatchNorm && mode_ == BnMode::Batch) {
      forward_bn_batch(i, p);
      return;
    }
    for (std::size_t n = 0; n < batch_; ++n) {
      auto x = x_all.subspan(n * in_n, in_n);
      auto y = y_all.subspan(n * out_n, out_n);
      switch (l.kind) {
        case LayerKind::Dense:
          kernels::dense_forward<double, double>(x, p[i][0], p[i][1], l.in, l.out, y);
          break;
        case LayerKind::Conv2D:
          kernels::conv2d_forward<double, double>(
              x, p[i][0], p[i][1],
              {ishape[0], ishape[1], ishape[2], l.out, l.kernel_h, l.kernel_w, l.stride, l.pad}, y);
          break;
        case LayerKind::BatchNorm: {
          kernels::batchnorm_forward<double, double>(x, p[i][0], p[i][1], p[i][2], p[i][3],
                                                     static_cast<double>(l.eps), l.channels,
                                                     spatial_of(ishape), y);
          break;
        }
        case LayerKind::ReLU:
          kernels::relu_forward<double>(x, y);
          break;
        case LayerKind::Softmax:
          kernels::softmax_forward<double>(x, y);
          break;
        case LayerKind::Flatten:
          std::copy(x.begin(), x.end(), y.begin());
          break;
      }
    }
  }

  void forward_bn_batch(std::size_t i, const Params& p) {
    const Layer& l = model_.layers[i];
    const std::size_t S = spatial_of(in_shape(i)), C = l.channels, per = C * S;
    const double m = static_cast<double>(batch_ * S);
    auto& xhat = bn_xhat_[i];
    xhat.assign(batch_ * per, 0.0);
    bn_inv_std_[i].assign(C, 0.0);
    bn_mean_[i].assign(C, 0.0);
    bn_var_[i].assign(C, 0.0);
    const auto& x = acts_[i];
    auto& y = acts_[i + 1];
    for (std::size_t c = 0; c < C; ++c) {
      double mean = 0.0;
      for (std::size_t n = 0; n < batch_; ++n)
        for (std::size_t s = 0; s < S; ++s) mean += x[n * per + c * S + s];
      mean /= m;
      double var = 0.0;
      for (std::size_t n = 0; n < batch_; ++n)
        for (std::size_t s = 0; s < S; ++s) {
          const double d = x[n * per + c * S + s] - mean;
          var += d * d;
        }
      var /= m;
      const double inv_std = 1.0 / std::sqrt(var + static_cast<double>(l.eps));
      bn_mean_[i][c] = mean;
      bn_var_[i][c] = var;
      bn_inv_std_[i][c] = inv_std;
      for (std::size_t n = 0; n < batch_; ++n)
        for (std::size_t s = 0; s < S; ++s) {
          const std::size_t k = n * per + c * S + s;
          xhat[k] = (x[k] - mean) * inv_std;
          y[k] = xhat[k] * p[i][0][c] + p[i][1][c];
        }
    }
  }

  std::vector<double> backward_layer(std::size_t i, const Params& p, const std::vector<double>& dy,
                                     Params& grads) {
    const Layer& l = model_.layers[i];
    const std::size_t in_n = sizes_[i], out_n = sizes_[i + 1];
    const Shape& ishape = in_shape(i);
    const auto& x = acts_[i];
    const auto& y = acts_[i + 1];
    std::vector<double> dx(batch_ * in_n, 0.0);
    switch (l.kind) {
      case LayerKind::Dense: {
        auto& dw = grads[i][0];
        auto& db = grads[i][1];
        const auto& w = p[i][0];
        for (std::size_t n = 0; n < batch_; ++n) {
          const double* xn = x.data() + n * in_n;
          double* dxn = dx.data() + n * in_n;
          for (std::size_t o = 0; o < l.out; ++o) {
            const double g = dy[n * out_n + o];
            if (g == 0.0) continue;
            db[o] += g;
            const double* wr = w.data() + o * l.in;
            double* dwr = dw.data() + o * l.in;
            for (std::size_t k = 0; k < l.in; ++k) {
              dwr[k] += g * xn[k];
              dxn[k] += wr[k] * g;
            }
          }
        }
        break;
      }
      case LayerKind::Conv2D: {
        const kernels::ConvGeometry g{ishape[0], ishape[1], ishape[2], l.out,
                                      l.kernel_h, l.kernel_w, l.stride, l.pad};
        const std::size_t oh = g.out_h(), ow = g.out_w();
        auto& dw = grads[i][0];
        auto& db = grads[i][1];
        const auto& w = p[i][0];
        for (std::size_t n = 0; n < batch_; ++n) {
          const double* xn = x.data() + n * in_n;
          double* dxn = dx.data() + n * in_n;
          for (std::size_t o = 0; o < g.out_ch; ++o)
            for (std::size_t r = 0; r < oh; ++r)
              for (std::size_t c = 0; c < ow; ++c) {
                const double gy = dy[n * out_n + (o * oh + r) * ow + c];
                if (gy == 0.0) continue;
                db[o] += gy;
                for (std::size_t ic = 0; ic < g.in_ch; ++ic)
                  for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
                    const auto iy = static_cast<std::ptrdiff_t>(r * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                    for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                      const auto ix = static_cast<std::ptrdiff_t>(c * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad);
                      if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                      const std::size_t wi = ((o * g.in_ch + ic) * g.kernel_h + ky) * g.kernel_w + kx;
                      const std::size_t xi = (ic * g.in_h + static_cast<std::size_t>(iy)) * g.in_w +
                                             static_cast<std::size_t>(ix);
                      dw[wi] += gy * xn[xi];
                      dxn[xi] += w[wi] * gy;
                    }
                  }
              }
        }
        break;
      }
      case LayerKind::BatchNorm: {
        const std::size_t S = spatial_of(ishape), C = l.channels, per = C * S;
        auto& dgamma = grads[i][0];
        auto& dbeta = grads[i][1];
        const auto& gamma = p[i][0];
        if (mode_ == BnMode::Batch) {
          const auto& xhat = bn_xhat_[i];
          const double m = static_cast<double>(batch_ * S);
          for (std::size_t c = 0; c < C; ++c) {
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (std::size_t n = 0; n < batch_; ++n)
              for (std::size_t s = 0; s < S; ++s) {
                const std::size_t k = n * per + c * S + s;
                dgamma[c] += dy[k] * xhat[k];
                dbeta[c] += dy[k];
                const double dxh = dy[k] * gamma[c];
                sum_dxhat += dxh;
                sum_dxhat_xhat += dxh * xhat[k];
              }
            const double scale = bn_inv_std_[i][c] / m;
            for (std::size_t n = 0; n < batch_; ++n)
              for (std::size_t s = 0; s < S; ++s) {
                const std::size_t k = n * per + c * S + s;
                const double dxh = dy[k] * gamma[c];
                dx[k] = scale * (m * dxh - sum_dxhat - xhat[k] * sum_dxhat_xhat);
              }
          }
        } else {
          for (std::size_t c = 0; c < C; ++c) {
            const double inv_std = 1.0 / std::sqrt(p[i][3][c] + static_cast<double>(l.eps));
            for (std::size_t n = 0; n < batch_; ++n)
              for (std::size_t s = 0; s < S; ++s) {
                const std::size_t k = n * per + c * S + s;
                const double xhat = (x[k] - p[i][2][c]) * inv_std;
                dgamma[c] += dy[k] * xhat;
                dbeta[c] += dy[k];
                dx[k] = dy[k] * gamma[c] * inv_std;
              }
          }
        }
        break;
      }
      case LayerKind::ReLU:
        for (std::size_t k = 0; k < dx.size(); ++k) dx[k] = x[k] > 0.0 ? dy[k] : 0.0;
        break;
      case LayerKind::Softmax:
        for (std::size_t n = 0; n < batch_; ++n) {
          double dot = 0.0;
          for (std::size_t j = 0; j < out_n; ++j) dot += dy[n * out_n + j] * y[n * out_n + j];
          for (std::size_t j = 0; j < out_n; ++j) {
            dx[n * in_n + j] = y[n * out_n + j] * (dy[n * out_n + j] - dot);
          }
        }
        break;
      case LayerKind::Flatten:
        dx = dy;
        break;
    }
    return dx;
  }

  const Model& model_;
  std::vector<Shape> shapes_;
  std::size_t batch_;
  BnMode mode_;
  std::vector<std::size_t> sizes_;
  std::vector<std::vector<double>> acts_;
  std::vector<std::vector<double>> bn_xhat_, bn_inv_std_, bn_mean_, bn_var_;
};

void check_batch(const Model& model, std::span<const Tensor> inputs, std::span<const int> labels) {
  if (inputs.empty()) throw Error("empty batch");
  if (inputs.size() != labels.size()) throw Error("inputs and labels differ in length");
  for (const auto& t : inputs) {
    if (t.shape != model.input_shape) {
      throw ShapeError("input shape " + shape_to_string(t.shape) + " does not match model input " +
                       shape_to_string(model.input_shape));
    }
  }
}

double loss_with(const Model& model, const Params& p, std::span<const Tensor> inputs,
                 std::span<const int> labels, Loss loss, BnMode mode) {
  Network net(model, inputs.size(), mode);
  net.load_inputs(inputs);
  net.forward(p);
  return net.loss_and_backward(p, labels, loss, nullptr);
}

double dataset_loss(const Model& model, const Params& p, const LabeledDataset& data) {
  constexpr std::size_t kChunk = 256;
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, data.size() - start);
    std::span<const Tensor> in(data.inputs.data() + start, n);
    std::span<const int> lab(data.labels.data() + start, n);
    total += loss_with(model, p, in, lab, Loss::CrossEntropy, BnMode::Running) *
             static_cast<double>(n);
  }
  return total / static_cast<double>(data.size());
}

}  // namespace

Gradients compute_gradients(const Model& model, std::span<const Tensor> inputs,
                            std::span<const int> labels, Loss loss, BnMode bn_mode) {
  validate_model(model, false);
  check_batch(model, inputs, labels);
  const Params p = to_double(model);
  Gradients g;
  g.values = zeros_like(p);
  Network net(model, inputs.size(), bn_mode);
  net.load_inputs(inputs);
  net.forward(p);
  g.loss = net.loss_and_backward(p, labels, loss, &g.values);
  return g;
}

double compute_loss(const Model& model, std::span<const Tensor> inputs, std::span<const int> labels,
                    Loss loss, BnMode bn_mode) {
  validate_model(model, false);
  check_batch(model, inputs, labels);
  return loss_with(model, to_double(model), inputs, labels, loss, bn_mode);
}

double grad_check(const Model& model, const Tensor& input, int label, double eps, Loss loss) {
  const Tensor inputs[] = {input};
  const int labels[] = {label};
  return grad_check(model, inputs, labels, eps, loss, BnMode::Running);
}

double grad_check(const Model& model, std::span<const Tensor> inputs, std::span<const int> labels,
                  double eps, Loss loss, BnMode bn_mode) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw Error("grad_check eps must lie in (0, 1e-2]");
  const Gradients analytic = compute_gradients(model, inputs, labels, loss, bn_mode);
  Params p = to_double(model);
  double worst = 0.0;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& l = model.layers[i];
    for (std::size_t j = 0; j < l.params.size(); ++j) {
      if (!is_trainable_param(l.kind, l.params[j].name)) continue;
      for (std::size_t k = 0; k < p[i][j].size(); ++k) {
        const double saved = p[i][j][k];
        p[i][j][k] = saved + eps;
        const double up = loss_with(model, p, inputs, labels, loss, bn_mode);
        p[i][j][k] = saved - eps;
        const double down = loss_with(model, p, inputs, labels, loss, bn_mode);
        p[i][j][k] = saved;
        const double fd = (up - down) / (2.0 * eps);
        const double ga = analytic.values[i][j][k];
        if (!std::isfinite(fd) || !std::isfinite(ga)) throw Error("non-finite gradient");
        const double rel = std::abs(ga - fd) / std::max(1e-8, std::abs(ga) + std::abs(fd));
        worst = std::max(worst, rel);
      }
    }
  }
  return worst;
}

TrainResult train_sgd(const Model& model, const LabeledDataset& data, const TrainOptions& options) {
  if (data.empty()) throw Error("cannot train on an empty dataset");
  data.validate();
  validate_model(model);
  if (!(options.lr >= 0.0)) throw Error("learning rate must be >= 0");
  if (options.batch == 0) throw Error("batch size must be positive");
  for (int label : data.labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= model.class_labels.size()) {
      throw Error("label " + std::to_string(label) + " out of range for model with " +
                  std::to_string(model.class_labels.size()) + " classes");
    }
  }
  check_batch(model, std::span(data.inputs).first(1), std::span(data.labels).first(1));

  TrainResult result{model, {}};
  Params p = to_double(model);
  const bool has_bn = std::any_of(model.layers.begin(), model.layers.end(),
                                  [](const Layer& l) { return l.kind == LayerKind::BatchNorm; });
  Rng rng(options.rng_seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Tensor> batch_in;
  std::vector<int> batch_lab;

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    if (options.lr > 0.0) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      for (std::size_t start = 0; start < order.size(); start += options.batch) {
        const std::size_t n = std::min(options.batch, order.size() - start);
        batch_in.clear();
        batch_lab.clear();
        for (std::size_t k = 0; k < n; ++k) {
          batch_in.push_back(data.inputs[order[start + k]]);
          batch_lab.push_back(data.labels[order[start + k]]);
        }
        const BnMode mode = has_bn ? BnMode::Batch : BnMode::Running;
        Network net(model, n, mode);
        net.load_inputs(batch_in);
        net.forward(p);
        Params grads = zeros_like(p);
        net.loss_and_backward(p, batch_lab, Loss::CrossEntropy, &grads);
        for (std::size_t i = 0; i < model.layers.size(); ++i) {
          const Layer& l = model.layers[i];
          for (std::size_t j = 0; j < l.params.size(); ++j) {
            if (!is_trainable_param(l.kind, l.params[j].name)) continue;
            for (std::size_t k = 0; k < p[i][j].size(); ++k) p[i][j][k] -= options.lr * grads[i][j][k];
          }
          if (l.kind == LayerKind::BatchNorm) {
            const double mom = options.bn_momentum;
            const double cnt = static_cast<double>(net.bn_count(i));
            const double unbias = cnt > 1.0 ? cnt / (cnt - 1.0) : 1.0;
            for (std::size_t c = 0; c < l.channels; ++c) {
              p[i][2][c] = (1.0 - mom) * p[i][2][c] + mom * net.bn_mean(i)[c];
              p[i][3][c] = (1.0 - mom) * p[i][3][c] + mom * net.bn_var(i)[c] * unbias;
            }
          }
        }
      }
    }
    result.loss_curve.push_back(dataset_loss(model, p, data));
  }
  to_float(p, result.model);
  validate_model(result.model);
  return result;
}

double accuracy(const Model& model, const LabeledDataset& data) {
  if (data.empty()) throw Error("accuracy of an empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor probs = forward(model, data.inputs[i]);
    if (static_cast<int>(argmax(probs.data)) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace latentfuzz
