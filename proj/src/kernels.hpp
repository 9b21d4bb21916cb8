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

#pragma once

// Single-sample layer kernels shared by the float runtime and the double
// precision trainer. Accumulation is always in double.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

namespace latentfuzz::kernels {

struct ConvGeometry {
  std::size_t in_ch, in_h, in_w;
  std::size_t out_ch, kernel_h, kernel_w, stride, pad;

  std::size_t out_h() const { return (in_h + 2 * pad - kernel_h) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad - kernel_w) / stride + 1; }
};

template <class T, class W>
void dense_forward(std::span<const T> x, std::span<const W> weight, std::span<const W> bias,
                   std::size_t in, std::size_t out, std::span<T> y) {
  for (std::size_t o = 0; o < out; ++o) {
    double acc = static_cast<double>(bias[o]);
    const W* row = weight.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(row[i]) * static_cast<double>(x[i]);
    y[o] = static_cast<T>(acc);
  }
}

template <class T, class W>
void conv2d_forward(std::span<const T> x, std::span<const W> weight, std::span<const W> bias,
                    const ConvGeometry& g, std::span<T> y) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t o = 0; o < g.out_ch; ++o) {
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t c = 0; c < ow; ++c) {
        double acc = static_cast<double>(bias[o]);
        for (std::size_t ic = 0; ic < g.in_ch; ++ic) {
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(r * g.stride + ky) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(c * g.stride + kx) -
                                        static_cast<std::ptrdiff_t>(g.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
              const std::size_t wi = ((o * g.in_ch + ic) * g.kernel_h + ky) * g.kernel_w + kx;
              const std::size_t xi = (ic * g.in_h + static_cast<std::size_t>(iy)) * g.in_w +
                                     static_cast<std::size_t>(ix);
              acc += static_cast<double>(weight[wi]) * static_cast<double>(x[xi]);
            }
          }
        }
        y[(o * oh + r) * ow + c] = static_cast<T>(acc);
      }
    }
  }
}

// Inference-mode batch normalization with stored statistics. `spatial` is the
// number of elements per channel (1 for feature vectors).
template <class T, class W>
void batchnorm_forward(std::span<const T> x, std::span<const W> gamma, std::span<const W> beta,
                       std::span<const W> mean, std::span<const W> var, double eps,
                       std::size_t channels, std::size_t spatial, std::span<T> y) {
  for (std::size_t ch = 0; ch < channels; ++ch) {
    const double inv_std = 1.0 / std::sqrt(static_cast<double>(var[ch]) + eps);
    const double g = static_cast<double>(gamma[ch]);
    const double b = static_cast<double>(beta[ch]);
    const double m = static_cast<double>(mean[ch]);
    for (std::size_t s = 0; s < spatial; ++s) {
      const std::size_t i = ch * spatial + s;
      y[i] = static_cast<T>((static_cast<double>(x[i]) - m) * inv_std * g + b);
    }
  }
}

template <class T>
void relu_forward(std::span<const T> x, std::span<T> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void softmax_forward(std::span<const T> x, std::span<T> y) {
  const double top = static_cast<double>(*std::max_element(x.begin(), x.end()));
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += std::exp(static_cast<double>(x[i]) - top);
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = static_cast<T>(std::exp(static_cast<double>(x[i]) - top) / sum);
  }
}

}  // namespace latentfuzz::kernels
