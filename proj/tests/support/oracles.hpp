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

// Independent reference implementations used as test oracles. Nothing here
// calls into the library code it is checking.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "latentfuzz/coverage.hpp"
#include "latentfuzz/model.hpp"
#include "latentfuzz/rng.hpp"

namespace oracle {

using latentfuzz::Layer;
using latentfuzz::LayerKind;
using latentfuzz::Model;

// ---------------------------------------------------------------------------
// Straight-line forward pass in double precision.

struct NaiveResult {
  std::vector<double> output;
  std::vector<std::vector<double>> traced;  // One vector per Dense/Conv2D layer.
};

inline NaiveResult naive_forward(const Model& m, const std::vector<float>& input) {
  std::vector<double> x(input.begin(), input.end());
  std::size_t c = 1, h = 1, w = x.size();  // Current spatial layout for conv/bn.
  if (m.input_shape.size() == 3) {
    c = m.input_shape[0];
    h = m.input_shape[1];
    w = m.input_shape[2];
  }
  bool spatial = m.input_shape.size() == 3;
  NaiveResult r;
  bool pending = false, pending_conv = false;
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const Layer& L = m.layers[li];
    switch (L.kind) {
      case LayerKind::Flatten:
        spatial = false;
        c = 1, h = 1, w = x.size();
        break;
      case LayerKind::Dense: {
        const auto& W = L.param("weight").data;
        const auto& B = L.param("bias").data;
        std::vector<double> y(L.out);
        for (std::size_t o = 0; o < L.out; ++o) {
          double acc = B[o];
          for (std::size_t i = 0; i < L.in; ++i) acc += static_cast<double>(W[o * L.in + i]) * x[i];
          y[o] = acc;
        }
        x = std::move(y);
        spatial = false;
        c = 1, h = 1, w = x.size();
        break;
      }
      case LayerKind::Conv2D: {
        const auto& W = L.param("weight").data;
        const auto& B = L.param("bias").data;
        const std::size_t oh = (h + 2 * L.pad - L.kernel_h) / L.stride + 1;
        const std::size_t ow = (w + 2 * L.pad - L.kernel_w) / L.stride + 1;
        std::vector<double> y(L.out * oh * ow);
        for (std::size_t o = 0; o < L.out; ++o)
          for (std::size_t yy = 0; yy < oh; ++yy)
            for (std::size_t xx = 0; xx < ow; ++xx) {
              double acc = B[o];
              for (std::size_t i = 0; i < L.in; ++i)
                for (std::size_t ky = 0; ky < L.kernel_h; ++ky)
                  for (std::size_t kx = 0; kx < L.kernel_w; ++kx) {
                    const long sy = static_cast<long>(yy * L.stride + ky) - static_cast<long>(L.pad);
                    const long sx = static_cast<long>(xx * L.stride + kx) - static_cast<long>(L.pad);
                    if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
                    acc += static_cast<double>(W[((o * L.in + i) * L.kernel_h + ky) * L.kernel_w + kx]) *
                           x[(i * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)];
                  }
              y[(o * oh + yy) * ow + xx] = acc;
            }
        x = std::move(y);
        c = L.out, h = oh, w = ow;
        spatial = true;
        break;
      }
      case LayerKind::BatchNorm: {
        const auto& g = L.param("gamma").data;
        const auto& b = L.param("beta").data;
        const auto& mu = L.param("running_mean").data;
        const auto& var = L.param("running_var").data;
        const std::size_t per = spatial ? h * w : 1;
        for (std::size_t i = 0; i < x.size(); ++i) {
          const std::size_t ch = i / per;
          x[i] = (x[i] - mu[ch]) / std::sqrt(static_cast<double>(var[ch]) + L.eps) * g[ch] + b[ch];
        }
        break;
      }
      case LayerKind::ReLU:
        for (double& v : x) v = v > 0.0 ? v : 0.0;
        break;
      case LayerKind::Softmax: {
        const double mx = *std::max_element(x.begin(), x.end());
        double sum = 0.0;
        for (double& v : x) sum += (v = std::exp(v - mx));
        for (double& v : x) v /= sum;
        break;
      }
    }
    // A traced value is recorded once the run of BN/ReLU after a Dense/Conv2D ends.
    if (L.kind == LayerKind::Dense || L.kind == LayerKind::Conv2D) {
      pending = true;
      pending_conv = L.kind == LayerKind::Conv2D;
    }
    const bool next_extends = li + 1 < m.layers.size() &&
                              (m.layers[li + 1].kind == LayerKind::BatchNorm || m.layers[li + 1].kind == LayerKind::ReLU);
    if (pending && !next_extends) {
      if (pending_conv) {
        std::vector<double> means(c, 0.0);
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t k = 0; k < h * w; ++k) means[ch] += x[ch * h * w + k];
          means[ch] /= static_cast<double>(h * w);
        }
        r.traced.push_back(means);
      } else {
        r.traced.push_back(x);
      }
      pending = false;
    }
  }
  r.output = x;
  return r;
}

// ---------------------------------------------------------------------------
// Random models.

inline void fill_uniform(latentfuzz::Tensor& t, latentfuzz::Rng& rng, double scale) {
  for (float& v : t.data) v = static_cast<float>((2.0 * rng.uniform() - 1.0) * scale);
}

// Flatten? + (Dense [+BN] + ReLU) per hidden width + Dense + Softmax, with
// random weights and, for BN layers, random affine parameters and statistics.
inline Model random_mlp(latentfuzz::Rng& rng, std::size_t in, const std::vector<std::size_t>& hidden,
                        std::size_t classes, bool batchnorm) {
  Model m;
  m.input_shape = {in};
  std::size_t prev = in;
  for (std::size_t width : hidden) {
    Layer d = latentfuzz::make_dense(prev, width);
    fill_uniform(d.param("weight"), rng, 1.0 / std::sqrt(static_cast<double>(prev)) * 1.5);
    fill_uniform(d.param("bias"), rng, 0.2);
    m.layers.push_back(std::move(d));
    if (batchnorm) {
      Layer bn = latentfuzz::make_batchnorm(width);
      for (float& v : bn.param("gamma").data) v = static_cast<float>(0.5 + rng.uniform());
      fill_uniform(bn.param("beta"), rng, 0.3);
      fill_uniform(bn.param("running_mean"), rng, 0.3);
      for (float& v : bn.param("running_var").data) v = static_cast<float>(0.5 + rng.uniform());
      m.layers.push_back(std::move(bn));
    }
    m.layers.push_back(latentfuzz::make_simple(LayerKind::ReLU));
    prev = width;
  }
  Layer out = latentfuzz::make_dense(prev, classes);
  fill_uniform(out.param("weight"), rng, 1.0 / std::sqrt(static_cast<double>(prev)) * 1.5);
  fill_uniform(out.param("bias"), rng, 0.2);
  m.layers.push_back(std::move(out));
  m.layers.push_back(latentfuzz::make_simple(LayerKind::Softmax));
  for (std::size_t k = 0; k < classes; ++k) m.class_labels.push_back("c" + std::to_string(k));
  return m;
}

inline std::vector<float> random_vector(latentfuzz::Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(lo + (hi - lo) * rng.uniform());
  return v;
}

// ---------------------------------------------------------------------------
// Brute-force coverage from a stored list of traces, with std::set semantics.

struct BruteCoverage {
  std::set<std::size_t> nc, snac, tknc;
  std::set<std::pair<std::size_t, std::size_t>> kmnc, nbc;
  std::size_t neurons = 0, sections = 0;

  latentfuzz::CoverageValues values() const {
    const double n = static_cast<double>(neurons);
    return {static_cast<double>(nc.size()) / n, static_cast<double>(kmnc.size()) / (n * static_cast<double>(sections)),
            static_cast<double>(nbc.size()) / (2.0 * n), static_cast<double>(snac.size()) / n,
            static_cast<double>(tknc.size()) / n};
  }
};

inline BruteCoverage brute_coverage(const std::vector<latentfuzz::ActivationTrace>& traces,
                                    const std::vector<float>& low, const std::vector<float>& high,
                                    const latentfuzz::CoverageConfig& cfg) {
  BruteCoverage b;
  b.sections = cfg.kmnc_sections;
  for (const auto& t : traces) {
    std::size_t base = 0;
    for (const auto& layer : t.values) {
      // NC on per-trace, per-layer min-max rescaling (float arithmetic).
      const float lo = *std::min_element(layer.begin(), layer.end());
      const float hi = *std::max_element(layer.begin(), layer.end());
      for (std::size_t i = 0; i < layer.size(); ++i) {
        if (hi > lo) {
          const float scaled = (layer[i] - lo) / (hi - lo);
          if (scaled > static_cast<float>(cfg.nc_threshold)) b.nc.insert(base + i);
        }
      }
      // TKNC: top-k by value, lower index first on ties.
      std::vector<std::size_t> idx(layer.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t c) { return layer[a] > layer[c]; });
      for (std::size_t k = 0; k < std::min(cfg.tknc_k, idx.size()); ++k) b.tknc.insert(base + idx[k]);
      // Profile-based criteria.
      for (std::size_t i = 0; i < layer.size(); ++i) {
        const std::size_t n = base + i;
        const double x = layer[i], l = low[n], h = high[n];
        if (x < l) b.nbc.insert({n, 0});
        if (x > h) {
          b.nbc.insert({n, 1});
          b.snac.insert(n);
        }
        if (l == h) {
          if (x == l) b.kmnc.insert({n, 0});
        } else if (x >= l && x <= h) {
          const auto s = static_cast<std::size_t>(std::floor((x - l) / (h - l) * static_cast<double>(cfg.kmnc_sections)));
          b.kmnc.insert({n, std::min(cfg.kmnc_sections - 1, s)});
        }
      }
      base += layer.size();
    }
    b.neurons = base;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major n x n).
// Returns eigenvalues descending with matching unit eigenvectors as rows.

struct Eigen {
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;
};

inline Eigen jacobi_eigen(std::vector<double> a, std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double cs = 1.0 / std::sqrt(t * t + 1.0), sn = t * cs;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = cs * akp - sn * akq;
          a[k * n + q] = sn * akp + cs * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = cs * apk - sn * aqk;
          a[q * n + k] = sn * apk + cs * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = cs * vkp - sn * vkq;
          v[k * n + q] = sn * vkp + cs * vkq;
        }
      }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x * n + x] > a[y * n + y]; });
  Eigen e;
  for (std::size_t i : order) {
    e.values.push_back(a[i * n + i]);
    std::vector<double> col(n);
    for (std::size_t k = 0; k < n; ++k) col[k] = v[k * n + i];
    e.vectors.push_back(col);
  }
  return e;
}

// ---------------------------------------------------------------------------
// Batch mean and population covariance of points (each of dimension d).

inline std::pair<std::vector<double>, std::vector<double>> batch_mean_cov(const std::vector<std::vector<double>>& pts) {
  const std::size_t d = pts.front().size();
  std::vector<double> mu(d, 0.0), cov(d * d, 0.0);
  for (const auto& p : pts)
    for (std::size_t i = 0; i < d; ++i) mu[i] += p[i];
  for (double& m : mu) m /= static_cast<double>(pts.size());
  for (const auto& p : pts)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) cov[i * d + j] += (p[i] - mu[i]) * (p[j] - mu[j]);
  for (double& c : cov) c /= static_cast<double>(pts.size());
  return {mu, cov};
}

// ---------------------------------------------------------------------------
// Files.

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("latentfuzz_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
