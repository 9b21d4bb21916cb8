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

#include <cstdint>
#include <span>
#include <vector>

#include "latentfuzz/dataset.hpp"
#include "latentfuzz/model.hpp"

namespace latentfuzz {

enum class Loss {
  CrossEntropy,     // Requires a trailing Softmax; target is the label.
  HalfSquaredError  // 0.5 * ||output - onehot(label)||^2 on the raw output.
};

// BatchNorm statistics used by a forward pass.
enum class BnMode { Running, Batch };

// Gradients of the mean loss with respect to every parameter, laid out like
// Model::layers[i].params[j]. Running statistics get zero gradients.
struct Gradients {
  std::vector<std::vector<std::vector<double>>> values;
  double loss = 0.0;
};

Gradients compute_gradients(const Model& model, std::span<const Tensor> inputs,
                            std::span<const int> labels, Loss loss = Loss::CrossEntropy,
                            BnMode bn_mode = BnMode::Running);

double compute_loss(const Model& model, std::span<const Tensor> inputs, std::span<const int> labels,
                    Loss loss = Loss::CrossEntropy, BnMode bn_mode = BnMode::Running);

// Central finite differences over every trainable parameter. Returns
// max |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|). eps must lie in (0, 1e-2].
double grad_check(const Model& model, const Tensor& input, int label, double eps,
                  Loss loss = Loss::CrossEntropy);
double grad_check(const Model& model, std::span<const Tensor> inputs, std::span<const int> labels,
                  double eps, Loss loss, BnMode bn_mode);

struct TrainOptions {
  double lr = 0.05;
  int epochs = 10;
  std::size_t batch = 32;
  std::uint64_t rng_seed = 0;
  // Exponential factor for BatchNorm running statistics.
  double bn_momentum = 0.1;
};

struct TrainResult {
  Model model;
  // Full-dataset cross-entropy after each epoch.
  std::vector<double> loss_curve;
};

// Minibatch SGD on cross-entropy. BatchNorm uses batch statistics while
// training and updates running statistics. lr == 0 leaves the model untouched.
TrainResult train_sgd(const Model& model, const LabeledDataset& data, const TrainOptions& options);

// Fraction of samples whose argmax prediction equals the label.
double accuracy(const Model& model, const LabeledDataset& data);

}  // namespace latentfuzz
