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

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "latentfuzz/tensor.hpp"

namespace latentfuzz {

class Rng;

enum class LayerKind { Dense, Conv2D, BatchNorm, ReLU, Softmax, Flatten };

std::string_view layer_kind_name(LayerKind kind);
// Throws FormatError for unknown names.
LayerKind parse_layer_kind(std::string_view name);

struct NamedTensor {
  std::string name;
  Tensor value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

// One layer of a feedforward network. Hyperparameters that do not apply to
// `kind` stay zero. Parameters are kept in canonical order:
//   Dense     weight [out, in], bias [out]
//   Conv2D    weight [out_ch, in_ch, kh, kw], bias [out_ch]
//   BatchNorm gamma, beta, running_mean, running_var (all [channels])
struct Layer {
  LayerKind kind = LayerKind::ReLU;
  std::size_t in = 0;   // Dense input features, Conv2D input channels.
  std::size_t out = 0;  // Dense output features, Conv2D output channels.
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t channels = 0;  // BatchNorm.
  float eps = 1e-5f;         // BatchNorm.
  std::vector<NamedTensor> params;

  const Tensor& param(std::string_view name) const;
  Tensor& param(std::string_view name);

  friend bool operator==(const Layer&, const Layer&) = default;
};

Layer make_dense(std::size_t in, std::size_t out);
Layer make_conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kh, std::size_t kw,
                  std::size_t stride = 1, std::size_t pad = 0);
// gamma = 1, beta = 0, running_mean = 0, running_var = 1.
Layer make_batchnorm(std::size_t channels, float eps = 1e-5f);
Layer make_simple(LayerKind kind);

// Names of the parameters updated by training (running statistics excluded).
bool is_trainable_param(LayerKind kind, std::string_view name);

struct Model {
  Shape input_shape;
  std::vector<Layer> layers;
  std::vector<std::string> class_labels;

  friend bool operator==(const Model&, const Model&) = default;
};

// Output shape of every layer, in order. Throws ShapeError when adjacent layers
// do not compose or parameter shapes disagree with the layer kind.
std::vector<Shape> layer_output_shapes(const Model& model);

// Full structural validation: shapes compose, parameters finite, BatchNorm
// running_var >= 0 and eps > 0. With `classifier`, also requires a trailing
// Softmax whose width matches class_labels.
void validate_model(const Model& model, bool classifier = true);

// A traced layer is a Dense or Conv2D layer. Its recorded value is the output
// after any directly following BatchNorm/ReLU layers. Conv2D neurons are
// channels, reduced by the spatial mean of the feature map.
struct TraceLayout {
  std::vector<std::size_t> layer_ids;
  std::vector<std::size_t> widths;
  std::vector<std::size_t> offsets;  // Prefix sums of widths.
  std::size_t neuron_count = 0;

  friend bool operator==(const TraceLayout&, const TraceLayout&) = default;
};

TraceLayout trace_layout(const Model& model);

struct ActivationTrace {
  std::vector<std::size_t> layer_ids;
  std::vector<std::vector<float>> values;  // One vector per traced layer.

  std::size_t neuron_count() const;
  friend bool operator==(const ActivationTrace&, const ActivationTrace&) = default;
};

struct ForwardOptions {
  // Reject NaN/Inf after every layer.
  bool checked = true;
};

struct ForwardResult {
  Tensor output;  // Probabilities when the model ends in Softmax.
  ActivationTrace trace;
};

ForwardResult forward_trace(const Model& model, const Tensor& input, ForwardOptions options = {});
Tensor forward(const Model& model, const Tensor& input, ForwardOptions options = {});

// Manifest I/O. Blobs are raw little-endian f32 written next to the manifest.
Model load_model(const std::filesystem::path& manifest_path);
void save_model(const Model& model, const std::filesystem::path& manifest_path);

struct MlpSpec {
  Shape input_shape;
  std::vector<std::size_t> hidden;
  std::size_t classes = 2;
  bool batchnorm = false;
};

// Flatten (when input rank > 1), then Dense[+BatchNorm]+ReLU per hidden width,
// then Dense+Softmax. He-uniform weights, zero biases.
Model build_mlp(const MlpSpec& spec, Rng& rng);

}  // namespace latentfuzz
