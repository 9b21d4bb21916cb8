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

#include "latentfuzz/quantize.hpp"

#include <algorithm>
#include <cmath>

#include "latentfuzz/error.hpp"

namespace latentfuzz {

void quantize_tensor(Tensor& tensor) {
  float max_abs = 0.0f;
  for (float v : tensor.data) max_abs = std::max(max_abs, std::abs(v));
  if (max_abs == 0.0f) return;
  // w / scale is evaluated as w * 127 / max|w| so that exact halves such as
  // 0.5 / (1 / 127) = 63.5 are not perturbed by rounding of the scale.
  const double m = static_cast<double>(max_abs);
  for (float& v : tensor.data) {
    const double q = std::clamp(std::round(static_cast<double>(v) * 127.0 / m), -127.0, 127.0);
    v = static_cast<float>(q * m / 127.0);
  }
}

Model quantize(const Model& model, const std::set<LayerKind>& layer_kinds) {
  for (LayerKind k : layer_kinds) {
    if (k != LayerKind::Dense && k != LayerKind::Conv2D) {
      throw Error("only Dense and Conv2D layers can be quantized");
    }
  }
  validate_model(model, false);
  Model out = model;
  for (Layer& layer : out.layers) {
    if (!layer_kinds.contains(layer.kind)) continue;
    for (auto& p : layer.params) quantize_tensor(p.value);
  }
  return out;
}

}  // namespace latentfuzz
