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

#include <set>

#include "latentfuzz/model.hpp"

namespace latentfuzz {

// Simulated symmetric int8 quantization. Every parameter tensor of each
// selected layer is mapped per tensor to q = clamp(round(w / scale), -127, 127)
// with scale = max|w| / 127 and stored back as q * scale. All-zero tensors and
// unselected layers are left unchanged. The result is a fixed point:
// quantize(quantize(m)) == quantize(m) bit for bit.
Model quantize(const Model& model, const std::set<LayerKind>& layer_kinds);

// The quantize/dequantize rule applied to one tensor.
void quantize_tensor(Tensor& tensor);

}  // namespace latentfuzz
