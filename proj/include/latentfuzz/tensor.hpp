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
#include <span>
#include <string>
#include <vector>

namespace latentfuzz {

using Shape = std::vector<std::size_t>;

std::size_t element_count(std::span<const std::size_t> shape);
std::string shape_to_string(std::span<const std::size_t> shape);

// Dense row-major array of 32-bit floats.
struct Tensor {
  Shape shape;
  std::vector<float> data;

  Tensor() = default;
  // Throws ShapeError when product(shape) != data.size().
  Tensor(Shape s, std::vector<float> d);

  static Tensor zeros(Shape s);

  std::size_t size() const { return data.size(); }
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// Index of the largest element; ties go to the lowest index.
std::size_t argmax(std::span<const float> values);

}  // namespace latentfuzz
