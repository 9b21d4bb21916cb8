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
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "latentfuzz/tensor.hpp"

namespace latentfuzz {

struct LabeledDataset {
  std::vector<Tensor> inputs;
  std::vector<int> labels;
  int class_count = 0;

  std::size_t size() const { return inputs.size(); }
  bool empty() const { return inputs.empty(); }
  const Shape& input_shape() const;

  // Equal lengths, uniform shapes, labels in [0, class_count).
  void validate() const;
};

struct BlobSpec {
  int classes = 3;
  Shape shape = {1, 16, 16};
  std::size_t per_class = 100;
  double spread = 0.05;
  std::uint64_t rng_seed = 0;
};

// Per class: an oriented grating with per-sample phase jitter (sd 10*spread
// rad) and contrast jitter (sd 4*spread), plus N(0, spread^2) pixel noise,
// clipped to [0, 1]. Spread 0 reproduces blob_template exactly.
LabeledDataset gen_blobs(const BlobSpec& spec);

// Template of `label` for the given class count and shape.
Tensor blob_template(int label, int classes, const Shape& shape);

// IDX images (magic 0x00000803) and labels (magic 0x00000801); pixels scaled
// to [0, 1]. Images load as [1, rows, cols].
LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path);

void write_idx_images(const std::filesystem::path& path, std::span<const std::uint8_t> pixels,
                      std::uint32_t count, std::uint32_t rows, std::uint32_t cols);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

// Deterministic stratified shuffle split. `fraction` of the samples go to the
// first half; every class with >= 2 samples appears in both halves.
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& data, double fraction,
                                                std::uint64_t rng_seed);

// Samples of one class, in order.
LabeledDataset filter_class(const LabeledDataset& data, int label);

}  // namespace latentfuzz
