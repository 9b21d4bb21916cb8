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
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "latentfuzz/dataset.hpp"
#include "latentfuzz/model.hpp"
#include "latentfuzz/tensor.hpp"

namespace latentfuzz {

class Rng;

// A coordinate on the manifold of one class.
struct LatentPoint {
  std::vector<double> coords;
  int class_label = 0;

  friend bool operator==(const LatentPoint&, const LatentPoint&) = default;
};

struct ValueRange {
  float lo = 0.0f;
  float hi = 1.0f;

  friend bool operator==(const ValueRange&, const ValueRange&) = default;
};

// Linear manifold of one class: x = mean + components^T z. `components` is
// latent_dim rows of length data_size, orthonormal, ordered by descending
// eigenvalue, each with its first nonzero entry positive.
struct PcaBasis {
  std::vector<double> mean;
  std::vector<double> components;
  std::vector<double> eigenvalues;
};

// Gain and bias of one BatchNorm layer of a decoder for one class.
struct BnBankEntry {
  std::size_t layer = 0;
  Tensor gamma;
  Tensor beta;
};

// Decoder network with class-conditional BatchNorm. `decoder` maps a latent
// vector [latent_dim] to data_shape; `banks` holds the per-class BatchNorm
// gains/biases swapped in when decoding that class.
struct DecoderNet {
  Model decoder;
  std::map<int, std::vector<BnBankEntry>> banks;
  std::optional<Model> encoder;
  std::map<int, Model> per_class;  // decoder with the class bank applied
};

struct LatentSearchOptions {
  bool enabled = true;
  std::size_t candidates = 256;
  std::size_t rounds = 100;
  std::size_t golden_iterations = 30;
  double bracket = 1.0;  // Half width of each coordinate line search.
  std::uint64_t rng_seed = 0;
};

class ManifoldModel {
 public:
  std::size_t latent_dim = 0;
  Shape data_shape;
  ValueRange valid_range;
  std::map<int, PcaBasis> pca;      // Populated for PCA manifolds.
  std::optional<DecoderNet> net;    // Populated for decoder manifolds.
  LatentSearchOptions search;
  std::vector<std::string> notes;   // Warnings raised while building.

  bool is_pca() const { return !net.has_value(); }
  std::vector<int> classes() const;
  bool has_class(int label) const;
};

struct PcaOptions {
  ValueRange valid_range;
  // Eigenvalues at or below rank_tolerance * largest are treated as zero.
  double rank_tolerance = 1e-10;
};

// PCA manifold of one class. Requires >= d + 1 samples of the class. When d
// exceeds the numerical rank, d is reduced and a note is recorded.
ManifoldModel build_pca(const LabeledDataset& data, int class_label, std::size_t d,
                        const PcaOptions& options = {});

// One PCA basis per class present in `data`, all with a common latent_dim
// (the smallest reduced dimension across classes).
ManifoldModel build_pca_manifold(const LabeledDataset& data, std::size_t d,
                                 const PcaOptions& options = {});

// Decoder manifold. Every bank must name BatchNorm layers of `decoder`.
ManifoldModel make_decoder_manifold(Model decoder, std::map<int, std::vector<BnBankEntry>> banks,
                                    std::optional<Model> encoder, ValueRange valid_range);

LatentPoint encode(const ManifoldModel& m, const Tensor& x, int class_label);

struct Decoded {
  Tensor raw;      // Before clipping.
  Tensor clipped;  // Elementwise clipped into valid_range.
};

Decoded decode_full(const ManifoldModel& m, const LatentPoint& z);
Tensor decode(const ManifoldModel& m, const LatentPoint& z);

LatentPoint sample_prior(const ManifoldModel& m, Rng& rng, int class_label);

// Mean squared reconstruction error of decode(encode(x)) against x.
double reconstruction_mse(const ManifoldModel& m, const Tensor& x, int class_label);

// PCA: JSON header plus per-class f32 blobs. Decoder: JSON header referencing
// model manifests plus a per-class BatchNorm bank table.
void save_manifold(const ManifoldModel& m, const std::filesystem::path& path);
ManifoldModel load_manifold(const std::filesystem::path& path);

}  // namespace latentfuzz
