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

#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "latentfuzz/manifold.hpp"
#include "latentfuzz/model.hpp"
#include "latentfuzz/tensor.hpp"

namespace latentfuzz {

struct LabelConsistency {
  int expected_label = 0;
};

enum class Agreement { ExactLabel, NumericTolerance };

struct Differential {
  std::vector<const Model*> models;
  Agreement agreement = Agreement::ExactLabel;
  double tolerance = 0.0;
};

struct QuantDiff {
  const Model* original = nullptr;
  const Model* quantized = nullptr;
};

using OracleSpec = std::variant<LabelConsistency, Differential, QuantDiff>;

enum class OracleKind { LabelConsistency, Differential, QuantDiff };
std::string_view oracle_kind_name(OracleKind kind);
OracleKind oracle_kind(const OracleSpec& spec);

// Throws ConfigError when the oracle is not usable: fewer than two
// differential models, mismatched input shapes, negative tolerance, or
// missing quantized-diff models.
void validate_oracle(const OracleSpec& spec);

struct ModelPrediction {
  int label = 0;
  std::vector<float> output;

  friend bool operator==(const ModelPrediction&, const ModelPrediction&) = default;
};

struct Verdict {
  bool is_fault = false;
  std::vector<ModelPrediction> predictions;
  std::optional<double> fitness;  // Present only for quantized differential checks.
  // Erroneous predicted class for diversity accounting; -1 when not a class.
  int erroneous_label = -1;
};

// Fault iff argmax(probs) != expected. Throws when probs is not a probability
// vector (components in [0,1], sum within 1e-5 of 1).
Verdict check_label_consistency(std::span<const float> probs, int expected);

// Exact-label mode: fault iff any argmax differs. Numeric mode: fault iff the
// largest pairwise elementwise |a_i - a_j| exceeds the tolerance.
Verdict check_differential(std::span<const Tensor> outputs, Agreement agreement, double tolerance);

struct QuantFitness {
  double fitness = 0.0;  // L1 distance, in [0, 2].
  Verdict verdict;
};

QuantFitness quant_fitness(std::span<const float> p_orig, std::span<const float> p_quant);

// True iff every element is finite and inside [lo, hi].
bool validate_input(const Tensor& x, ValueRange range);

}  // namespace latentfuzz
