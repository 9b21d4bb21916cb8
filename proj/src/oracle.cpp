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

#include "latentfuzz/oracle.hpp"

#include <cmath>

#include "latentfuzz/error.hpp"

namespace latentfuzz {

namespace {

void require_probabilities(std::span<const float> probs) {
  if (probs.empty()) throw Error("empty probability vector");
  double sum = 0.0;
  for (float p : probs) {
    if (!std::isfinite(p) || p < 0.0f || p > 1.0f) throw Error("output is not a probability vector");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-5) throw Error("output is not a probability vector");
}

ModelPrediction predict(std::span<const float> output) {
  return {static_cast<int>(argmax(output)), std::vector<float>(output.begin(), output.end())};
}

}  // namespace

std::string_view oracle_kind_name(OracleKind kind) {
  switch (kind) {
    case OracleKind::LabelConsistency: return "label_consistency";
    case OracleKind::Differential: return "differential";
    case OracleKind::QuantDiff: return "quant_diff";
  }
  return "?";
}

OracleKind oracle_kind(const OracleSpec& spec) { return static_cast<OracleKind>(spec.index()); }

void validate_oracle(const OracleSpec& spec) {
  if (const auto* d = std::get_if<Differential>(&spec)) {
    if (d->models.size() < 2) throw ConfigError("differential oracle needs at least 2 models");
    for (const Model* m : d->models) {
      if (!m) throw ConfigError("differential oracle has a null model");
      if (m->input_shape != d->models.front()->input_shape) {
        throw ConfigError("differential models disagree on input shape");
      }
    }
    if (!(d->tolerance >= 0.0)) throw ConfigError("differential tolerance must be >= 0");
  } else if (const auto* q = std::get_if<QuantDiff>(&spec)) {
    if (!q->original || !q->quantized) throw ConfigError("quantized differential needs two models");
    if (q->original->input_shape != q->quantized->input_shape) {
      throw ConfigError("quantized differential models disagree on input shape");
    }
  }
}

Verdict check_label_consistency(std::span<const float> probs, int expected) {
  require_probabilities(probs);
  Verdict v;
  v.predictions.push_back(predict(probs));
  v.is_fault = v.predictions[0].label != expected;
  if (v.is_fault) v.erroneous_label = v.predictions[0].label;
  return v;
}

Verdict check_differential(std::span<const Tensor> outputs, Agreement agreement, double tolerance) {
  if (outputs.size() < 2) throw Error("differential check needs at least 2 outputs");
  for (const auto& o : outputs) {
    if (o.shape != outputs.front().shape) throw Error("differential outputs are of mixed kinds");
  }
  Verdict v;
  for (const auto& o : outputs) v.predictions.push_back(predict(o.data));
  if (agreement == Agreement::ExactLabel) {
    for (std::size_t i = 1; i < v.predictions.size(); ++i) {
      if (v.predictions[i].label != v.predictions[0].label) {
        v.is_fault = true;
        v.erroneous_label = v.predictions[i].label;
        break;
      }
    }
  } else {
    double worst = 0.0;
    for (std::size_t i = 0; i < outputs.size(); ++i)
      for (std::size_t j = i + 1; j < outputs.size(); ++j)
        for (std::size_t k = 0; k < outputs[i].data.size(); ++k) {
          worst = std::max(worst, std::abs(static_cast<double>(outputs[i].data[k]) -
                                           static_cast<double>(outputs[j].data[k])));
        }
    v.is_fault = worst > tolerance;
  }
  return v;
}

QuantFitness quant_fitness(std::span<const float> p_orig, std::span<const float> p_quant) {
  if (p_orig.size() != p_quant.size()) throw Error("probability vectors differ in length");
  require_probabilities(p_orig);
  require_probabilities(p_quant);
  QuantFitness out;
  for (std::size_t i = 0; i < p_orig.size(); ++i) {
    out.fitness += std::abs(static_cast<double>(p_orig[i]) - static_cast<double>(p_quant[i]));
  }
  out.verdict.predictions = {predict(p_orig), predict(p_quant)};
  out.verdict.fitness = out.fitness;
  out.verdict.is_fault = out.verdict.predictions[0].label != out.verdict.predictions[1].label;
  if (out.verdict.is_fault) out.verdict.erroneous_label = out.verdict.predictions[1].label;
  return out;
}

bool validate_input(const Tensor& x, ValueRange range) {
  for (float v : x.data) {
    if (!std::isfinite(v) || v < range.lo || v > range.hi) return false;
  }
  return true;
}

}  // namespace latentfuzz
