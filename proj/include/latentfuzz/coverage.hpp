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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "latentfuzz/dataset.hpp"
#include "latentfuzz/model.hpp"

namespace latentfuzz {

enum class Criterion { NC, KMNC, NBC, SNAC, TKNC };
inline constexpr std::array<Criterion, 5> kAllCriteria = {Criterion::NC, Criterion::KMNC,
                                                          Criterion::NBC, Criterion::SNAC,
                                                          Criterion::TKNC};

std::string_view criterion_name(Criterion c);  // "nc", "kmnc", ...
Criterion parse_criterion(std::string_view name);

struct NeuronId {
  std::size_t layer_index = 0;   // Position among traced layers.
  std::size_t neuron_index = 0;  // Position within that layer.
};

// Per-neuron [low, high] over a profiling dataset, flattened in trace order.
struct NeuronProfile {
  TraceLayout layout;
  std::vector<float> low;
  std::vector<float> high;

  bool empty() const { return low.empty(); }
  std::size_t neuron_count() const { return low.size(); }
  NeuronId neuron(std::size_t flat) const;

  friend bool operator==(const NeuronProfile&, const NeuronProfile&) = default;
};

NeuronProfile profile(const Model& model, const LabeledDataset& data);
NeuronProfile profile_traces(const TraceLayout& layout, std::span<const ActivationTrace> traces);

// JSON: {"layers": [{"layer", "width"}...], "neurons": [{"layer", "neuron", "low", "high"}...]}
void save_profile(const NeuronProfile& profile, const std::filesystem::path& path);
NeuronProfile load_profile(const std::filesystem::path& path);

struct CoverageConfig {
  double nc_threshold = 0.75;
  std::size_t kmnc_sections = 1000;
  std::size_t tknc_k = 10;

  void validate() const;
};

struct CoverageValues {
  double nc = 0.0, kmnc = 0.0, nbc = 0.0, snac = 0.0, tknc = 0.0;

  double get(Criterion c) const;
  friend bool operator==(const CoverageValues&, const CoverageValues&) = default;
};

struct CoverageGain {
  std::array<std::size_t, 5> gained{};  // Indexed by Criterion.
  bool objective_gained = false;

  std::size_t operator[](Criterion c) const { return gained[static_cast<std::size_t>(c)]; }
};

// Covered-unit sets for the five criteria. Units only ever get added.
//   NC    one unit per neuron
//   KMNC  neuron * sections + section
//   NBC   2 * neuron (lower corner), 2 * neuron + 1 (upper corner)
//   SNAC  one unit per neuron (upper corner)
//   TKNC  one unit per neuron
class CoverageState {
 public:
  CoverageState() = default;
  CoverageState(TraceLayout layout, CoverageConfig config);

  std::size_t update_nc(const ActivationTrace& trace);
  std::size_t update_kmnc(const ActivationTrace& trace, const NeuronProfile& profile);
  std::size_t update_nbc(const ActivationTrace& trace, const NeuronProfile& profile);
  std::size_t update_snac(const ActivationTrace& trace, const NeuronProfile& profile);
  std::size_t update_tknc(const ActivationTrace& trace);

  CoverageGain update_all(const ActivationTrace& trace, const NeuronProfile& profile,
                          Criterion objective);

  double value(Criterion c) const;
  CoverageValues values() const;
  std::size_t covered(Criterion c) const { return counts_[index(c)]; }
  std::size_t total(Criterion c) const;
  const std::vector<std::uint8_t>& units(Criterion c) const { return units_[index(c)]; }

  const TraceLayout& layout() const { return layout_; }
  const CoverageConfig& config() const { return config_; }

 private:
  static std::size_t index(Criterion c) { return static_cast<std::size_t>(c); }
  void check_trace(const ActivationTrace& trace) const;
  void check_profile(const NeuronProfile& profile) const;
  std::size_t mark(Criterion c, std::size_t unit);

  TraceLayout layout_;
  CoverageConfig config_;
  std::array<std::vector<std::uint8_t>, 5> units_;
  std::array<std::size_t, 5> counts_{};
};

}  // namespace latentfuzz
