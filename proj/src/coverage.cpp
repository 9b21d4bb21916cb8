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

#include "latentfuzz/coverage.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "blob_io.hpp"
#include "latentfuzz/error.hpp"

namespace latentfuzz {

std::string_view criterion_name(Criterion c) {
  switch (c) {
    case Criterion::NC: return "nc";
    case Criterion::KMNC: return "kmnc";
    case Criterion::NBC: return "nbc";
    case Criterion::SNAC: return "snac";
    case Criterion::TKNC: return "tknc";
  }
  return "?";
}

Criterion parse_criterion(std::string_view name) {
  for (Criterion c : kAllCriteria) {
    if (criterion_name(c) == name) return c;
  }
  throw ConfigError("unknown coverage criterion '" + std::string(name) + "'");
}

NeuronId NeuronProfile::neuron(std::size_t flat) const {
  auto it = std::upper_bound(layout.offsets.begin(), layout.offsets.end(), flat);
  const std::size_t layer = static_cast<std::size_t>(it - layout.offsets.begin()) - 1;
  return {layer, flat - layout.offsets[layer]};
}

namespace {

void check_layout_match(const TraceLayout& layout, const ActivationTrace& trace) {
  if (trace.values.size() != layout.widths.size()) {
    throw ShapeError("trace has " + std::to_string(trace.values.size()) + " layers, expected " +
                     std::to_string(layout.widths.size()));
  }
  for (std::size_t l = 0; l < layout.widths.size(); ++l) {
    if (trace.values[l].size() != layout.widths[l]) {
      throw ShapeError("trace layer " + std::to_string(l) + " has " +
                       std::to_string(trace.values[l].size()) + " neurons, expected " +
                       std::to_string(layout.widths[l]));
    }
  }
}

}  // namespace

NeuronProfile profile_traces(const TraceLayout& layout, std::span<const ActivationTrace> traces) {
  if (traces.empty()) throw Error("cannot profile an empty dataset");
  NeuronProfile p;
  p.layout = layout;
  p.low.assign(layout.neuron_count, 0.0f);
  p.high.assign(layout.neuron_count, 0.0f);
  bool first = true;
  for (const auto& t : traces) {
    check_layout_match(layout, t);
    for (std::size_t l = 0; l < layout.widths.size(); ++l) {
      for (std::size_t k = 0; k < layout.widths[l]; ++k) {
        const std::size_t flat = layout.offsets[l] + k;
        const float v = t.values[l][k];
        if (first) {
          p.low[flat] = p.high[flat] = v;
        } else {
          p.low[flat] = std::min(p.low[flat], v);
          p.high[flat] = std::max(p.high[flat], v);
        }
      }
    }
    first = false;
  }
  return p;
}

NeuronProfile profile(const Model& model, const LabeledDataset& data) {
  if (data.empty()) throw Error("cannot profile an empty dataset");
  const TraceLayout layout = trace_layout(model);
  NeuronProfile p;
  p.layout = layout;
  p.low.assign(layout.neuron_count, 0.0f);
  p.high.assign(layout.neuron_count, 0.0f);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const ActivationTrace t = forward_trace(model, data.inputs[i]).trace;
    for (std::size_t l = 0; l < layout.widths.size(); ++l) {
      for (std::size_t k = 0; k < layout.widths[l]; ++k) {
        const std::size_t flat = layout.offsets[l] + k;
        const float v = t.values[l][k];
        p.low[flat] = i == 0 ? v : std::min(p.low[flat], v);
        p.high[flat] = i == 0 ? v : std::max(p.high[flat], v);
      }
    }
  }
  return p;
}

void save_profile(const NeuronProfile& profile, const std::filesystem::path& path) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < profile.layout.widths.size(); ++l) {
    layers.push_back({{"layer", profile.layout.layer_ids[l]}, {"width", profile.layout.widths[l]}});
  }
  nlohmann::json neurons = nlohmann::json::array();
  for (std::size_t i = 0; i < profile.neuron_count(); ++i) {
    const NeuronId id = profile.neuron(i);
    neurons.push_back({{"layer", id.layer_index},
                       {"neuron", id.neuron_index},
                       {"low", profile.low[i]},
                       {"high", profile.high[i]}});
  }
  io::write_json(path, {{"layers", layers}, {"neurons", neurons}});
}

NeuronProfile load_profile(const std::filesystem::path& path) {
  const nlohmann::json doc = io::read_json(path);
  NeuronProfile p;
  try {
    for (const auto& jl : doc.at("layers")) {
      p.layout.layer_ids.push_back(jl.at("layer").get<std::size_t>());
      p.layout.offsets.push_back(p.layout.neuron_count);
      p.layout.widths.push_back(jl.at("width").get<std::size_t>());
      p.layout.neuron_count += p.layout.widths.back();
    }
    p.low.assign(p.layout.neuron_count, 0.0f);
    p.high.assign(p.layout.neuron_count, 0.0f);
    std::vector<std::uint8_t> seen(p.layout.neuron_count, 0);
    for (const auto& jn : doc.at("neurons")) {
      const auto layer = jn.at("layer").get<std::size_t>();
      const auto neuron = jn.at("neuron").get<std::size_t>();
      if (layer >= p.layout.widths.size() || neuron >= p.layout.widths[layer]) {
        throw FormatError("profile neuron index out of range in " + path.string());
      }
      const std::size_t flat = p.layout.offsets[layer] + neuron;
      p.low[flat] = jn.at("low").get<float>();
      p.high[flat] = jn.at("high").get<float>();
      if (!(p.low[flat] <= p.high[flat])) {
        throw FormatError("profile has low > high for a neuron in " + path.string());
      }
      seen[flat] = 1;
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
      throw FormatError("profile does not cover every neuron: " + path.string());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid profile " + path.string() + ": " + e.what());
  }
  return p;
}

void CoverageConfig::validate() const {
  if (!(nc_threshold > 0.0 && nc_threshold < 1.0)) throw ConfigError("nc_threshold must lie in (0, 1)");
  if (kmnc_sections < 1) throw ConfigError("kmnc_sections must be >= 1");
  if (tknc_k < 1) throw ConfigError("tknc_k must be >= 1");
}

double CoverageValues::get(Criterion c) const {
  switch (c) {
    case Criterion::NC: return nc;
    case Criterion::KMNC: return kmnc;
    case Criterion::NBC: return nbc;
    case Criterion::SNAC: return snac;
    case Criterion::TKNC: return tknc;
  }
  return 0.0;
}

CoverageState::CoverageState(TraceLayout layout, CoverageConfig config)
    : layout_(std::move(layout)), config_(config) {
  config_.validate();
  const std::size_t n = layout_.neuron_count;
  units_[index(Criterion::NC)].assign(n, 0);
  units_[index(Criterion::KMNC)].assign(n * config_.kmnc_sections, 0);
  units_[index(Criterion::NBC)].assign(2 * n, 0);
  units_[index(Criterion::SNAC)].assign(n, 0);
  units_[index(Criterion::TKNC)].assign(n, 0);
}

std::size_t CoverageState::total(Criterion c) const { return units_[index(c)].size(); }

double CoverageState::value(Criterion c) const {
  const std::size_t t = total(c);
  return t == 0 ? 0.0 : static_cast<double>(counts_[index(c)]) / static_cast<double>(t);
}

CoverageValues CoverageState::values() const {
  return {value(Criterion::NC), value(Criterion::KMNC), value(Criterion::NBC),
          value(Criterion::SNAC), value(Criterion::TKNC)};
}

void CoverageState::check_trace(const ActivationTrace& trace) const {
  check_layout_match(layout_, trace);
}

void CoverageState::check_profile(const NeuronProfile& profile) const {
  if (profile.empty()) throw Error("coverage criterion needs a neuron profile");
  if (profile.layout.widths != layout_.widths) {
    throw ShapeError("neuron profile does not match the traced model");
  }
}

std::size_t CoverageState::mark(Criterion c, std::size_t unit) {
  auto& slot = units_[index(c)][unit];
  if (slot) return 0;
  slot = 1;
  ++counts_[index(c)];
  return 1;
}

std::size_t CoverageState::update_nc(const ActivationTrace& trace) {
  check_trace(trace);
  const auto threshold = static_cast<float>(config_.nc_threshold);
  std::size_t gained = 0;
  for (std::size_t l = 0; l < trace.values.size(); ++l) {
    const auto& v = trace.values[l];
    if (v.empty()) continue;
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const float lo = *lo_it, hi = *hi_it;
    if (hi == lo) continue;
    // Single-precision arithmetic on the recorded float activations.
    const float range = hi - lo;
    for (std::size_t k = 0; k < v.size(); ++k) {
      const float scaled = (v[k] - lo) / range;
      if (scaled > threshold) gained += mark(Criterion::NC, layout_.offsets[l] + k);
    }
  }
  return gained;
}

std::size_t CoverageState::update_kmnc(const ActivationTrace& trace, const NeuronProfile& profile) {
  check_trace(trace);
  check_profile(profile);
  const std::size_t sections = config_.kmnc_sections;
  std::size_t gained = 0;
  for (std::size_t l = 0; l < trace.values.size(); ++l) {
    for (std::size_t k = 0; k < trace.values[l].size(); ++k) {
      const std::size_t flat = layout_.offsets[l] + k;
      const float x = trace.values[l][k];
      const float lo = profile.low[flat], hi = profile.high[flat];
      std::size_t section;
      if (lo == hi) {
        if (x != lo) continue;
        section = 0;
      } else {
        if (x < lo || x > hi) continue;
        const double pos = (static_cast<double>(x) - lo) / (static_cast<double>(hi) - lo) *
                           static_cast<double>(sections);
        section = std::min(sections - 1, static_cast<std::size_t>(std::floor(pos)));
      }
      gained += mark(Criterion::KMNC, flat * sections + section);
    }
  }
  return gained;
}

std::size_t CoverageState::update_nbc(const ActivationTrace& trace, const NeuronProfile& profile) {
  check_trace(trace);
  check_profile(profile);
  std::size_t gained = 0;
  for (std::size_t l = 0; l < trace.values.size(); ++l) {
    for (std::size_t k = 0; k < trace.values[l].size(); ++k) {
      const std::size_t flat = layout_.offsets[l] + k;
      const float x = trace.values[l][k];
      if (x < profile.low[flat]) gained += mark(Criterion::NBC, 2 * flat);
      if (x > profile.high[flat]) gained += mark(Criterion::NBC, 2 * flat + 1);
    }
  }
  return gained;
}

std::size_t CoverageState::update_snac(const ActivationTrace& trace, const NeuronProfile& profile) {
  check_trace(trace);
  check_profile(profile);
  std::size_t gained = 0;
  for (std::size_t l = 0; l < trace.values.size(); ++l) {
    for (std::size_t k = 0; k < trace.values[l].size(); ++k) {
      const std::size_t flat = layout_.offsets[l] + k;
      if (trace.values[l][k] > profile.high[flat]) gained += mark(Criterion::SNAC, flat);
    }
  }
  return gained;
}

std::size_t CoverageState::update_tknc(const ActivationTrace& trace) {
  check_trace(trace);
  std::size_t gained = 0;
  std::vector<std::size_t> order;
  for (std::size_t l = 0; l < trace.values.size(); ++l) {
    const auto& v = trace.values[l];
    order.resize(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t k = std::min(config_.tknc_k, v.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&v](std::size_t a, std::size_t b) { return v[a] > v[b] || (v[a] == v[b] && a < b); });
    for (std::size_t i = 0; i < k; ++i) gained += mark(Criterion::TKNC, layout_.offsets[l] + order[i]);
  }
  return gained;
}

CoverageGain CoverageState::update_all(const ActivationTrace& trace, const NeuronProfile& profile,
                                       Criterion objective) {
  CoverageGain g;
  g.gained[index(Criterion::NC)] = update_nc(trace);
  g.gained[index(Criterion::KMNC)] = update_kmnc(trace, profile);
  g.gained[index(Criterion::NBC)] = update_nbc(trace, profile);
  g.gained[index(Criterion::SNAC)] = update_snac(trace, profile);
  g.gained[index(Criterion::TKNC)] = update_tknc(trace);
  g.objective_gained = g[objective] > 0;
  return g;
}

}  // namespace latentfuzz
