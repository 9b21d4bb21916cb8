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

#include <gtest/gtest.h>

#include <algorithm>

#include "latentfuzz/coverage.hpp"
#include "latentfuzz/error.hpp"
#include "latentfuzz/model.hpp"
#include "latentfuzz/rng.hpp"
#include "support/oracles.hpp"

using namespace latentfuzz;

namespace {

TraceLayout single_layer(std::size_t width) {
  return {{0}, {width}, {0}, width};
}

ActivationTrace trace_of(std::vector<float> v) {
  return {{0}, {std::move(v)}};
}

NeuronProfile flat_profile(std::size_t width, float lo, float hi) {
  return {single_layer(width), std::vector<float>(width, lo), std::vector<float>(width, hi)};
}

}  // namespace

TEST(Coverage, NcCountsStrictlyAboveThresholdAfterRescaling) {
  CoverageState s(single_layer(4), {});
  // Scaled: 0, 0.75, 0.25, 1 -> only the last exceeds 0.75 strictly.
  EXPECT_EQ(s.update_nc(trace_of({0.2f, 0.8f, 0.4f, 1.0f})), 1u);
  EXPECT_DOUBLE_EQ(s.value(Criterion::NC), 0.25);
}

TEST(Coverage, NcConstantLayerCoversNothing) {
  CoverageState s(single_layer(3), {});
  EXPECT_EQ(s.update_nc(trace_of({0.5f, 0.5f, 0.5f})), 0u);
}

TEST(Coverage, KmncSectionsIncludingUpperEdge) {
  CoverageConfig cfg;
  cfg.kmnc_sections = 4;
  CoverageState s(single_layer(3), cfg);
  const NeuronProfile p = flat_profile(3, 0.0f, 1.0f);
  // 0.1 -> section 0, 0.5 -> section 2, 1.0 -> clamped to section 3.
  EXPECT_EQ(s.update_kmnc(trace_of({0.1f, 0.5f, 1.0f}), p), 3u);
  const auto& u = s.units(Criterion::KMNC);
  EXPECT_TRUE(u[0 * 4 + 0]);
  EXPECT_TRUE(u[1 * 4 + 2]);
  EXPECT_TRUE(u[2 * 4 + 3]);
  EXPECT_DOUBLE_EQ(s.value(Criterion::KMNC), 3.0 / 12.0);
  // Outside the profile contributes nothing.
  EXPECT_EQ(s.update_kmnc(trace_of({-0.1f, 1.1f, 2.0f}), p), 0u);
}

TEST(Coverage, KmncZeroWidthRangeCoversOnlyAtLow) {
  CoverageConfig cfg;
  cfg.kmnc_sections = 10;
  CoverageState s(single_layer(2), cfg);
  const NeuronProfile p = flat_profile(2, 0.3f, 0.3f);
  EXPECT_EQ(s.update_kmnc(trace_of({0.3f, 0.31f}), p), 1u);
  EXPECT_TRUE(s.units(Criterion::KMNC)[0]);
}

TEST(Coverage, NbcAndSnacUseStrictCorners) {
  CoverageState s(single_layer(3), {});
  const NeuronProfile p = flat_profile(3, 0.0f, 1.0f);
  EXPECT_EQ(s.update_nbc(trace_of({-0.5f, 1.0f, 1.5f}), p), 2u);
  EXPECT_TRUE(s.units(Criterion::NBC)[0]);      // Neuron 0 lower.
  EXPECT_TRUE(s.units(Criterion::NBC)[2 * 2 + 1]);  // Neuron 2 upper.
  EXPECT_DOUBLE_EQ(s.value(Criterion::NBC), 2.0 / 6.0);
  EXPECT_EQ(s.update_snac(trace_of({-0.5f, 1.0f, 1.5f}), p), 1u);
  EXPECT_DOUBLE_EQ(s.value(Criterion::SNAC), 1.0 / 3.0);
}

TEST(Coverage, TkncPicksTopKWithLowestIndexOnTies) {
  CoverageConfig cfg;
  cfg.tknc_k = 2;
  CoverageState s(single_layer(4), cfg);
  EXPECT_EQ(s.update_tknc(trace_of({1.0f, 3.0f, 2.0f, 0.0f})), 2u);
  EXPECT_TRUE(s.units(Criterion::TKNC)[1]);
  EXPECT_TRUE(s.units(Criterion::TKNC)[2]);

  CoverageState t(single_layer(4), cfg);
  t.update_tknc(trace_of({5.0f, 5.0f, 5.0f, 1.0f}));
  EXPECT_TRUE(t.units(Criterion::TKNC)[0]);
  EXPECT_TRUE(t.units(Criterion::TKNC)[1]);
  EXPECT_FALSE(t.units(Criterion::TKNC)[2]);
}

TEST(Coverage, RejectsMismatchedTraceAndBadConfig) {
  CoverageState s(single_layer(3), {});
  EXPECT_THROW(s.update_nc(trace_of({1.0f, 2.0f})), Error);
  CoverageConfig bad;
  bad.nc_threshold = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = {};
  bad.kmnc_sections = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Profile, MinMaxPerNeuron) {
  const TraceLayout layout = single_layer(2);
  const std::vector<ActivationTrace> traces = {trace_of({1.0f, -2.0f}), trace_of({3.0f, 0.5f}), trace_of({2.0f, 4.0f})};
  const NeuronProfile p = profile_traces(layout, traces);
  EXPECT_EQ(p.low, (std::vector<float>{1.0f, -2.0f}));
  EXPECT_EQ(p.high, (std::vector<float>{3.0f, 4.0f}));
  EXPECT_THROW(profile_traces(layout, {}), Error);
}

TEST(Profile, JsonRoundTrip) {
  Rng rng(31);
  const Model m = oracle::random_mlp(rng, 4, {5, 3}, 2, false);
  LabeledDataset d;
  d.class_count = 2;
  for (int i = 0; i < 30; ++i) {
    d.inputs.push_back(Tensor({4}, oracle::random_vector(rng, 4, 0.0, 1.0)));
    d.labels.push_back(i % 2);
  }
  const NeuronProfile p = profile(m, d);
  const auto dir = oracle::scratch_dir("profile_roundtrip");
  save_profile(p, dir / "p.json");
  EXPECT_EQ(load_profile(dir / "p.json"), p);
  EXPECT_EQ(p.neuron(6).layer_index, 1u);
  EXPECT_EQ(p.neuron(6).neuron_index, 1u);
}

// Incremental coverage on random traces equals the brute-force set oracle,
// never decreases, and does not depend on trace order.
TEST(CoverageProperty, MatchesBruteForceMonotoneAndOrderFree) {
  Rng rng(32);
  const Model m = oracle::random_mlp(rng, 6, {10, 7}, 4, false);
  const TraceLayout layout = trace_layout(m);
  std::vector<ActivationTrace> all;
  for (int i = 0; i < 200; ++i) all.push_back(forward_trace(m, Tensor({6}, oracle::random_vector(rng, 6, 0.0, 1.0))).trace);
  const std::vector<ActivationTrace> prof(all.begin(), all.begin() + 100);
  const NeuronProfile p = profile_traces(layout, prof);
  CoverageConfig cfg;
  cfg.kmnc_sections = 20;
  cfg.tknc_k = 3;

  CoverageState s(layout, cfg);
  CoverageValues prev;
  for (const auto& t : all) {
    s.update_all(t, p, Criterion::NC);
    const CoverageValues v = s.values();
    for (Criterion c : kAllCriteria) EXPECT_GE(v.get(c), prev.get(c));
    prev = v;
  }
  const auto brute = oracle::brute_coverage(all, p.low, p.high, cfg);
  EXPECT_EQ(s.values(), brute.values());

  std::vector<ActivationTrace> shuffled = all;
  for (std::size_t i = shuffled.size() - 1; i > 0; --i) std::swap(shuffled[i], shuffled[rng.below(i + 1)]);
  CoverageState r(layout, cfg);
  for (const auto& t : shuffled) r.update_all(t, p, Criterion::NC);
  for (Criterion c : kAllCriteria) EXPECT_EQ(r.units(c), s.units(c));

  // SNAC covers exactly the upper corners of NBC.
  for (std::size_t n = 0; n < layout.neuron_count; ++n) {
    EXPECT_EQ(s.units(Criterion::SNAC)[n], s.units(Criterion::NBC)[2 * n + 1]);
  }
}

TEST(CoverageProperty, UpdateAllReportsObjectiveGain) {
  CoverageState s(single_layer(4), {});
  const NeuronProfile p = flat_profile(4, 0.0f, 1.0f);
  const CoverageGain g = s.update_all(trace_of({0.2f, 0.8f, 0.4f, 1.0f}), p, Criterion::NC);
  EXPECT_TRUE(g.objective_gained);
  EXPECT_EQ(g[Criterion::NC], 1u);
  const CoverageGain again = s.update_all(trace_of({0.2f, 0.8f, 0.4f, 1.0f}), p, Criterion::NC);
  EXPECT_FALSE(again.objective_gained);
}

TEST(Criterion, NamesRoundTrip) {
  for (Criterion c : kAllCriteria) EXPECT_EQ(parse_criterion(criterion_name(c)), c);
  EXPECT_THROW(parse_criterion("mcdc"), ConfigError);
}
