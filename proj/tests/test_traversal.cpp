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

#include <cmath>

#include "latentfuzz/coverage.hpp"
#include "latentfuzz/dataset.hpp"
#include "latentfuzz/error.hpp"
#include "latentfuzz/manifold.hpp"
#include "latentfuzz/model.hpp"
#include "latentfuzz/quantize.hpp"
#include "latentfuzz/rng.hpp"
#include "latentfuzz/train.hpp"
#include "latentfuzz/traversal.hpp"
#include "support/oracles.hpp"

using namespace latentfuzz;

namespace {

// A small trained blob classifier with everything a campaign needs.
struct Fixture {
  LabeledDataset train, test;
  Model model;
  ManifoldModel manifold;
  NeuronProfile prof;

  Fixture() {
    const LabeledDataset all = gen_blobs({3, {1, 8, 8}, 60, 0.1, 1});
    std::tie(train, test) = split(all, 0.7, 2);
    Rng rng(3);
    model = train_sgd(build_mlp({{1, 8, 8}, {16, 8}, 3, false}, rng), train, {0.05, 10, 16, 4, 0.1}).model;
    manifold = build_pca_manifold(train, 4);
    prof = profile(model, train);
  }

  CampaignBindings bindings() const {
    CampaignBindings b;
    b.model = &model;
    b.profile = &prof;
    b.manifold = &manifold;
    b.corpus = split(test, 0.2, 5).first;
    return b;
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

FuzzConfig small_config(std::size_t steps) {
  FuzzConfig c;
  c.budget_steps = steps;
  c.rng_seed = 17;
  return c;
}

}  // namespace

TEST(Trajectory, FirstPointHasZeroCovariance) {
  const Trajectory t = update_trajectory(Trajectory(2), std::vector<double>{1.0, 2.0});
  EXPECT_EQ(t.t, 1u);
  EXPECT_EQ(t.mu, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(t.cov, (std::vector<double>(4, 0.0)));
}

TEST(Trajectory, TwoPointsGivePopulationCovariance) {
  Trajectory t(2);
  t = update_trajectory(t, std::vector<double>{0.0, 0.0});
  t = update_trajectory(t, std::vector<double>{2.0, 4.0});
  EXPECT_EQ(t.mu, (std::vector<double>{1.0, 2.0}));
  EXPECT_DOUBLE_EQ(t.cov[0], 1.0);
  EXPECT_DOUBLE_EQ(t.cov[1], 2.0);
  EXPECT_DOUBLE_EQ(t.cov[2], 2.0);
  EXPECT_DOUBLE_EQ(t.cov[3], 4.0);
}

TEST(Trajectory, MatchesBatchStatisticsAndStaysSymmetricPsd) {
  Rng rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    Trajectory t(8);
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 500; ++i) {
      std::vector<double> c(8);
      for (double& v : c) v = 2.0 * rng.normal() + 1.0;
      pts.push_back(c);
      t = update_trajectory(t, c);
    }
    const auto [mu, cov] = oracle::batch_mean_cov(pts);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(t.mu[i], mu[i], 1e-9);
    for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(t.cov[i], cov[i], 1e-9);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(t.cov[i * 8 + j], t.cov[j * 8 + i]);
    for (double ev : oracle::jacobi_eigen(t.cov, 8).values) EXPECT_GE(ev, -1e-12);
  }
}

TEST(SeedQueue, TiesPopInInsertionOrderAndDecayReorders) {
  SeedQueue q;
  const std::size_t a = q.push({{0.0}, 0}, SeedOrigin::Corpus);
  const std::size_t b = q.push({{1.0}, 0}, SeedOrigin::Corpus);
  const std::size_t c = q.push({{2.0}, 1}, SeedOrigin::Corpus);
  EXPECT_EQ(q.top()->id, a);
  EXPECT_EQ(q.top(a)->id, b);
  EXPECT_FALSE(q.decay(a, 0.9, 0.1));
  EXPECT_EQ(q.top()->id, b);
  EXPECT_FALSE(q.decay(b, 0.9, 0.1));
  EXPECT_EQ(q.top()->id, c);
  const auto order = q.ordered();
  ASSERT_EQ(order.size(), 3u);
  EXPECT_EQ(order[0]->id, c);
  EXPECT_EQ(order[1]->id, a);
  EXPECT_EQ(order[2]->id, b);
}

TEST(SeedQueue, TwentyTwoDecaysRetireASeed) {
  SeedQueue q;
  const std::size_t id = q.push({{0.0}, 0}, SeedOrigin::Corpus);
  // 0.9^21 = 0.109 stays; 0.9^22 = 0.098 < 0.1 retires.
  for (int i = 0; i < 21; ++i) ASSERT_FALSE(q.decay(id, 0.9, 0.1)) << i;
  EXPECT_TRUE(q.decay(id, 0.9, 0.1));
  EXPECT_TRUE(q.empty());
  EXPECT_EQ(q.find(id), nullptr);
}

TEST(SeedQueue, AcceptedSeedsInheritLineage) {
  SeedQueue q = init_queue(std::vector<LatentPoint>{{{0.0}, 0}, {{1.0}, 1}});
  const std::size_t child = q.push({{0.5}, 1}, SeedOrigin::Accepted, std::size_t{1});
  EXPECT_EQ(q.find(child)->lineage, 1u);
  const std::size_t root = q.push({{0.7}, 0}, SeedOrigin::Accepted);
  EXPECT_EQ(q.find(root)->lineage, root);
  EXPECT_THROW(init_queue(std::vector<LatentPoint>{}), Error);
}

TEST(Schedule, LambdaGrowsByDeltaAndCaps) {
  Schedule s{0.7995, 0.0005, 0.8};
  s.on_gain();
  EXPECT_DOUBLE_EQ(s.lambda, 0.8);
  s.on_gain();
  EXPECT_DOUBLE_EQ(s.lambda, 0.8);
  Schedule z;
  for (int i = 0; i < 4; ++i) z.on_gain();
  EXPECT_NEAR(z.lambda, 0.002, 1e-15);
  EXPECT_THROW((Schedule{0.0, 0.0005, 1.0}.validate()), ConfigError);
}

TEST(Campaign, ZeroLambdaAlwaysExplores) {
  FuzzConfig c = small_config(0);
  c.delta = 0.0;
  Campaign camp(c, fixture().bindings());
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const Candidate cand = camp.propose(rng);
    EXPECT_EQ(cand.provenance.kind, ProvenanceKind::Explore);
    EXPECT_TRUE(cand.new_lineage);
  }
}

TEST(Campaign, RandomStrategyNeverExploits) {
  FuzzConfig c = small_config(300);
  c.strategy = Strategy::Random;
  const CampaignReport r = run_campaign(c, fixture().bindings());
  EXPECT_EQ(r.exploit_steps, 0u);
  EXPECT_EQ(r.explore_steps, 300u);
}

TEST(Campaign, ExploitStepsFollowTrajectoryCovariance) {
  // Force exploitation and compare the spread of proposals with L L^T.
  FuzzConfig c = small_config(0);
  c.delta = 0.5;
  c.lambda_max = 0.99;
  c.try_num = 1000000;
  Campaign camp(c, fixture().bindings());
  while (camp.schedule().lambda < 0.99 && camp.steps_done() < 20000) camp.step_batch(32);
  ASSERT_GE(camp.trajectory().t, 2u);
  const Trajectory& t = camp.trajectory();
  Rng rng(9);
  std::vector<std::vector<double>> deltas;
  for (int i = 0; i < 20000; ++i) {
    const Candidate cand = camp.propose(rng);
    if (cand.provenance.kind != ProvenanceKind::Exploit) continue;
    const SeedEntry* seed = camp.queue().find(*cand.provenance.seed_id);
    std::vector<double> dz(t.dim());
    for (std::size_t k = 0; k < t.dim(); ++k) dz[k] = (cand.z.coords[k] - seed->z.coords[k]) / c.step_scale;
    deltas.push_back(dz);
  }
  ASSERT_GT(deltas.size(), 15000u);
  const auto [mu, cov] = oracle::batch_mean_cov(deltas);
  for (std::size_t k = 0; k < t.dim(); ++k) {
    const double expected = t.cov[k * t.dim() + k] + c.ridge;
    EXPECT_NEAR(cov[k * t.dim() + k] / expected, 1.0, 0.1) << "dim " << k;
  }
}

TEST(Campaign, DeterministicAcrossRunsAndThreadCounts) {
  FuzzConfig c = small_config(400);
  const CampaignReport a = run_campaign(c, fixture().bindings());
  const CampaignReport b = run_campaign(c, fixture().bindings());
  c.threads = 4;
  const CampaignReport p = run_campaign(c, fixture().bindings());
  for (const CampaignReport* r : {&b, &p}) {
    EXPECT_EQ(r->final_coverage, a.final_coverage);
    EXPECT_EQ(r->accepted, a.accepted);
    EXPECT_EQ(r->faults.size(), a.faults.size());
    ASSERT_EQ(r->lambda_history.size(), a.lambda_history.size());
    for (std::size_t i = 0; i < a.lambda_history.size(); ++i) {
      EXPECT_EQ(r->lambda_history[i].lambda, a.lambda_history[i].lambda);
    }
    for (std::size_t i = 0; i < a.faults.size(); ++i) EXPECT_EQ(r->faults[i].latent, a.faults[i].latent);
  }
}

TEST(Campaign, ZeroBudgetReportsInitialCoverage) {
  const CampaignReport r = run_campaign(small_config(0), fixture().bindings());
  EXPECT_EQ(r.steps, 0u);
  EXPECT_EQ(r.final_coverage, r.init_coverage);
  EXPECT_TRUE(r.faults.empty());
  EXPECT_EQ(r.coverage_curve.size(), 1u);
}

TEST(Campaign, CurveIsMonotoneAndLambdaInvariantsHold) {
  FuzzConfig c = small_config(1000);
  const CampaignReport r = run_campaign(c, fixture().bindings());
  EXPECT_EQ(r.steps, 1000u);
  EXPECT_EQ(r.exploit_steps + r.explore_steps, 1000u);
  for (std::size_t i = 1; i < r.coverage_curve.size(); ++i) {
    EXPECT_GT(r.coverage_curve[i].step, r.coverage_curve[i - 1].step);
    for (Criterion k : kAllCriteria) EXPECT_GE(r.coverage_curve[i].values.get(k), r.coverage_curve[i - 1].values.get(k));
  }
  EXPECT_EQ(r.coverage_curve.back().step, 1000u);
  double prev = 0.0;
  std::size_t gains = 0;
  for (const auto& s : r.lambda_history) {
    const double expected = s.gained ? std::min(c.lambda_max, prev + c.delta) : prev;
    EXPECT_NEAR(s.lambda, expected, 1e-12);
    EXPECT_LE(s.lambda, c.lambda_max);
    gains += s.gained;
    prev = s.lambda;
  }
  EXPECT_EQ(gains, r.accepted);
  for (const auto& f : r.faults) {
    EXPECT_TRUE(validate_input(f.input, fixture().manifold.valid_range));
    EXPECT_NE(f.predicted_label, f.seed_label);
  }
}

TEST(Campaign, BlackboxFitnessIsMonotonePerLineage) {
  const Fixture& f = fixture();
  const Model q = quantize(f.model, {LayerKind::Dense});
  CampaignBindings b = f.bindings();
  b.oracle = QuantDiff{&f.model, &q};
  FuzzConfig c = small_config(1500);
  c.mode = CampaignMode::BlackboxQuant;
  const CampaignReport r = run_campaign(c, b);
  std::map<std::size_t, double> best;
  for (const auto& s : r.fitness_history) {
    auto it = best.find(s.lineage);
    if (it != best.end()) EXPECT_GT(s.best, it->second);
    best[s.lineage] = s.best;
  }
  EXPECT_EQ(r.fitness_history.size(), r.accepted);
  for (const auto& fault : r.faults) {
    ASSERT_TRUE(fault.fitness.has_value());
    EXPECT_GE(*fault.fitness, 0.0);
    EXPECT_LE(*fault.fitness, 2.0);
    EXPECT_NE(fault.predictions[0].label, fault.predictions[1].label);
  }
}

TEST(Campaign, RejectsInconsistentConfiguration) {
  const Fixture& f = fixture();
  FuzzConfig c = small_config(10);
  c.mode = CampaignMode::BlackboxQuant;
  EXPECT_THROW(Campaign(c, f.bindings()), ConfigError);
  c = small_config(10);
  c.batch_size = 0;
  EXPECT_THROW(Campaign(c, f.bindings()), ConfigError);
  CampaignBindings b = f.bindings();
  b.corpus = {};
  EXPECT_THROW(Campaign(small_config(10), b), ConfigError);
  EXPECT_THROW(parse_strategy("annealing"), ConfigError);
}
