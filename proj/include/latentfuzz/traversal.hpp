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
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "latentfuzz/coverage.hpp"
#include "latentfuzz/manifold.hpp"
#include "latentfuzz/model.hpp"
#include "latentfuzz/oracle.hpp"
#include "latentfuzz/report.hpp"
#include "latentfuzz/rng.hpp"

namespace latentfuzz {

// Running mean and population covariance of accepted latent coordinates.
struct Trajectory {
  std::size_t t = 0;
  std::vector<double> mu;
  std::vector<double> cov;  // d x d, row-major.

  Trajectory() = default;
  explicit Trajectory(std::size_t dim) : mu(dim, 0.0), cov(dim * dim, 0.0) {}
  std::size_t dim() const { return mu.size(); }
};

// With t = traj.t + 1:
//   cov_t = (t-1) cov_{t-1} / t + (t-1) (mu_{t-1} - c)(mu_{t-1} - c)^T / t^2
//   mu_t  = (1 - 1/t) mu_{t-1} + c / t
Trajectory update_trajectory(const Trajectory& traj, std::span<const double> c);

enum class SeedOrigin { Corpus, Accepted };

struct SeedEntry {
  std::size_t id = 0;
  LatentPoint z;
  double priority = 1.0;
  SeedOrigin origin = SeedOrigin::Corpus;
  std::size_t lineage = 0;  // Id of the corpus or exploration root.
};

// Max-priority queue; ties pop in insertion order. Seeds stay in the queue
// after selection and leave only when their priority decays below a threshold.
class SeedQueue {
 public:
  SeedQueue() = default;

  std::size_t push(LatentPoint z, SeedOrigin origin, std::optional<std::size_t> lineage = {});
  // Highest priority entry, optionally skipping one id. Null when none qualifies.
  const SeedEntry* top(std::optional<std::size_t> skip = {}) const;
  const SeedEntry* find(std::size_t id) const;
  // priority *= rho; removes the entry when it drops below p_min. Returns true on retirement.
  bool decay(std::size_t id, double rho, double p_min);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  // Entries in pop order.
  std::vector<const SeedEntry*> ordered() const;

 private:
  struct Key {
    double priority;
    std::size_t seq;
    bool operator<(const Key& o) const {
      return priority != o.priority ? priority > o.priority : seq < o.seq;
    }
  };
  std::map<std::size_t, SeedEntry> entries_;
  std::map<std::size_t, std::size_t> seq_of_;
  std::set<std::pair<Key, std::size_t>> order_;
  std::size_t next_id_ = 0;
};

// All entries priority 1.0. Throws on an empty corpus.
SeedQueue init_queue(std::span<const LatentPoint> corpus);

struct Schedule {
  double lambda = 0.0;
  double delta = 0.0005;
  double lambda_max = 0.8;

  // lambda <- min(lambda_max, lambda + delta).
  void on_gain();
  void validate() const;
};

enum class Strategy { Trajectory, Random };
enum class CampaignMode { Graybox, BlackboxQuant };

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);
std::string_view mode_name(CampaignMode m);
CampaignMode parse_mode(std::string_view name);

struct FuzzConfig {
  Criterion objective = Criterion::NC;
  CampaignMode mode = CampaignMode::Graybox;
  std::size_t budget_steps = 10000;
  double budget_seconds = 0.0;  // 0 disables the wall-clock budget.
  std::size_t try_num = 50;
  std::size_t batch_size = 32;
  double step_scale = 0.5;
  double ridge = 1e-6;
  double priority_decay = 0.9;
  double min_priority = 0.1;
  double delta = 0.0005;
  double lambda_max = 0.8;
  Strategy strategy = Strategy::Trajectory;
  std::optional<int> explore_class;  // Unset: uniform over corpus classes.
  std::uint64_t rng_seed = 0;
  std::size_t threads = 1;  // Parallel candidate evaluation within a batch.

  void validate() const;
};

// Everything a campaign reads. Pointers must outlive the campaign.
struct CampaignBindings {
  const Model* model = nullptr;            // Traced model (coverage source).
  const NeuronProfile* profile = nullptr;
  const ManifoldModel* manifold = nullptr;
  OracleSpec oracle = LabelConsistency{};  // expected_label is taken from each candidate.
  LabeledDataset corpus;                   // Seed inputs; encoded onto the manifold.
  CoverageConfig coverage;
};

enum class ProvenanceKind { Exploit, Explore };

struct Provenance {
  ProvenanceKind kind = ProvenanceKind::Explore;
  std::optional<std::size_t> seed_id;
};

struct Candidate {
  LatentPoint z;
  Provenance provenance;
  std::size_t lineage = 0;
  bool new_lineage = false;
};

struct StepOutcome {
  std::size_t step = 0;
  Provenance provenance;
  bool accepted = false;
  bool skipped = false;
  CoverageGain gain;
  std::optional<double> fitness;
  std::size_t faults_found = 0;
  double lambda_after = 0.0;

  friend bool operator==(const StepOutcome& a, const StepOutcome& b) {
    return a.step == b.step && a.provenance.kind == b.provenance.kind &&
           a.provenance.seed_id == b.provenance.seed_id && a.accepted == b.accepted &&
           a.skipped == b.skipped && a.gain.gained == b.gain.gained &&
           a.gain.objective_gained == b.gain.objective_gained && a.fitness == b.fitness &&
           a.faults_found == b.faults_found && a.lambda_after == b.lambda_after;
  }
};

class Campaign {
 public:
  // Validates bindings, encodes the corpus, and records its coverage as the
  // initial state. Throws ConfigError on invalid configuration.
  Campaign(FuzzConfig config, CampaignBindings bindings);

  // Proposes one candidate from the current state.
  Candidate propose(Rng& rng);
  // One full step: propose, evaluate, accept or decay.
  StepOutcome step();
  // Proposes `n` candidates from the current state, evaluates them (in
  // parallel when configured), then processes them in index order.
  std::vector<StepOutcome> step_batch(std::size_t n);
  // Runs until the step or wall-clock budget is exhausted.
  CampaignReport run();

  const Trajectory& trajectory() const { return trajectory_; }
  const SeedQueue& queue() const { return queue_; }
  const Schedule& schedule() const { return schedule_; }
  const CoverageState& coverage() const { return coverage_; }
  const CampaignReport& report() const { return report_; }
  std::size_t steps_done() const { return steps_; }

 private:
  struct Evaluation {
    Decoded decoded;
    ForwardResult forward;
    Verdict verdict;
    std::optional<double> fitness;
    std::string error;
  };

  Evaluation evaluate(const Candidate& c) const;
  StepOutcome process(const Candidate& c, Evaluation& e);
  Eigen::VectorXd trajectory_step(Rng& rng);
  int explore_label(Rng& rng);
  void sample_curve();

  FuzzConfig config_;
  CampaignBindings bindings_;
  Rng rng_;
  SeedQueue queue_;
  Trajectory trajectory_;
  Schedule schedule_;
  CoverageState coverage_;
  CampaignReport report_;
  std::vector<int> classes_;
  std::map<std::size_t, double> lineage_best_;
  double global_best_ = 0.0;
  std::size_t steps_ = 0;
  std::optional<std::size_t> last_seed_;
  std::size_t consecutive_ = 0;
  // Cholesky factor of cov + ridge * I, refreshed when the trajectory changes.
  Eigen::MatrixXd factor_;
  std::size_t factor_t_ = static_cast<std::size_t>(-1);
};

CampaignReport run_campaign(const FuzzConfig& config, const CampaignBindings& bindings);

}  // namespace latentfuzz
