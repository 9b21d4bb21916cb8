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

#include "latentfuzz/traversal.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "latentfuzz/error.hpp"

namespace latentfuzz {

Trajectory update_trajectory(const Trajectory& traj, std::span<const double> c) {
  const std::size_t d = traj.dim();
  if (c.size() != d) {
    throw ShapeError("trajectory has dimension " + std::to_string(d) + ", coordinate has " +
                     std::to_string(c.size()));
  }
  Trajectory next(d);
  next.t = traj.t + 1;
  const double t = static_cast<double>(next.t);
  const double keep = (t - 1.0) / t;
  const double outer = (t - 1.0) / (t * t);
  std::vector<double> diff(d);
  for (std::size_t i = 0; i < d; ++i) diff[i] = traj.mu[i] - c[i];
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      next.cov[i * d + j] = keep * traj.cov[i * d + j] + outer * (diff[i] * diff[j]);
    }
  }
  for (std::size_t i = 0; i < d; ++i) next.mu[i] = (1.0 - 1.0 / t) * traj.mu[i] + c[i] / t;
  return next;
}

// ---------------------------------------------------------------------------

std::size_t SeedQueue::push(LatentPoint z, SeedOrigin origin, std::optional<std::size_t> lineage) {
  const std::size_t id = next_id_++;
  SeedEntry e{id, std::move(z), 1.0, origin, lineage.value_or(id)};
  order_.insert({Key{e.priority, id}, id});
  seq_of_[id] = id;
  entries_.emplace(id, std::move(e));
  return id;
}

const SeedEntry* SeedQueue::top(std::optional<std::size_t> skip) const {
  for (const auto& [key, id] : order_) {
    if (skip && id == *skip) continue;
    return &entries_.at(id);
  }
  return nullptr;
}

const SeedEntry* SeedQueue::find(std::size_t id) const {
  auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : &it->second;
}

bool SeedQueue::decay(std::size_t id, double rho, double p_min) {
  auto it = entries_.find(id);
  if (it == entries_.end()) return false;
  SeedEntry& e = it->second;
  order_.erase({Key{e.priority, seq_of_.at(id)}, id});
  e.priority *= rho;
  if (e.priority < p_min) {
    entries_.erase(it);
    seq_of_.erase(id);
    return true;
  }
  order_.insert({Key{e.priority, seq_of_.at(id)}, id});
  return false;
}

std::vector<const SeedEntry*> SeedQueue::ordered() const {
  std::vector<const SeedEntry*> out;
  for (const auto& [key, id] : order_) out.push_back(&entries_.at(id));
  return out;
}

SeedQueue init_queue(std::span<const LatentPoint> corpus) {
  if (corpus.empty()) throw Error("seed corpus is empty");
  SeedQueue q;
  for (const auto& z : corpus) q.push(z, SeedOrigin::Corpus);
  return q;
}

void Schedule::on_gain() { lambda = std::min(lambda_max, lambda + delta); }

void Schedule::validate() const {
  if (!(delta >= 0.0)) throw ConfigError("delta must be >= 0");
  if (!(lambda_max >= 0.0 && lambda_max < 1.0)) throw ConfigError("lambda_max must lie in [0, 1)");
  if (!(lambda >= 0.0 && lambda <= lambda_max)) throw ConfigError("lambda must lie in [0, lambda_max]");
}

std::string_view strategy_name(Strategy s) { return s == Strategy::Trajectory ? "trajectory" : "random"; }

Strategy parse_strategy(std::string_view name) {
  if (name == "trajectory") return Strategy::Trajectory;
  if (name == "random") return Strategy::Random;
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

std::string_view mode_name(CampaignMode m) {
  return m == CampaignMode::Graybox ? "graybox" : "blackbox-quant";
}

CampaignMode parse_mode(std::string_view name) {
  if (name == "graybox") return CampaignMode::Graybox;
  if (name == "blackbox-quant") return CampaignMode::BlackboxQuant;
  throw ConfigError("unknown mode '" + std::string(name) + "'");
}

void FuzzConfig::validate() const {
  if (try_num < 1) throw ConfigError("try_num must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(step_scale > 0.0)) throw ConfigError("step_scale must be > 0");
  if (!(ridge >= 0.0)) throw ConfigError("ridge must be >= 0");
  if (!(priority_decay > 0.0 && priority_decay < 1.0)) throw ConfigError("priority_decay must lie in (0, 1)");
  if (!(min_priority > 0.0 && min_priority <= 1.0)) throw ConfigError("min_priority must lie in (0, 1]");
  if (!(budget_seconds >= 0.0)) throw ConfigError("budget_seconds must be >= 0");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  Schedule{0.0, delta, lambda_max}.validate();
}

// ---------------------------------------------------------------------------

Campaign::Campaign(FuzzConfig config, CampaignBindings bindings)
    : config_(std::move(config)), bindings_(std::move(bindings)), rng_(config_.rng_seed) {
  config_.validate();
  bindings_.coverage.validate();
  if (!bindings_.model || !bindings_.manifold || !bindings_.profile) {
    throw ConfigError("campaign needs a model, a manifold and a neuron profile");
  }
  validate_model(*bindings_.model);
  validate_oracle(bindings_.oracle);
  const OracleKind kind = oracle_kind(bindings_.oracle);
  if (config_.mode == CampaignMode::BlackboxQuant && kind != OracleKind::QuantDiff) {
    throw ConfigError("blackbox-quant mode requires the quant_diff oracle");
  }
  if (config_.mode == CampaignMode::Graybox && kind == OracleKind::QuantDiff) {
    throw ConfigError("the quant_diff oracle runs in blackbox-quant mode");
  }
  const ManifoldModel& manifold = *bindings_.manifold;
  if (manifold.data_shape != bindings_.model->input_shape) {
    throw ConfigError("manifold data shape " + shape_to_string(manifold.data_shape) +
                      " does not match model input " + shape_to_string(bindings_.model->input_shape));
  }
  const TraceLayout layout = trace_layout(*bindings_.model);
  if (bindings_.profile->layout.widths != layout.widths) {
    throw ConfigError("neuron profile does not match the model");
  }
  if (bindings_.corpus.empty()) throw ConfigError("seed corpus is empty");
  bindings_.corpus.validate();
  for (int label : bindings_.corpus.labels) {
    if (!manifold.has_class(label)) {
      throw ConfigError("corpus class " + std::to_string(label) + " has no manifold");
    }
    if (std::find(classes_.begin(), classes_.end(), label) == classes_.end()) classes_.push_back(label);
  }
  std::sort(classes_.begin(), classes_.end());
  if (config_.explore_class && !manifold.has_class(*config_.explore_class)) {
    throw ConfigError("explore_class " + std::to_string(*config_.explore_class) + " has no manifold");
  }

  coverage_ = CoverageState(layout, bindings_.coverage);
  trajectory_ = Trajectory(manifold.latent_dim);
  schedule_ = Schedule{0.0, config_.delta, config_.lambda_max};

  for (std::size_t i = 0; i < bindings_.corpus.size(); ++i) {
    const Tensor& x = bindings_.corpus.inputs[i];
    const int label = bindings_.corpus.labels[i];
    const ForwardResult fr = forward_trace(*bindings_.model, x);
    coverage_.update_all(fr.trace, *bindings_.profile, config_.objective);
    const std::size_t id = queue_.push(encode(manifold, x, label), SeedOrigin::Corpus);
    if (const auto* q = std::get_if<QuantDiff>(&bindings_.oracle)) {
      const Tensor po = forward(*q->original, x);
      const Tensor pq = forward(*q->quantized, x);
      lineage_best_[id] = quant_fitness(po.data, pq.data).fitness;
    }
  }

  report_.strategy = strategy_name(config_.strategy);
  report_.objective = criterion_name(config_.objective);
  report_.mode = mode_name(config_.mode);
  report_.oracle = oracle_kind_name(kind);
  report_.rng_seed = config_.rng_seed;
  report_.budget_steps = config_.budget_steps;
  report_.budget_seconds = config_.budget_seconds;
  report_.data_shape = manifold.data_shape;
  report_.valid_range = manifold.valid_range;
  report_.corpus_size = bindings_.corpus.size();
  report_.init_coverage = coverage_.values();
  report_.final_coverage = report_.init_coverage;
  report_.coverage_curve.push_back({0, report_.init_coverage});
  report_.queue_size = queue_.size();
}

int Campaign::explore_label(Rng& rng) {
  if (config_.explore_class) return *config_.explore_class;
  return classes_[rng.below(classes_.size())];
}

Eigen::VectorXd Campaign::trajectory_step(Rng& rng) {
  const auto d = static_cast<Eigen::Index>(trajectory_.dim());
  if (factor_t_ != trajectory_.t) {
    Eigen::MatrixXd m(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) m(i, j) = trajectory_.cov[static_cast<std::size_t>(i * d + j)];
    m.diagonal().array() += config_.ridge;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) {
      factor_ = llt.matrixL();
    } else {
      // Semi-definite fallback: V * sqrt(max(lambda, 0)).
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
      factor_ = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }
    factor_t_ = trajectory_.t;
  }
  Eigen::VectorXd n(d);
  for (Eigen::Index i = 0; i < d; ++i) n[i] = rng.normal();
  return factor_ * n;
}

Candidate Campaign::propose(Rng& rng) {
  bool exploit = false;
  if (config_.strategy == Strategy::Trajectory && !queue_.empty()) {
    exploit = rng.uniform() < schedule_.lambda;
  }
  Candidate c;
  if (!exploit) {
    c.z = sample_prior(*bindings_.manifold, rng, explore_label(rng));
    c.provenance = {ProvenanceKind::Explore, std::nullopt};
    c.new_lineage = true;
    return c;
  }
  const SeedEntry* seed = queue_.top();
  if (last_seed_ && seed->id == *last_seed_ && consecutive_ >= config_.try_num) {
    if (const SeedEntry* other = queue_.top(seed->id)) seed = other;
    consecutive_ = 0;
  }
  if (last_seed_ && seed->id == *last_seed_) {
    ++consecutive_;
  } else {
    last_seed_ = seed->id;
    consecutive_ = 1;
  }
  const Eigen::VectorXd delta = trajectory_step(rng);
  c.z = seed->z;
  for (std::size_t i = 0; i < c.z.coords.size(); ++i) {
    c.z.coords[i] += config_.step_scale * delta[static_cast<Eigen::Index>(i)];
  }
  c.provenance = {ProvenanceKind::Exploit, seed->id};
  c.lineage = seed->lineage;
  return c;
}

Campaign::Evaluation Campaign::evaluate(const Candidate& c) const {
  Evaluation e;
  try {
    e.decoded = decode_full(*bindings_.manifold, c.z);
    e.forward = forward_trace(*bindings_.model, e.decoded.clipped);
    if (std::holds_alternative<LabelConsistency>(bindings_.oracle)) {
      e.verdict = check_label_consistency(e.forward.output.data, c.z.class_label);
    } else if (const auto* d = std::get_if<Differential>(&bindings_.oracle)) {
      std::vector<Tensor> outputs;
      for (const Model* m : d->models) {
        outputs.push_back(m == bindings_.model ? e.forward.output : forward(*m, e.decoded.clipped));
      }
      e.verdict = check_differential(outputs, d->agreement, d->tolerance);
    } else {
      const auto& q = std::get<QuantDiff>(bindings_.oracle);
      const Tensor po = q.original == bindings_.model ? e.forward.output : forward(*q.original, e.decoded.clipped);
      const Tensor pq = forward(*q.quantized, e.decoded.clipped);
      QuantFitness qf = quant_fitness(po.data, pq.data);
      e.fitness = qf.fitness;
      e.verdict = std::move(qf.verdict);
    }
  } catch (const Error& err) {
    e.error = err.what();
  }
  return e;
}

StepOutcome Campaign::process(const Candidate& c, Evaluation& e) {
  StepOutcome out;
  out.step = ++steps_;
  out.provenance = c.provenance;
  if (c.provenance.kind == ProvenanceKind::Exploit) {
    ++report_.exploit_steps;
  } else {
    ++report_.explore_steps;
  }
  if (!e.error.empty()) {
    out.skipped = true;
    ++report_.skipped;
    report_.diagnostics.push_back("step " + std::to_string(out.step) + ": " + e.error);
    out.lambda_after = schedule_.lambda;
    report_.lambda_history.push_back({out.step, schedule_.lambda, false});
    return out;
  }

  out.gain = coverage_.update_all(e.forward.trace, *bindings_.profile, config_.objective);
  out.fitness = e.fitness;
  if (config_.mode == CampaignMode::Graybox) {
    out.accepted = out.gain.objective_gained;
  } else {
    const double best = c.new_lineage ? global_best_ : lineage_best_.at(c.lineage);
    out.accepted = *e.fitness > best;
  }

  std::optional<std::size_t> new_id;
  if (out.accepted) {
    new_id = queue_.push(c.z, SeedOrigin::Accepted,
                         c.new_lineage ? std::nullopt : std::optional<std::size_t>(c.lineage));
    trajectory_ = update_trajectory(trajectory_, c.z.coords);
    schedule_.on_gain();
    ++report_.accepted;
    if (e.fitness) {
      const std::size_t lineage = c.new_lineage ? *new_id : c.lineage;
      lineage_best_[lineage] = *e.fitness;
      global_best_ = std::max(global_best_, *e.fitness);
      report_.fitness_history.push_back({out.step, lineage, *e.fitness});
    }
  } else if (c.provenance.kind == ProvenanceKind::Exploit && c.provenance.seed_id) {
    if (queue_.decay(*c.provenance.seed_id, config_.priority_decay, config_.min_priority)) {
      ++report_.retired_seeds;
    }
  }

  if (e.verdict.is_fault && validate_input(e.decoded.clipped, bindings_.manifold->valid_range)) {
    FaultRecord f;
    f.id = report_.faults.size();
    f.step = out.step;
    f.latent = c.z;
    f.input = std::move(e.decoded.clipped);
    f.raw_input = std::move(e.decoded.raw);
    f.predictions = std::move(e.verdict.predictions);
    f.oracle = oracle_kind(bindings_.oracle);
    f.lineage = c.new_lineage ? new_id : std::optional<std::size_t>(c.lineage);
    f.parent_seed = c.provenance.seed_id;
    f.seed_label = c.z.class_label;
    f.predicted_label = e.verdict.erroneous_label;
    f.fitness = e.fitness;
    report_.faults.push_back(std::move(f));
    out.faults_found = 1;
  }

  out.lambda_after = schedule_.lambda;
  report_.lambda_history.push_back({out.step, schedule_.lambda, out.accepted});
  return out;
}

StepOutcome Campaign::step() { return step_batch(1).front(); }

std::vector<StepOutcome> Campaign::step_batch(std::size_t n) {
  std::vector<Candidate> candidates;
  candidates.reserve(n);
  for (std::size_t i = 0; i < n; ++i) candidates.push_back(propose(rng_));

  std::vector<Evaluation> evals(n);
  const std::size_t workers = std::min(config_.threads, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) evals[i] = evaluate(candidates[i]);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) evals[i] = evaluate(candidates[i]);
      });
    }
    for (auto& t : pool) t.join();
  }

  std::vector<StepOutcome> outcomes;
  outcomes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) outcomes.push_back(process(candidates[i], evals[i]));
  report_.final_coverage = coverage_.values();
  report_.steps = steps_;
  report_.queue_size = queue_.size();
  return outcomes;
}

void Campaign::sample_curve() {
  if (report_.coverage_curve.back().step != steps_) {
    report_.coverage_curve.push_back({steps_, coverage_.values()});
  }
}

CampaignReport Campaign::run() {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  auto out_of_time = [&] {
    if (config_.budget_seconds <= 0.0) return false;
    return std::chrono::duration<double>(Clock::now() - start).count() >= config_.budget_seconds;
  };
  const bool step_limited = config_.budget_steps > 0 || config_.budget_seconds <= 0.0;
  while (!out_of_time()) {
    if (step_limited && steps_ >= config_.budget_steps) break;
    std::size_t n = config_.batch_size - steps_ % config_.batch_size;
    if (step_limited) n = std::min(n, config_.budget_steps - steps_);
    step_batch(n);
    if (steps_ % config_.batch_size == 0) sample_curve();
  }
  sample_curve();
  report_.final_coverage = coverage_.values();
  report_.steps = steps_;
  report_.queue_size = queue_.size();
  return report_;
}

CampaignReport run_campaign(const FuzzConfig& config, const CampaignBindings& bindings) {
  Campaign campaign(config, bindings);
  return campaign.run();
}

}  // namespace latentfuzz
