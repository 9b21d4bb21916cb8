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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latentfuzz/coverage.hpp"
#include "latentfuzz/dataset.hpp"
#include "latentfuzz/manifold.hpp"
#include "latentfuzz/model.hpp"
#include "latentfuzz/oracle.hpp"

namespace latentfuzz {

struct FaultRecord {
  std::size_t id = 0;
  std::size_t step = 0;
  LatentPoint latent;
  Tensor input;      // Clipped decoder output fed to the models.
  Tensor raw_input;  // Decoder output before clipping.
  std::vector<ModelPrediction> predictions;
  OracleKind oracle = OracleKind::LabelConsistency;
  std::optional<std::size_t> lineage;  // Root seed id; unset for rejected explorations.
  std::optional<std::size_t> parent_seed;
  int seed_label = 0;       // The label used for retraining.
  int predicted_label = -1; // Erroneous predicted class.
  std::optional<double> fitness;
};

struct DiversityStats {
  std::size_t class_count = 0;
  double scaled_entropy = 0.0;
};

// p_c over observed erroneous classes; entropy normalized by ln|C| (0 when |C| = 1).
DiversityStats diversity(std::span<const FaultRecord> faults);

struct CoverageSample {
  std::size_t step = 0;
  CoverageValues values;
};

struct LambdaSample {
  std::size_t step = 0;
  double lambda = 0.0;
  bool gained = false;
};

struct FitnessSample {
  std::size_t step = 0;
  std::size_t lineage = 0;
  double best = 0.0;
};

struct CampaignReport {
  // Settings echoed for readers of the exported report.
  std::string strategy;
  std::string objective;
  std::string mode;
  std::string oracle;
  std::uint64_t rng_seed = 0;
  std::size_t budget_steps = 0;
  double budget_seconds = 0.0;
  Shape data_shape;
  ValueRange valid_range;

  std::size_t corpus_size = 0;
  std::size_t steps = 0;
  std::size_t accepted = 0;
  std::size_t exploit_steps = 0;
  std::size_t explore_steps = 0;
  std::size_t skipped = 0;
  std::size_t retired_seeds = 0;
  std::size_t queue_size = 0;

  CoverageValues init_coverage;
  CoverageValues final_coverage;
  std::vector<CoverageSample> coverage_curve;
  std::vector<LambdaSample> lambda_history;
  std::vector<FitnessSample> fitness_history;
  std::vector<FaultRecord> faults;
  std::vector<std::string> diagnostics;
};

struct RetrainOptions {
  std::size_t limit = 2000;  // Maximum number of fault inputs mixed into training.
  int epochs = 5;
  double lr = 0.01;
  std::size_t batch = 32;
  std::uint64_t rng_seed = 0;
};

struct RetrainResult {
  double acc_before = 0.0;
  double acc_after = 0.0;
  std::size_t faults_used = 0;
  Model model;
};

// Fine-tunes a copy of `model` on train plus up to `limit` randomly chosen
// faults labeled with their seed class, and reports test accuracy before and after.
RetrainResult retrain_eval(const Model& model, const LabeledDataset& train,
                           const LabeledDataset& test, std::span<const FaultRecord> faults,
                           const RetrainOptions& options);

// Files written by export_report.
struct ExportedFiles {
  std::filesystem::path report_json, coverage_csv, faults_csv, lambda_csv;
  std::vector<std::filesystem::path> images;
};

// Writes report.json, coverage.csv, faults.csv, lambda.csv and one PGM/PPM per
// fault under images/. `max_images` bounds the number of images (0 = all).
ExportedFiles export_report(const CampaignReport& report, const std::filesystem::path& out_dir,
                            std::size_t max_images = 0);

std::string coverage_csv(const CampaignReport& report);

// PGM (P5) for 1 channel, PPM (P6) for 3 channels. Values in [0,1] are scaled
// to [0,255] and rounded half up. Accepts [C,H,W] or [H,W].
std::vector<std::uint8_t> encode_netpbm(const Tensor& image);
void write_netpbm(const Tensor& image, const std::filesystem::path& path);
// Returns pixels as [C,H,W] in [0,1] (byte / 255).
Tensor read_netpbm(const std::filesystem::path& path);
std::uint8_t to_byte(float v);

// Restores the fault records of a campaign directory written by export_report.
std::vector<FaultRecord> load_faults(const std::filesystem::path& campaign_dir);

// Loads the numeric summary of an exported report.json for comparisons.
struct ReportSummary {
  std::string path;
  std::string strategy;
  std::size_t steps = 0;
  std::size_t faults = 0;
  CoverageValues init_coverage;
  CoverageValues final_coverage;
  DiversityStats diversity;
};
ReportSummary load_report_summary(const std::filesystem::path& report_json);

}  // namespace latentfuzz
