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
#include <sstream>

#include <nlohmann/json.hpp>

#include "latentfuzz/error.hpp"
#include "latentfuzz/report.hpp"
#include "support/oracles.hpp"

using namespace latentfuzz;

namespace {

FaultRecord fault_with(int seed, int predicted) {
  FaultRecord f;
  f.seed_label = seed;
  f.predicted_label = predicted;
  return f;
}

CampaignReport sample_report() {
  CampaignReport r;
  r.strategy = "trajectory";
  r.objective = "nc";
  r.mode = "graybox";
  r.oracle = "label_consistency";
  r.rng_seed = 3;
  r.budget_steps = 64;
  r.data_shape = {1, 3, 2};
  r.corpus_size = 4;
  r.steps = 64;
  r.accepted = 2;
  r.init_coverage = {0.25, 0.1, 0.0, 0.0, 0.5};
  r.final_coverage = {0.5, 0.2, 0.1, 0.05, 0.75};
  r.coverage_curve = {{0, r.init_coverage}, {32, {0.4, 0.15, 0.05, 0.0, 0.6}}, {64, r.final_coverage}};
  r.lambda_history = {{1, 0.0005, true}, {2, 0.0005, false}, {3, 0.001, true}};
  for (int i = 0; i < 3; ++i) {
    FaultRecord f;
    f.id = static_cast<std::size_t>(i);
    f.step = static_cast<std::size_t>(10 * i + 1);
    f.latent = {{0.5 * i, -1.0}, 0};
    f.input = Tensor({1, 3, 2}, {0.0f, 0.2f, 0.4f, 0.6f, 0.8f, 1.0f});
    f.raw_input = Tensor({1, 3, 2}, {-0.1f, 0.2f, 0.4f, 0.6f, 0.8f, 1.3f});
    f.predictions = {{i + 1, {0.1f, 0.6f, 0.3f}}};
    f.lineage = i == 2 ? std::nullopt : std::optional<std::size_t>(i);
    f.parent_seed = i == 0 ? std::optional<std::size_t>(5) : std::nullopt;
    f.seed_label = 0;
    f.predicted_label = i + 1;
    r.faults.push_back(f);
  }
  return r;
}

}  // namespace

TEST(Diversity, EntropyOfErroneousClasses) {
  const std::vector<FaultRecord> skewed = {fault_with(0, 1), fault_with(0, 1), fault_with(2, 1), fault_with(0, 2)};
  const DiversityStats s = diversity(skewed);
  EXPECT_EQ(s.class_count, 2u);
  EXPECT_NEAR(s.scaled_entropy, 0.8113, 1e-4);

  const std::vector<FaultRecord> even = {fault_with(0, 1), fault_with(0, 2), fault_with(1, 0)};
  EXPECT_NEAR(diversity(even).scaled_entropy, 1.0, 1e-12);
  const std::vector<FaultRecord> single = {fault_with(0, 1), fault_with(2, 1)};
  EXPECT_DOUBLE_EQ(diversity(single).scaled_entropy, 0.0);
  EXPECT_THROW(diversity(std::vector<FaultRecord>{}), Error);
}

TEST(Netpbm, GrayHeaderAndRounding) {
  const Tensor img({1, 2, 3}, {0.0f, 0.5f, 1.0f, 0.2f, -1.0f, 2.0f});
  const auto bytes = encode_netpbm(img);
  const std::string header = "P5\n3 2\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 6);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + static_cast<long>(header.size())), header);
  const std::vector<std::uint8_t> px(bytes.begin() + static_cast<long>(header.size()), bytes.end());
  EXPECT_EQ(px, (std::vector<std::uint8_t>{0, 128, 255, 51, 0, 255}));
}

TEST(Netpbm, ColorRoundTripWithinQuantization) {
  Rng rng(1);
  const Tensor img({3, 4, 5}, oracle::random_vector(rng, 60, 0.0, 1.0));
  const auto dir = oracle::scratch_dir("netpbm");
  write_netpbm(img, dir / "x.ppm");
  EXPECT_EQ(oracle::read_file(dir / "x.ppm").substr(0, 2), "P6");
  const Tensor back = read_netpbm(dir / "x.ppm");
  EXPECT_EQ(back.shape, img.shape);
  for (std::size_t i = 0; i < 60; ++i) EXPECT_NEAR(back.data[i], img.data[i], 0.5 / 255.0 + 1e-6);
  EXPECT_THROW(encode_netpbm(Tensor({2, 2, 2}, std::vector<float>(8))), Error);
}

TEST(Export, WritesAllArtifacts) {
  const CampaignReport r = sample_report();
  const auto dir = oracle::scratch_dir("export");
  const ExportedFiles files = export_report(r, dir, 2);
  EXPECT_EQ(files.images.size(), 2u);
  std::istringstream cov(oracle::read_file(files.coverage_csv));
  std::string line;
  std::getline(cov, line);
  EXPECT_EQ(line, "step,nc,kmnc,nbc,snac,tknc");
  std::size_t rows = 0;
  while (std::getline(cov, line)) ++rows;
  EXPECT_EQ(rows, r.coverage_curve.size());

  std::istringstream faults(oracle::read_file(files.faults_csv));
  std::getline(faults, line);
  EXPECT_EQ(line, "id,step,lineage,parent_seed,seed_label,predicted_label,oracle,fitness,image");
  rows = 0;
  while (std::getline(faults, line)) ++rows;
  EXPECT_EQ(rows, r.faults.size());

  const auto doc = nlohmann::json::parse(oracle::read_file(files.report_json));
  EXPECT_EQ(doc["format"], "latentfuzz-report");
  EXPECT_EQ(doc["faults"].size(), 3u);
  EXPECT_TRUE(doc["faults"][2]["lineage"].is_null());
  EXPECT_EQ(doc["faults"][0]["parent_seed"], 5);
  EXPECT_TRUE(doc["faults"][2]["image"].is_null());
}

TEST(Export, ReExportIsByteIdentical) {
  const CampaignReport r = sample_report();
  const auto a = oracle::scratch_dir("export_a"), b = oracle::scratch_dir("export_b");
  export_report(r, a);
  export_report(r, b);
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a);
    EXPECT_EQ(oracle::read_file(entry.path()), oracle::read_file(b / rel)) << rel;
  }
}

TEST(Export, FaultsRoundTripThroughCampaignDirectory) {
  const CampaignReport r = sample_report();
  const auto dir = oracle::scratch_dir("export_load");
  export_report(r, dir);
  const auto loaded = load_faults(dir);
  ASSERT_EQ(loaded.size(), r.faults.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    EXPECT_EQ(loaded[i].input, r.faults[i].input);
    EXPECT_EQ(loaded[i].raw_input, r.faults[i].raw_input);
    EXPECT_EQ(loaded[i].latent, r.faults[i].latent);
    EXPECT_EQ(loaded[i].lineage, r.faults[i].lineage);
    EXPECT_EQ(loaded[i].seed_label, r.faults[i].seed_label);
    EXPECT_EQ(loaded[i].predicted_label, r.faults[i].predicted_label);
  }
  const ReportSummary s = load_report_summary(dir / "report.json");
  EXPECT_EQ(s.faults, 3u);
  EXPECT_EQ(s.final_coverage, r.final_coverage);
}

TEST(Retrain, NoEpochsKeepsModelAndAccuracy) {
  Rng rng(2);
  const Model m = oracle::random_mlp(rng, 6, {4}, 2, false);
  LabeledDataset d;
  d.class_count = 2;
  for (int i = 0; i < 20; ++i) {
    d.inputs.push_back(Tensor({6}, oracle::random_vector(rng, 6, 0.0, 1.0)));
    d.labels.push_back(i % 2);
  }
  std::vector<FaultRecord> faults(5);
  for (auto& f : faults) {
    f.input = d.inputs[0];
    f.seed_label = 1;
  }
  RetrainOptions opt;
  opt.epochs = 0;
  opt.limit = 3;
  const RetrainResult r = retrain_eval(m, d, d, faults, opt);
  EXPECT_EQ(r.model, m);
  EXPECT_EQ(r.acc_before, r.acc_after);
  EXPECT_EQ(r.faults_used, 3u);
  faults[0].seed_label = 9;
  opt.limit = 5;
  EXPECT_THROW(retrain_eval(m, d, d, faults, opt), Error);
}
