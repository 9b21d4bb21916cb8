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

#include "latentfuzz/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "blob_io.hpp"
#include "latentfuzz/error.hpp"
#include "latentfuzz/rng.hpp"
#include "latentfuzz/train.hpp"

namespace latentfuzz {

namespace {

// Shortest representation that round-trips.
std::string num(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

nlohmann::json coverage_json(const CoverageValues& v) {
  return {{"nc", v.nc}, {"kmnc", v.kmnc}, {"nbc", v.nbc}, {"snac", v.snac}, {"tknc", v.tknc}};
}

CoverageValues coverage_from_json(const nlohmann::json& j) {
  return {j.at("nc").get<double>(), j.at("kmnc").get<double>(), j.at("nbc").get<double>(),
          j.at("snac").get<double>(), j.at("tknc").get<double>()};
}

bool is_image_shape(const Shape& s) {
  return s.size() == 2 || (s.size() == 3 && (s[0] == 1 || s[0] == 3));
}

std::string image_name(const FaultRecord& f, const Shape& shape) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fault_%06zu", f.id);
  const bool color = shape.size() == 3 && shape[0] == 3;
  return std::string("images/") + buf + (color ? ".ppm" : ".pgm");
}

}  // namespace

DiversityStats diversity(std::span<const FaultRecord> faults) {
  if (faults.empty()) throw Error("diversity of an empty fault list");
  std::map<int, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& f : faults) {
    if (f.predicted_label < 0) continue;
    ++counts[f.predicted_label];
    ++total;
  }
  DiversityStats s;
  s.class_count = counts.size();
  if (s.class_count <= 1) return s;
  double h = 0.0;
  for (const auto& [label, n] : counts) {
    const double p = static_cast<double>(n) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  s.scaled_entropy = std::clamp(h / std::log(static_cast<double>(s.class_count)), 0.0, 1.0);
  return s;
}

RetrainResult retrain_eval(const Model& model, const LabeledDataset& train,
                           const LabeledDataset& test, std::span<const FaultRecord> faults,
                           const RetrainOptions& options) {
  RetrainResult r;
  r.acc_before = accuracy(model, test);
  LabeledDataset augmented = train;
  std::vector<std::size_t> pick(faults.size());
  for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = i;
  const std::size_t used = std::min(options.limit, faults.size());
  Rng rng(options.rng_seed);
  for (std::size_t i = 0; i < used; ++i) std::swap(pick[i], pick[i + rng.below(pick.size() - i)]);
  for (std::size_t i = 0; i < used; ++i) {
    const FaultRecord& f = faults[pick[i]];
    if (f.seed_label < 0 || f.seed_label >= augmented.class_count) {
      throw Error("fault " + std::to_string(f.id) + " has seed label outside the dataset classes");
    }
    augmented.inputs.push_back(f.input);
    augmented.labels.push_back(f.seed_label);
  }
  r.faults_used = used;
  if (options.epochs <= 0) {
    r.model = model;
  } else {
    TrainOptions t;
    t.lr = options.lr;
    t.epochs = options.epochs;
    t.batch = options.batch;
    t.rng_seed = options.rng_seed;
    r.model = train_sgd(model, augmented, t).model;
  }
  r.acc_after = accuracy(r.model, test);
  return r;
}

std::string coverage_csv(const CampaignReport& report) {
  std::string out = "step,nc,kmnc,nbc,snac,tknc\n";
  for (const auto& s : report.coverage_curve) {
    out += std::to_string(s.step) + "," + num(s.values.nc) + "," + num(s.values.kmnc) + "," +
           num(s.values.nbc) + "," + num(s.values.snac) + "," + num(s.values.tknc) + "\n";
  }
  return out;
}

ExportedFiles export_report(const CampaignReport& report, const std::filesystem::path& out_dir,
                            std::size_t max_images) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw Error("cannot create output directory " + out_dir.string());
  }
  ExportedFiles files;
  files.report_json = out_dir / "report.json";
  files.coverage_csv = out_dir / "coverage.csv";
  files.faults_csv = out_dir / "faults.csv";
  files.lambda_csv = out_dir / "lambda.csv";

  const bool images = is_image_shape(report.data_shape);
  const std::size_t image_count =
      images ? (max_images == 0 ? report.faults.size() : std::min(max_images, report.faults.size())) : 0;
  if (image_count > 0) std::filesystem::create_directories(out_dir / "images");

  // Fault tensors go to two flat f32 blobs, one row per fault.
  std::vector<float> inputs, raw_inputs;
  nlohmann::json faults = nlohmann::json::array();
  std::string faults_text = "id,step,lineage,parent_seed,seed_label,predicted_label,oracle,fitness,image\n";
  for (std::size_t i = 0; i < report.faults.size(); ++i) {
    const FaultRecord& f = report.faults[i];
    inputs.insert(inputs.end(), f.input.data.begin(), f.input.data.end());
    raw_inputs.insert(raw_inputs.end(), f.raw_input.data.begin(), f.raw_input.data.end());
    std::string image;
    if (i < image_count) {
      image = image_name(f, report.data_shape);
      write_netpbm(f.input, out_dir / image);
      files.images.push_back(out_dir / image);
    }
    double clip_l1 = 0.0;
    for (std::size_t k = 0; k < f.input.data.size(); ++k) {
      clip_l1 += std::abs(static_cast<double>(f.raw_input.data[k]) - f.input.data[k]);
    }
    nlohmann::json preds = nlohmann::json::array();
    for (const auto& p : f.predictions) preds.push_back({{"label", p.label}, {"output", p.output}});
    nlohmann::json jf = {{"id", f.id},
                         {"step", f.step},
                         {"latent", f.latent.coords},
                         {"latent_class", f.latent.class_label},
                         {"seed_label", f.seed_label},
                         {"predicted_label", f.predicted_label},
                         {"oracle", oracle_kind_name(f.oracle)},
                         {"predictions", preds},
                         {"clip_l1", clip_l1},
                         {"row", i}};
    jf["lineage"] = f.lineage ? nlohmann::json(*f.lineage) : nlohmann::json(nullptr);
    jf["parent_seed"] = f.parent_seed ? nlohmann::json(*f.parent_seed) : nlohmann::json(nullptr);
    jf["fitness"] = f.fitness ? nlohmann::json(*f.fitness) : nlohmann::json(nullptr);
    jf["image"] = image.empty() ? nlohmann::json(nullptr) : nlohmann::json(image);
    faults.push_back(std::move(jf));
    faults_text += std::to_string(f.id) + "," + std::to_string(f.step) + "," +
                   (f.lineage ? std::to_string(*f.lineage) : "") + "," +
                   (f.parent_seed ? std::to_string(*f.parent_seed) : "") + "," +
                   std::to_string(f.seed_label) + "," + std::to_string(f.predicted_label) + "," +
                   std::string(oracle_kind_name(f.oracle)) + "," + (f.fitness ? num(*f.fitness) : "") +
                   "," + image + "\n";
  }
  io::write_f32_blob(out_dir / "fault_inputs.f32", inputs);
  io::write_f32_blob(out_dir / "fault_raw_inputs.f32", raw_inputs);

  nlohmann::json curve = nlohmann::json::array();
  for (const auto& s : report.coverage_curve) {
    nlohmann::json j = coverage_json(s.values);
    j["step"] = s.step;
    curve.push_back(std::move(j));
  }
  nlohmann::json fitness = nlohmann::json::array();
  for (const auto& s : report.fitness_history) {
    fitness.push_back({{"step", s.step}, {"lineage", s.lineage}, {"best", s.best}});
  }

  nlohmann::json doc;
  doc["format"] = "latentfuzz-report";
  doc["version"] = 1;
  doc["settings"] = {{"strategy", report.strategy},
                     {"objective", report.objective},
                     {"mode", report.mode},
                     {"oracle", report.oracle},
                     {"rng_seed", report.rng_seed},
                     {"budget_steps", report.budget_steps},
                     {"budget_seconds", report.budget_seconds}};
  doc["data_shape"] = report.data_shape;
  doc["valid_range"] = {report.valid_range.lo, report.valid_range.hi};
  doc["counts"] = {{"corpus", report.corpus_size},
                   {"steps", report.steps},
                   {"accepted", report.accepted},
                   {"exploit_steps", report.exploit_steps},
                   {"explore_steps", report.explore_steps},
                   {"skipped", report.skipped},
                   {"retired_seeds", report.retired_seeds},
                   {"queue_size", report.queue_size},
                   {"faults", report.faults.size()}};
  doc["init_coverage"] = coverage_json(report.init_coverage);
  doc["final_coverage"] = coverage_json(report.final_coverage);
  doc["coverage_curve"] = curve;
  doc["lambda_final"] = report.lambda_history.empty() ? 0.0 : report.lambda_history.back().lambda;
  doc["fitness_history"] = fitness;
  doc["faults"] = faults;
  doc["fault_tensors"] = {{"inputs", "fault_inputs.f32"},
                          {"raw_inputs", "fault_raw_inputs.f32"},
                          {"row_elements", element_count(report.data_shape)}};
  if (!report.faults.empty()) {
    const DiversityStats d = diversity(report.faults);
    doc["diversity"] = {{"class_count", d.class_count}, {"scaled_entropy", d.scaled_entropy}};
  } else {
    doc["diversity"] = nullptr;
  }
  doc["diagnostics"] = report.diagnostics;

  std::string lambda_text = "step,lambda,gained\n";
  for (const auto& s : report.lambda_history) {
    lambda_text += std::to_string(s.step) + "," + num(s.lambda) + "," + (s.gained ? "1" : "0") + "\n";
  }

  io::write_json(files.report_json, doc);
  io::write_text(files.coverage_csv, coverage_csv(report));
  io::write_text(files.faults_csv, faults_text);
  io::write_text(files.lambda_csv, lambda_text);
  return files;
}

std::uint8_t to_byte(float v) {
  const double clamped = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5));
}

std::vector<std::uint8_t> encode_netpbm(const Tensor& image) {
  const Shape& s = image.shape;
  if (!is_image_shape(s)) throw ShapeError("cannot encode " + shape_to_string(s) + " as PGM/PPM");
  const std::size_t channels = s.size() == 3 ? s[0] : 1;
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  const std::string header = std::string(channels == 3 ? "P6" : "P5") + "\n" + std::to_string(w) +
                             " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < channels; ++c) out.push_back(to_byte(image.data[(c * h + y) * w + x]));
  return out;
}

void write_netpbm(const Tensor& image, const std::filesystem::path& path) {
  const auto bytes = encode_netpbm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Tensor read_netpbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if ((magic != "P5" && magic != "P6") || maxval != 255 || w == 0 || h == 0) {
    throw FormatError("unsupported netpbm header in " + path.string());
  }
  in.get();  // Single whitespace byte before the raster.
  const std::size_t channels = magic == "P6" ? 3 : 1;
  std::vector<char> raw(w * h * channels);
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw FormatError("truncated raster in " + path.string());
  std::vector<float> values(raw.size());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < channels; ++c) {
        const auto byte = static_cast<unsigned char>(raw[(y * w + x) * channels + c]);
        values[(c * h + y) * w + x] = static_cast<float>(byte) / 255.0f;
      }
  return Tensor({channels, h, w}, std::move(values));
}

std::vector<FaultRecord> load_faults(const std::filesystem::path& campaign_dir) {
  const auto report_path = campaign_dir / "report.json";
  const nlohmann::json doc = io::read_json(report_path);
  try {
    const Shape shape = doc.at("data_shape").get<Shape>();
    const std::size_t row = element_count(shape);
    const auto& jfaults = doc.at("faults");
    const std::size_t bytes = jfaults.size() * row * sizeof(float);
    const auto inputs = io::read_f32_blob(campaign_dir / "fault_inputs.f32", bytes);
    const auto raw = io::read_f32_blob(campaign_dir / "fault_raw_inputs.f32", bytes);
    std::vector<FaultRecord> faults;
    for (std::size_t i = 0; i < jfaults.size(); ++i) {
      const auto& j = jfaults[i];
      FaultRecord f;
      f.id = j.at("id").get<std::size_t>();
      f.step = j.at("step").get<std::size_t>();
      f.latent.coords = j.at("latent").get<std::vector<double>>();
      f.latent.class_label = j.at("latent_class").get<int>();
      f.seed_label = j.at("seed_label").get<int>();
      f.predicted_label = j.at("predicted_label").get<int>();
      const auto kind = j.at("oracle").get<std::string>();
      if (kind == "label_consistency") {
        f.oracle = OracleKind::LabelConsistency;
      } else if (kind == "differential") {
        f.oracle = OracleKind::Differential;
      } else if (kind == "quant_diff") {
        f.oracle = OracleKind::QuantDiff;
      } else {
        throw FormatError("unknown oracle kind '" + kind + "'");
      }
      for (const auto& p : j.at("predictions")) {
        f.predictions.push_back({p.at("label").get<int>(), p.at("output").get<std::vector<float>>()});
      }
      if (!j.at("lineage").is_null()) f.lineage = j.at("lineage").get<std::size_t>();
      if (!j.at("parent_seed").is_null()) f.parent_seed = j.at("parent_seed").get<std::size_t>();
      if (!j.at("fitness").is_null()) f.fitness = j.at("fitness").get<double>();
      const auto at = static_cast<std::ptrdiff_t>(i * row);
      f.input = Tensor(shape, std::vector<float>(inputs.begin() + at, inputs.begin() + at + static_cast<std::ptrdiff_t>(row)));
      f.raw_input = Tensor(shape, std::vector<float>(raw.begin() + at, raw.begin() + at + static_cast<std::ptrdiff_t>(row)));
      faults.push_back(std::move(f));
    }
    return faults;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid report " + report_path.string() + ": " + e.what());
  }
}

ReportSummary load_report_summary(const std::filesystem::path& report_json) {
  const nlohmann::json doc = io::read_json(report_json);
  try {
    ReportSummary s;
    s.path = report_json.string();
    s.strategy = doc.at("settings").at("strategy").get<std::string>();
    s.steps = doc.at("counts").at("steps").get<std::size_t>();
    s.faults = doc.at("counts").at("faults").get<std::size_t>();
    s.init_coverage = coverage_from_json(doc.at("init_coverage"));
    s.final_coverage = coverage_from_json(doc.at("final_coverage"));
    if (!doc.at("diversity").is_null()) {
      s.diversity.class_count = doc.at("diversity").at("class_count").get<std::size_t>();
      s.diversity.scaled_entropy = doc.at("diversity").at("scaled_entropy").get<double>();
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid report " + report_json.string() + ": " + e.what());
  }
}

}  // namespace latentfuzz
