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

#include "latentfuzz/cli.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "blob_io.hpp"
#include "latentfuzz/coverage.hpp"
#include "latentfuzz/dataset.hpp"
#include "latentfuzz/error.hpp"
#include "latentfuzz/manifold.hpp"
#include "latentfuzz/model.hpp"
#include "latentfuzz/quantize.hpp"
#include "latentfuzz/report.hpp"
#include "latentfuzz/train.hpp"
#include "latentfuzz/traversal.hpp"

namespace latentfuzz {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config file schema. Every object rejects keys it does not know, and every
// diagnostic names the offending key by its dotted path.

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError((where.empty() ? "config" : where) + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

std::string key_path(const std::string& where, const char* key) {
  return where.empty() ? key : where + "." + key;
}

std::optional<std::uint64_t> get_uint(const json& j, const std::string& where, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  if (!j.at(key).is_number_unsigned()) {
    throw ConfigError(key_path(where, key) + ": expected a non-negative integer");
  }
  return j.at(key).get<std::uint64_t>();
}

std::optional<std::int64_t> get_int(const json& j, const std::string& where, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  if (!j.at(key).is_number_integer()) throw ConfigError(key_path(where, key) + ": expected an integer");
  return j.at(key).get<std::int64_t>();
}

std::optional<double> get_double(const json& j, const std::string& where, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  if (!j.at(key).is_number()) throw ConfigError(key_path(where, key) + ": expected a number");
  return j.at(key).get<double>();
}

std::optional<std::string> get_string(const json& j, const std::string& where, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  if (!j.at(key).is_string()) throw ConfigError(key_path(where, key) + ": expected a string");
  return j.at(key).get<std::string>();
}

std::optional<bool> get_bool(const json& j, const std::string& where, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  if (!j.at(key).is_boolean()) throw ConfigError(key_path(where, key) + ": expected true or false");
  return j.at(key).get<bool>();
}

std::vector<std::size_t> get_size_list(const json& j, const std::string& where, const char* key,
                                       std::vector<std::size_t> fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_array()) throw ConfigError(key_path(where, key) + ": expected an array of integers");
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    if (!e.is_number_unsigned()) throw ConfigError(key_path(where, key) + ": expected an array of integers");
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

// Re-throws a library ConfigError with the config key that fed it.
template <class F>
auto with_key(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

struct DatasetSettings {
  std::string kind = "blobs";
  BlobSpec blobs;
  fs::path images, labels;
  double split = 0.7;
  std::uint64_t split_seed = 0;
};

struct Settings {
  fs::path base_dir;
  fs::path out_dir;
  std::uint64_t seed = 0;
  bool deterministic = false;

  DatasetSettings dataset;
  std::vector<std::size_t> hidden = {64, 32};
  bool batchnorm = false;
  std::uint64_t init_seed = 0;
  TrainOptions train;
  std::size_t latent_dim = 8;
  ValueRange valid_range;
  CoverageConfig coverage;
  double corpus_fraction = 0.05;
  std::uint64_t corpus_seed = 0;
  FuzzConfig fuzz;
  std::optional<std::string> campaign_name;
  json oracle = {{"kind", "label_consistency"}};
  std::set<LayerKind> quantize_layers = {LayerKind::Dense};
  RetrainOptions retrain;
  std::string retrain_campaign = "campaign-trajectory";
  std::size_t max_images = 0;

  fs::path model_path, manifold_path, profile_path, quantized_path;
};

fs::path resolve(const fs::path& base, const fs::path& p) {
  return (p.is_absolute() ? p : base / p).lexically_normal();
}

// Streams derived from the global seed, in a fixed order, unless a section
// names its own rng_seed.
struct SeedStreams {
  std::uint64_t dataset, split, init, train, corpus, fuzz, retrain;
};

SeedStreams derive_seeds(std::uint64_t seed) {
  Rng rng(seed);
  SeedStreams s{};
  s.dataset = rng.next_u64();
  s.split = rng.next_u64();
  s.init = rng.next_u64();
  s.train = rng.next_u64();
  s.corpus = rng.next_u64();
  s.fuzz = rng.next_u64();
  s.retrain = rng.next_u64();
  return s;
}

Settings parse_settings(const json& doc, const fs::path& config_path, std::optional<std::uint64_t> seed_override) {
  Settings s;
  s.base_dir = config_path.parent_path();
  check_keys(doc, "", {"seed", "output_dir", "dataset", "model", "train", "manifold", "coverage", "corpus",
                       "fuzz", "mode", "oracle", "quantize", "retrain", "report", "paths"});
  s.seed = seed_override ? *seed_override : get_uint(doc, "", "seed").value_or(0);
  const SeedStreams seeds = derive_seeds(s.seed);
  s.out_dir = resolve(s.base_dir, get_string(doc, "", "output_dir").value_or("out"));

  const json empty = json::object();
  auto section = [&](const char* name) -> const json& { return doc.contains(name) ? doc.at(name) : empty; };

  {
    const json& d = section("dataset");
    check_keys(d, "dataset", {"kind", "classes", "shape", "per_class", "spread", "rng_seed", "images", "labels",
                              "split", "split_seed"});
    s.dataset.kind = get_string(d, "dataset", "kind").value_or("blobs");
    if (s.dataset.kind == "blobs") {
      for (const char* k : {"images", "labels"}) {
        if (d.contains(k)) throw ConfigError(std::string("dataset.") + k + ": only valid for idx datasets");
      }
      s.dataset.blobs.classes = static_cast<int>(get_int(d, "dataset", "classes").value_or(3));
      s.dataset.blobs.shape = get_size_list(d, "dataset", "shape", {1, 16, 16});
      s.dataset.blobs.per_class = get_uint(d, "dataset", "per_class").value_or(200);
      s.dataset.blobs.spread = get_double(d, "dataset", "spread").value_or(0.1);
      s.dataset.blobs.rng_seed = get_uint(d, "dataset", "rng_seed").value_or(seeds.dataset);
    } else if (s.dataset.kind == "idx") {
      for (const char* k : {"classes", "shape", "per_class", "spread", "rng_seed"}) {
        if (d.contains(k)) throw ConfigError(std::string("dataset.") + k + ": only valid for blobs datasets");
      }
      const auto images = get_string(d, "dataset", "images");
      const auto labels = get_string(d, "dataset", "labels");
      if (!images) throw ConfigError("dataset.images: required for idx datasets");
      if (!labels) throw ConfigError("dataset.labels: required for idx datasets");
      s.dataset.images = resolve(s.base_dir, *images);
      s.dataset.labels = resolve(s.base_dir, *labels);
    } else {
      throw ConfigError("dataset.kind: expected 'blobs' or 'idx', got '" + s.dataset.kind + "'");
    }
    s.dataset.split = get_double(d, "dataset", "split").value_or(0.7);
    if (!(s.dataset.split > 0.0 && s.dataset.split < 1.0)) throw ConfigError("dataset.split: must lie in (0, 1)");
    s.dataset.split_seed = get_uint(d, "dataset", "split_seed").value_or(seeds.split);
  }
  {
    const json& m = section("model");
    check_keys(m, "model", {"hidden", "batchnorm", "rng_seed"});
    s.hidden = get_size_list(m, "model", "hidden", s.hidden);
    s.batchnorm = get_bool(m, "model", "batchnorm").value_or(false);
    s.init_seed = get_uint(m, "model", "rng_seed").value_or(seeds.init);
  }
  {
    const json& t = section("train");
    check_keys(t, "train", {"lr", "epochs", "batch", "rng_seed", "bn_momentum"});
    s.train.lr = get_double(t, "train", "lr").value_or(0.05);
    s.train.epochs = static_cast<int>(get_uint(t, "train", "epochs").value_or(30));
    s.train.batch = get_uint(t, "train", "batch").value_or(32);
    s.train.rng_seed = get_uint(t, "train", "rng_seed").value_or(seeds.train);
    s.train.bn_momentum = get_double(t, "train", "bn_momentum").value_or(0.1);
    if (!(s.train.lr >= 0.0)) throw ConfigError("train.lr: must be >= 0");
    if (s.train.batch == 0) throw ConfigError("train.batch: must be >= 1");
  }
  {
    const json& m = section("manifold");
    check_keys(m, "manifold", {"latent_dim", "valid_range"});
    s.latent_dim = get_uint(m, "manifold", "latent_dim").value_or(8);
    if (s.latent_dim == 0) throw ConfigError("manifold.latent_dim: must be >= 1");
    if (m.contains("valid_range")) {
      const json& r = m.at("valid_range");
      if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number() ||
          !(r[0].get<double>() < r[1].get<double>())) {
        throw ConfigError("manifold.valid_range: expected [lo, hi] with lo < hi");
      }
      s.valid_range = {r[0].get<float>(), r[1].get<float>()};
    }
  }
  {
    const json& c = section("coverage");
    check_keys(c, "coverage", {"nc_threshold", "kmnc_sections", "tknc_k"});
    s.coverage.nc_threshold = get_double(c, "coverage", "nc_threshold").value_or(0.75);
    s.coverage.kmnc_sections = get_uint(c, "coverage", "kmnc_sections").value_or(1000);
    s.coverage.tknc_k = get_uint(c, "coverage", "tknc_k").value_or(10);
    with_key("coverage", [&] { s.coverage.validate(); });
  }
  {
    const json& c = section("corpus");
    check_keys(c, "corpus", {"fraction", "rng_seed"});
    s.corpus_fraction = get_double(c, "corpus", "fraction").value_or(0.05);
    if (!(s.corpus_fraction > 0.0 && s.corpus_fraction <= 1.0)) {
      throw ConfigError("corpus.fraction: must lie in (0, 1]");
    }
    s.corpus_seed = get_uint(c, "corpus", "rng_seed").value_or(seeds.corpus);
  }
  {
    const json& f = section("fuzz");
    check_keys(f, "fuzz", {"objective", "budget_steps", "budget_seconds", "try_num", "batch_size", "step_scale",
                           "ridge", "priority_decay", "min_priority", "delta", "lambda_max", "strategy",
                           "explore_class", "rng_seed", "threads", "name"});
    FuzzConfig& z = s.fuzz;
    if (auto v = get_string(f, "fuzz", "objective")) z.objective = with_key("fuzz.objective", [&] { return parse_criterion(*v); });
    z.budget_steps = get_uint(f, "fuzz", "budget_steps").value_or(z.budget_steps);
    z.budget_seconds = get_double(f, "fuzz", "budget_seconds").value_or(z.budget_seconds);
    z.try_num = get_uint(f, "fuzz", "try_num").value_or(z.try_num);
    z.batch_size = get_uint(f, "fuzz", "batch_size").value_or(z.batch_size);
    z.step_scale = get_double(f, "fuzz", "step_scale").value_or(z.step_scale);
    z.ridge = get_double(f, "fuzz", "ridge").value_or(z.ridge);
    z.priority_decay = get_double(f, "fuzz", "priority_decay").value_or(z.priority_decay);
    z.min_priority = get_double(f, "fuzz", "min_priority").value_or(z.min_priority);
    z.delta = get_double(f, "fuzz", "delta").value_or(z.delta);
    z.lambda_max = get_double(f, "fuzz", "lambda_max").value_or(z.lambda_max);
    if (auto v = get_string(f, "fuzz", "strategy")) z.strategy = with_key("fuzz.strategy", [&] { return parse_strategy(*v); });
    if (auto v = get_int(f, "fuzz", "explore_class")) z.explore_class = static_cast<int>(*v);
    z.rng_seed = get_uint(f, "fuzz", "rng_seed").value_or(seeds.fuzz);
    z.threads = get_uint(f, "fuzz", "threads").value_or(1);
    s.campaign_name = get_string(f, "fuzz", "name");
    if (auto v = get_string(doc, "", "mode")) z.mode = with_key("mode", [&] { return parse_mode(*v); });
    with_key("fuzz", [&] { z.validate(); });
  }
  if (doc.contains("oracle")) {
    const json& o = doc.at("oracle");
    check_keys(o, "oracle", {"kind", "models", "agreement", "tolerance"});
    const auto kind = get_string(o, "oracle", "kind");
    if (!kind) throw ConfigError("oracle.kind: required");
    if (*kind != "label_consistency" && *kind != "differential" && *kind != "quant_diff") {
      throw ConfigError("oracle.kind: expected label_consistency, differential or quant_diff, got '" + *kind + "'");
    }
    if (*kind != "differential") {
      for (const char* k : {"models", "agreement", "tolerance"}) {
        if (o.contains(k)) throw ConfigError(std::string("oracle.") + k + ": only valid for the differential oracle");
      }
    } else {
      if (!o.contains("models") || !o.at("models").is_array() || o.at("models").empty() ||
          !std::all_of(o.at("models").begin(), o.at("models").end(), [](const json& e) { return e.is_string(); })) {
        throw ConfigError("oracle.models: expected a non-empty array of model manifest paths");
      }
      const auto agreement = get_string(o, "oracle", "agreement").value_or("exact_label");
      if (agreement != "exact_label" && agreement != "numeric") {
        throw ConfigError("oracle.agreement: expected exact_label or numeric, got '" + agreement + "'");
      }
      if (get_double(o, "oracle", "tolerance").value_or(0.0) < 0.0) throw ConfigError("oracle.tolerance: must be >= 0");
    }
    s.oracle = o;
  }
  {
    const json& q = section("quantize");
    check_keys(q, "quantize", {"layers"});
    if (q.contains("layers")) {
      if (!q.at("layers").is_array() || q.at("layers").empty()) {
        throw ConfigError("quantize.layers: expected a non-empty array of layer kinds");
      }
      s.quantize_layers.clear();
      for (const auto& e : q.at("layers")) {
        if (!e.is_string()) throw ConfigError("quantize.layers: expected layer kind names");
        const std::string name = e.get<std::string>();
        if (name == "dense") {
          s.quantize_layers.insert(LayerKind::Dense);
        } else if (name == "conv2d") {
          s.quantize_layers.insert(LayerKind::Conv2D);
        } else {
          throw ConfigError("quantize.layers: expected 'dense' or 'conv2d', got '" + name + "'");
        }
      }
    }
  }
  {
    const json& r = section("retrain");
    check_keys(r, "retrain", {"limit", "epochs", "lr", "batch", "rng_seed", "campaign"});
    s.retrain.limit = get_uint(r, "retrain", "limit").value_or(2000);
    s.retrain.epochs = static_cast<int>(get_uint(r, "retrain", "epochs").value_or(5));
    s.retrain.lr = get_double(r, "retrain", "lr").value_or(0.01);
    s.retrain.batch = get_uint(r, "retrain", "batch").value_or(32);
    s.retrain.rng_seed = get_uint(r, "retrain", "rng_seed").value_or(seeds.retrain);
    s.retrain_campaign = get_string(r, "retrain", "campaign").value_or(s.retrain_campaign);
    if (s.retrain.batch == 0) throw ConfigError("retrain.batch: must be >= 1");
  }
  {
    const json& r = section("report");
    check_keys(r, "report", {"max_images"});
    s.max_images = get_uint(r, "report", "max_images").value_or(0);
  }
  {
    const json& p = section("paths");
    check_keys(p, "paths", {"model", "manifold", "profile", "quantized_model"});
    // Unset paths default to fixed locations inside the output directory.
    auto path_of = [&](const char* key) {
      const auto v = get_string(p, "paths", key);
      return v ? resolve(s.base_dir, *v) : fs::path();
    };
    s.model_path = path_of("model");
    s.manifold_path = path_of("manifold");
    s.profile_path = path_of("profile");
    s.quantized_path = path_of("quantized_model");
  }
  return s;
}

void fill_default_paths(Settings& s) {
  if (s.model_path.empty()) s.model_path = s.out_dir / "model" / "model.json";
  if (s.manifold_path.empty()) s.manifold_path = s.out_dir / "manifold" / "manifold.json";
  if (s.profile_path.empty()) s.profile_path = s.out_dir / "profile.json";
  if (s.quantized_path.empty()) s.quantized_path = s.out_dir / "model_q" / "model.json";
}

json read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Summary line: space separated key=value pairs in insertion order.

class Summary {
 public:
  Summary& add(const std::string& key, const std::string& value) {
    fields_.emplace_back(key, value);
    return *this;
  }
  Summary& add(const std::string& key, const char* value) { return add(key, std::string(value)); }
  Summary& add(const std::string& key, std::string_view value) { return add(key, std::string(value)); }
  Summary& add(const std::string& key, double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed, 6);
    return add(key, std::string(buf, end));
  }
  Summary& add(const std::string& key, std::size_t value) { return add(key, std::to_string(value)); }
  Summary& add(const std::string& key, int value) { return add(key, std::to_string(value)); }

  void print(std::ostream& out) const {
    for (std::size_t i = 0; i < fields_.size(); ++i) {
      out << (i ? " " : "") << fields_[i].first << "=" << fields_[i].second;
    }
    out << "\n";
  }

 private:
  std::vector<std::pair<std::string, std::string>> fields_;
};

// ---------------------------------------------------------------------------
// Shared pipeline pieces.

std::pair<LabeledDataset, LabeledDataset> load_splits(const Settings& s) {
  LabeledDataset data;
  if (s.dataset.kind == "blobs") {
    try {
      data = gen_blobs(s.dataset.blobs);
    } catch (const Error& e) {
      throw ConfigError(std::string("dataset: ") + e.what());
    }
  } else {
    data = load_idx(s.dataset.images, s.dataset.labels);
  }
  return split(data, s.dataset.split, s.dataset.split_seed);
}

Model require_model(const fs::path& path, const char* what) {
  if (!fs::exists(path)) {
    throw Error(std::string(what) + " not found at " + path.string() + "; run the producing subcommand first");
  }
  return load_model(path);
}

std::string campaign_dir_name(const Settings& s) {
  if (s.campaign_name) return *s.campaign_name;
  std::string name = "campaign-" + std::string(strategy_name(s.fuzz.strategy));
  if (s.fuzz.mode == CampaignMode::BlackboxQuant) name += "-quant";
  return name;
}

void write_loss_log(const fs::path& path, const std::vector<double>& curve) {
  std::ostringstream text;
  text << "epoch,loss\n";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, curve[i]);
    text << (i + 1) << "," << std::string(buf, end) << "\n";
  }
  io::write_text(path, text.str());
}

// ---------------------------------------------------------------------------
// Subcommands.

int cmd_train(const Settings& s, std::ostream& out) {
  const auto [train, test] = load_splits(s);
  Rng init(s.init_seed);
  const Model initial = build_mlp({train.input_shape(), s.hidden, static_cast<std::size_t>(train.class_count), s.batchnorm}, init);
  const TrainResult result = train_sgd(initial, train, s.train);
  save_model(result.model, s.model_path);
  write_loss_log(s.model_path.parent_path() / "loss.csv", result.loss_curve);
  Summary()
      .add("cmd", "train")
      .add("train_samples", train.size())
      .add("test_samples", test.size())
      .add("epochs", s.train.epochs)
      .add("final_loss", result.loss_curve.empty() ? 0.0 : result.loss_curve.back())
      .add("train_acc", accuracy(result.model, train))
      .add("test_acc", accuracy(result.model, test))
      .add("model", s.model_path.string())
      .print(out);
  return kExitOk;
}

int cmd_build_manifold(const Settings& s, std::ostream& out) {
  const auto [train, test] = load_splits(s);
  PcaOptions options;
  options.valid_range = s.valid_range;
  const ManifoldModel m = build_pca_manifold(train, s.latent_dim, options);
  save_manifold(m, s.manifold_path);
  double mse = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) mse += reconstruction_mse(m, test.inputs[i], test.labels[i]);
  if (!test.empty()) mse /= static_cast<double>(test.size());
  Summary()
      .add("cmd", "build-manifold")
      .add("kind", "pca")
      .add("latent_dim", m.latent_dim)
      .add("classes", m.classes().size())
      .add("test_recon_mse", mse)
      .add("notes", m.notes.size())
      .add("manifold", s.manifold_path.string())
      .print(out);
  return kExitOk;
}

int cmd_profile(const Settings& s, std::ostream& out) {
  const auto [train, test] = load_splits(s);
  const Model model = require_model(s.model_path, "model");
  const NeuronProfile p = profile(model, train);
  save_profile(p, s.profile_path);
  Summary()
      .add("cmd", "profile")
      .add("samples", train.size())
      .add("layers", p.layout.layer_ids.size())
      .add("neurons", p.layout.neuron_count)
      .add("profile", s.profile_path.string())
      .print(out);
  return kExitOk;
}

int cmd_quantize(const Settings& s, std::ostream& out) {
  const auto [train, test] = load_splits(s);
  const Model model = require_model(s.model_path, "model");
  const Model q = quantize(model, s.quantize_layers);
  save_model(q, s.quantized_path);
  const double before = accuracy(model, test), after = accuracy(q, test);
  std::string layers;
  for (LayerKind k : s.quantize_layers) layers += (layers.empty() ? "" : ",") + std::string(k == LayerKind::Dense ? "dense" : "conv2d");
  Summary()
      .add("cmd", "quantize")
      .add("layers", layers)
      .add("acc_original", before)
      .add("acc_quantized", after)
      .add("delta_points", 100.0 * (after - before))
      .add("model", s.quantized_path.string())
      .print(out);
  return kExitOk;
}

int cmd_fuzz(const Settings& s, std::ostream& out) {
  const auto [train, test] = load_splits(s);
  const Model model = require_model(s.model_path, "model");
  if (!fs::exists(s.profile_path)) throw Error("profile not found at " + s.profile_path.string());
  if (!fs::exists(s.manifold_path)) throw Error("manifold not found at " + s.manifold_path.string());
  const NeuronProfile prof = load_profile(s.profile_path);
  const ManifoldModel manifold = load_manifold(s.manifold_path);

  // Other models stay alive for the whole campaign.
  std::vector<Model> others;
  CampaignBindings b;
  b.model = &model;
  b.profile = &prof;
  b.manifold = &manifold;
  b.coverage = s.coverage;
  b.corpus = s.corpus_fraction >= 1.0 ? test : split(test, s.corpus_fraction, s.corpus_seed).first;

  const std::string kind = s.oracle.at("kind").get<std::string>();
  if (kind == "label_consistency") {
    b.oracle = LabelConsistency{};
  } else if (kind == "differential") {
    const auto paths = s.oracle.at("models");
    others.reserve(paths.size());
    for (const auto& p : paths) others.push_back(require_model(resolve(s.base_dir, p.get<std::string>()), "differential model"));
    Differential d;
    d.models.push_back(&model);
    for (const Model& m : others) d.models.push_back(&m);
    d.agreement = s.oracle.value("agreement", std::string("exact_label")) == "numeric" ? Agreement::NumericTolerance
                                                                                        : Agreement::ExactLabel;
    d.tolerance = s.oracle.value("tolerance", 0.0);
    b.oracle = d;
  } else {
    others.push_back(require_model(s.quantized_path, "quantized model"));
    b.oracle = QuantDiff{&model, &others.back()};
  }

  FuzzConfig config = s.fuzz;
  if (s.deterministic) config.threads = 1;
  Campaign campaign(config, std::move(b));
  const CampaignReport report = campaign.run();
  const fs::path dir = s.out_dir / campaign_dir_name(s);
  export_report(report, dir, s.max_images);

  Summary line;
  line.add("cmd", "fuzz")
      .add("strategy", report.strategy)
      .add("mode", report.mode)
      .add("oracle", report.oracle)
      .add("objective", report.objective)
      .add("steps", report.steps)
      .add("accepted", report.accepted)
      .add("faults", report.faults.size());
  for (Criterion c : kAllCriteria) {
    line.add(std::string("init_") + std::string(criterion_name(c)), report.init_coverage.get(c));
  }
  for (Criterion c : kAllCriteria) line.add(std::string(criterion_name(c)), report.final_coverage.get(c));
  line.add("lambda", report.lambda_history.empty() ? 0.0 : report.lambda_history.back().lambda)
      .add("entropy", report.faults.empty() ? 0.0 : diversity(report.faults).scaled_entropy)
      .add("out", dir.string())
      .print(out);
  return kExitOk;
}

int cmd_retrain(const Settings& s, const std::optional<std::string>& campaign_arg, std::ostream& out) {
  const auto [train, test] = load_splits(s);
  const Model model = require_model(s.model_path, "model");
  const fs::path dir = campaign_arg ? fs::path(*campaign_arg) : s.out_dir / s.retrain_campaign;
  if (!fs::exists(dir / "report.json")) throw Error("no campaign report in " + dir.string());
  const std::vector<FaultRecord> faults = load_faults(dir);
  const RetrainResult r = retrain_eval(model, train, test, faults, s.retrain);
  const fs::path model_out = s.out_dir / "model_retrained" / "model.json";
  save_model(r.model, model_out);
  Summary()
      .add("cmd", "retrain")
      .add("campaign", dir.string())
      .add("faults_available", faults.size())
      .add("faults_used", r.faults_used)
      .add("acc_before", r.acc_before)
      .add("acc_after", r.acc_after)
      .add("delta_points", 100.0 * (r.acc_after - r.acc_before))
      .add("model", model_out.string())
      .print(out);
  return kExitOk;
}

int cmd_report(const Settings& s, const std::vector<std::string>& dirs_arg, std::ostream& out) {
  std::vector<fs::path> dirs;
  for (const auto& d : dirs_arg) dirs.emplace_back(d);
  if (dirs.empty() && fs::is_directory(s.out_dir)) {
    for (const auto& entry : fs::directory_iterator(s.out_dir)) {
      const std::string name = entry.path().filename().string();
      if (entry.is_directory() && name.rfind("campaign-", 0) == 0 && fs::exists(entry.path() / "report.json")) {
        dirs.push_back(entry.path());
      }
    }
    std::sort(dirs.begin(), dirs.end());
  }
  if (dirs.empty()) throw Error("no campaign reports to compare under " + s.out_dir.string());
  std::vector<ReportSummary> rows;
  for (const auto& d : dirs) rows.push_back(load_report_summary(d / "report.json"));

  std::ostringstream csv;
  csv << "campaign,strategy,steps,faults,entropy";
  for (Criterion c : kAllCriteria) csv << ",init_" << criterion_name(c);
  for (Criterion c : kAllCriteria) csv << "," << criterion_name(c);
  csv << "\n";
  auto fmt = [](double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
  };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    csv << dirs[i].filename().string() << "," << r.strategy << "," << r.steps << "," << r.faults << ","
        << fmt(r.diversity.scaled_entropy);
    for (Criterion c : kAllCriteria) csv << "," << fmt(r.init_coverage.get(c));
    for (Criterion c : kAllCriteria) csv << "," << fmt(r.final_coverage.get(c));
    csv << "\n";
  }
  const fs::path table = s.out_dir / "comparison.csv";
  fs::create_directories(s.out_dir);
  io::write_text(table, csv.str());

  auto join = [&](auto&& field) {
    std::string v;
    for (std::size_t i = 0; i < rows.size(); ++i) v += (i ? "," : "") + field(i);
    return v;
  };
  Summary line;
  line.add("cmd", "report")
      .add("campaigns", rows.size())
      .add("names", join([&](std::size_t i) { return dirs[i].filename().string(); }))
      .add("steps", join([&](std::size_t i) { return std::to_string(rows[i].steps); }))
      .add("faults", join([&](std::size_t i) { return std::to_string(rows[i].faults); }));
  for (Criterion c : kAllCriteria) {
    line.add(std::string(criterion_name(c)), join([&](std::size_t i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", rows[i].final_coverage.get(c));
      return std::string(buf);
    }));
  }
  line.add("table", table.string()).print(out);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"latentfuzz: coverage-guided latent-space fuzzing of neural classifiers", "latentfuzz"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::optional<std::string> out_dir;
  app.add_option("--config", config_path, "Campaign JSON config")->required();
  app.add_option("--seed", seed, "Global seed; overrides the config");
  app.add_flag("--deterministic", deterministic, "Force serial candidate evaluation");
  app.add_option("--out", out_dir, "Output directory; overrides the config");

  auto* train = app.add_subcommand("train", "Generate or load the dataset and train the target MLP");
  auto* manifold = app.add_subcommand("build-manifold", "Build the per-class PCA manifold");
  auto* prof = app.add_subcommand("profile", "Profile neuron ranges over the training split");
  auto* fuzz = app.add_subcommand("fuzz", "Run a traversal campaign and export its report");
  auto* quant = app.add_subcommand("quantize", "Write an int8-simulated copy of the model");
  auto* retrain = app.add_subcommand("retrain", "Fine-tune on campaign faults and compare accuracy");
  auto* report = app.add_subcommand("report", "Compare exported campaign reports");

  std::optional<std::size_t> budget_steps;
  std::optional<double> budget_seconds;
  std::optional<std::string> strategy;
  fuzz->add_option("--budget-steps", budget_steps, "Step budget (0 with no time budget: corpus only)");
  fuzz->add_option("--budget-seconds", budget_seconds, "Wall-clock budget; 0 disables");
  fuzz->add_option("--strategy", strategy, "trajectory or random");
  std::optional<std::string> campaign;
  retrain->add_option("--campaign", campaign, "Campaign directory holding the faults");
  std::vector<std::string> report_dirs;
  report->add_option("campaigns", report_dirs, "Campaign directories (default: every campaign-* under --out)");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    const fs::path cfg = fs::absolute(config_path);
    Settings s = parse_settings(read_config(cfg), cfg, seed);
    if (out_dir) s.out_dir = fs::absolute(*out_dir).lexically_normal();
    s.deterministic = deterministic;
    if (budget_steps) s.fuzz.budget_steps = *budget_steps;
    if (budget_seconds) {
      if (!(*budget_seconds >= 0.0)) throw ConfigError("--budget-seconds: must be >= 0");
      s.fuzz.budget_seconds = *budget_seconds;
    }
    if (strategy) s.fuzz.strategy = with_key("--strategy", [&] { return parse_strategy(*strategy); });
    fill_default_paths(s);

    if (train->parsed()) return cmd_train(s, out);
    if (manifold->parsed()) return cmd_build_manifold(s, out);
    if (prof->parsed()) return cmd_profile(s, out);
    if (quant->parsed()) return cmd_quantize(s, out);
    if (fuzz->parsed()) return cmd_fuzz(s, out);
    if (retrain->parsed()) return cmd_retrain(s, campaign, out);
    if (report->parsed()) return cmd_report(s, report_dirs, out);
    err << "error: no subcommand\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace latentfuzz
