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

#include "latentfuzz/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "blob_io.hpp"
#include "latentfuzz/error.hpp"
#include "latentfuzz/rng.hpp"

namespace latentfuzz {

namespace {

constexpr std::string_view kManifoldFormat = "latentfuzz-manifold";
constexpr int kManifoldVersion = 1;

void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > 1e-9) {
      if (v[i] < 0.0) v = -v;
      return;
    }
  }
}

Tensor clip(const Tensor& raw, ValueRange range) {
  Tensor out = raw;
  for (float& v : out.data) v = std::clamp(v, range.lo, range.hi);
  return out;
}

const PcaBasis& basis_for(const ManifoldModel& m, int label) {
  auto it = m.pca.find(label);
  if (it == m.pca.end()) throw Error("manifold has no class " + std::to_string(label));
  return it->second;
}

const Model& decoder_for(const ManifoldModel& m, int label) {
  auto it = m.net->per_class.find(label);
  if (it == m.net->per_class.end()) throw Error("manifold has no class " + std::to_string(label));
  return it->second;
}

double mse(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.data.size());
}

// Best of N prior samples, refined by cyclic golden-section line searches.
LatentPoint latent_search(const ManifoldModel& m, const Tensor& x, int class_label) {
  const LatentSearchOptions& opt = m.search;
  Rng rng(opt.rng_seed);
  auto loss = [&](const std::vector<double>& z) {
    return mse(decode(m, LatentPoint{z, class_label}), x);
  };
  LatentPoint best{std::vector<double>(m.latent_dim, 0.0), class_label};
  double best_loss = loss(best.coords);
  for (std::size_t k = 0; k < opt.candidates; ++k) {
    LatentPoint cand = sample_prior(m, rng, class_label);
    const double l = loss(cand.coords);
    if (l < best_loss) {
      best_loss = l;
      best = std::move(cand);
    }
  }
  constexpr double kInvPhi = 0.6180339887498949;
  std::vector<double> z = best.coords;
  for (std::size_t round = 0; round < opt.rounds; ++round) {
    const double round_start = best_loss;
    for (std::size_t i = 0; i < m.latent_dim; ++i) {
      const double center = z[i];
      double a = center - opt.bracket, b = center + opt.bracket;
      auto eval = [&](double v) {
        z[i] = v;
        return loss(z);
      };
      double c = b - kInvPhi * (b - a), d = a + kInvPhi * (b - a);
      double fc = eval(c), fd = eval(d);
      for (std::size_t it = 0; it < opt.golden_iterations; ++it) {
        if (fc < fd) {
          b = d;
          d = c;
          fd = fc;
          c = b - kInvPhi * (b - a);
          fc = eval(c);
        } else {
          a = c;
          c = d;
          fc = fd;
          d = a + kInvPhi * (b - a);
          fd = eval(d);
        }
      }
      const double mid = 0.5 * (a + b);
      const double fmid = eval(mid);
      if (fmid < best_loss) {
        best_loss = fmid;
        z[i] = mid;
      } else {
        z[i] = center;
      }
    }
    if (round_start - best_loss <= 1e-15) break;
  }
  best.coords = z;
  return best;
}

nlohmann::json blob_entry(const std::filesystem::path& dir, const std::string& file,
                          const std::vector<float>& values, const Shape& shape) {
  io::write_f32_blob(dir / file, values);
  return {{"file", file}, {"shape", shape}, {"bytes", 4 * values.size()}};
}

std::vector<float> read_blob_entry(const std::filesystem::path& dir, const nlohmann::json& j,
                                   const Shape& expected) {
  const Shape shape = j.at("shape").get<Shape>();
  if (shape != expected) {
    throw ShapeError("manifold blob shape " + shape_to_string(shape) + " does not match " +
                     shape_to_string(expected));
  }
  return io::read_f32_blob(dir / j.at("file").get<std::string>(), j.at("bytes").get<std::size_t>());
}

std::vector<float> to_floats(const std::vector<double>& v) {
  return std::vector<float>(v.begin(), v.end());
}

}  // namespace

std::vector<int> ManifoldModel::classes() const {
  std::vector<int> out;
  if (net) {
    for (const auto& [label, _] : net->per_class) out.push_back(label);
  } else {
    for (const auto& [label, _] : pca) out.push_back(label);
  }
  return out;
}

bool ManifoldModel::has_class(int label) const {
  return net ? net->per_class.contains(label) : pca.contains(label);
}

ManifoldModel build_pca(const LabeledDataset& data, int class_label, std::size_t d,
                        const PcaOptions& options) {
  if (d < 1) throw Error("latent dimension must be >= 1");
  const LabeledDataset samples = filter_class(data, class_label);
  const std::size_t n = samples.size();
  if (n < d + 1) {
    throw Error("class " + std::to_string(class_label) + " has " + std::to_string(n) +
                " samples; PCA with d=" + std::to_string(d) + " needs at least " +
                std::to_string(d + 1));
  }
  const Shape shape = samples.input_shape();
  const std::size_t dim = element_count(shape);

  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = samples.inputs[i].data[j];
  }
  const Eigen::RowVectorXd mean = X.colwise().mean();
  X.rowwise() -= mean;
  const double inv_n = 1.0 / static_cast<double>(n);

  // Columns of `vectors` are unit eigenvectors of the covariance, descending.
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  if (n < dim) {
    // Gram trick: eigenpairs of X X^T / n map to covariance eigenvectors X^T v.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(X * X.transpose() * inv_n);
    values = solver.eigenvalues().reverse();
    const Eigen::MatrixXd small = solver.eigenvectors().rowwise().reverse();
    vectors = X.transpose() * small;
    for (Eigen::Index k = 0; k < vectors.cols(); ++k) {
      const double norm = vectors.col(k).norm();
      if (norm > 0.0) vectors.col(k) /= norm;
    }
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(X.transpose() * X * inv_n);
    values = solver.eigenvalues().reverse();
    vectors = solver.eigenvectors().rowwise().reverse();
  }

  const double top = values.size() > 0 ? values[0] : 0.0;
  std::size_t rank = 0;
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    if (values[k] > options.rank_tolerance * top && values[k] > 0.0) ++rank;
  }
  ManifoldModel m;
  std::size_t kept = d;
  if (rank < d) {
    if (rank == 0) throw Error("class " + std::to_string(class_label) + " has zero variance");
    kept = rank;
    m.notes.push_back("class " + std::to_string(class_label) + ": requested latent_dim " +
                      std::to_string(d) + " exceeds data rank " + std::to_string(rank) +
                      "; reduced to " + std::to_string(rank));
  }

  PcaBasis basis;
  basis.mean.assign(mean.data(), mean.data() + mean.size());
  basis.components.resize(kept * dim);
  for (std::size_t k = 0; k < kept; ++k) {
    Eigen::VectorXd v = vectors.col(static_cast<Eigen::Index>(k));
    fix_sign(v);
    for (std::size_t j = 0; j < dim; ++j) basis.components[k * dim + j] = v[static_cast<Eigen::Index>(j)];
    basis.eigenvalues.push_back(values[static_cast<Eigen::Index>(k)]);
  }
  m.latent_dim = kept;
  m.data_shape = shape;
  m.valid_range = options.valid_range;
  m.pca.emplace(class_label, std::move(basis));
  return m;
}

ManifoldModel build_pca_manifold(const LabeledDataset& data, std::size_t d,
                                 const PcaOptions& options) {
  if (data.empty()) throw Error("cannot build a manifold from an empty dataset");
  std::vector<int> labels(data.labels.begin(), data.labels.end());
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  ManifoldModel out;
  out.data_shape = data.input_shape();
  out.valid_range = options.valid_range;
  out.latent_dim = d;
  for (int label : labels) {
    ManifoldModel part = build_pca(data, label, d, options);
    out.latent_dim = std::min(out.latent_dim, part.latent_dim);
    out.notes.insert(out.notes.end(), part.notes.begin(), part.notes.end());
    out.pca.merge(part.pca);
  }
  const std::size_t dim = element_count(out.data_shape);
  for (auto& [label, basis] : out.pca) {
    if (basis.eigenvalues.size() > out.latent_dim) {
      basis.components.resize(out.latent_dim * dim);
      basis.eigenvalues.resize(out.latent_dim);
    }
  }
  return out;
}

ManifoldModel make_decoder_manifold(Model decoder, std::map<int, std::vector<BnBankEntry>> banks,
                                    std::optional<Model> encoder, ValueRange valid_range) {
  const auto shapes = layer_output_shapes(decoder);
  validate_model(decoder, false);
  if (decoder.input_shape.size() != 1) throw ShapeError("decoder input must be a latent vector");
  ManifoldModel m;
  m.latent_dim = decoder.input_shape[0];
  m.data_shape = shapes.empty() ? decoder.input_shape : shapes.back();
  m.valid_range = valid_range;
  DecoderNet net;
  if (banks.empty()) {
    net.per_class.emplace(0, decoder);
  }
  for (const auto& [label, entries] : banks) {
    Model variant = decoder;
    for (const auto& e : entries) {
      if (e.layer >= decoder.layers.size() || decoder.layers[e.layer].kind != LayerKind::BatchNorm) {
        throw FormatError("BatchNorm bank for class " + std::to_string(label) + " names layer " +
                          std::to_string(e.layer) + ", which is not BatchNorm");
      }
      Layer& bn = variant.layers[e.layer];
      if (e.gamma.shape != Shape{bn.channels} || e.beta.shape != Shape{bn.channels}) {
        throw ShapeError("BatchNorm bank shape mismatch for class " + std::to_string(label));
      }
      bn.param("gamma") = e.gamma;
      bn.param("beta") = e.beta;
    }
    validate_model(variant, false);
    net.per_class.emplace(label, std::move(variant));
  }
  if (encoder) {
    const auto enc_shapes = layer_output_shapes(*encoder);
    if (encoder->input_shape != m.data_shape ||
        (enc_shapes.empty() ? encoder->input_shape : enc_shapes.back()) != Shape{m.latent_dim}) {
      throw ShapeError("encoder must map data_shape to [latent_dim]");
    }
  }
  net.decoder = std::move(decoder);
  net.banks = std::move(banks);
  net.encoder = std::move(encoder);
  m.net = std::move(net);
  return m;
}

LatentPoint encode(const ManifoldModel& m, const Tensor& x, int class_label) {
  if (x.shape != m.data_shape) {
    throw ShapeError("cannot encode " + shape_to_string(x.shape) + " on a manifold of " +
                     shape_to_string(m.data_shape));
  }
  if (m.is_pca()) {
    const PcaBasis& basis = basis_for(m, class_label);
    const std::size_t dim = basis.mean.size();
    LatentPoint z{std::vector<double>(m.latent_dim, 0.0), class_label};
    for (std::size_t k = 0; k < m.latent_dim; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        acc += basis.components[k * dim + j] * (static_cast<double>(x.data[j]) - basis.mean[j]);
      }
      z.coords[k] = acc;
    }
    return z;
  }
  decoder_for(m, class_label);
  if (m.net->encoder) {
    const Tensor out = forward(*m.net->encoder, x);
    return LatentPoint{std::vector<double>(out.data.begin(), out.data.end()), class_label};
  }
  if (!m.search.enabled) throw Error("manifold has no encoder and latent search is disabled");
  return latent_search(m, x, class_label);
}

Decoded decode_full(const ManifoldModel& m, const LatentPoint& z) {
  if (z.coords.size() != m.latent_dim) {
    throw ShapeError("latent point has dimension " + std::to_string(z.coords.size()) +
                     ", manifold expects " + std::to_string(m.latent_dim));
  }
  for (double c : z.coords) {
    if (!std::isfinite(c)) throw Error("latent point has a non-finite coordinate");
  }
  Decoded out;
  if (m.is_pca()) {
    const PcaBasis& basis = basis_for(m, z.class_label);
    const std::size_t dim = basis.mean.size();
    std::vector<float> values(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      double acc = basis.mean[j];
      for (std::size_t k = 0; k < m.latent_dim; ++k) acc += z.coords[k] * basis.components[k * dim + j];
      values[j] = static_cast<float>(acc);
    }
    out.raw = Tensor(m.data_shape, std::move(values));
  } else {
    const Model& dec = decoder_for(m, z.class_label);
    Tensor in({m.latent_dim}, std::vector<float>(z.coords.begin(), z.coords.end()));
    out.raw = forward(dec, in);
  }
  if (!out.raw.all_finite()) throw Error("decoder produced a non-finite value");
  out.clipped = clip(out.raw, m.valid_range);
  return out;
}

Tensor decode(const ManifoldModel& m, const LatentPoint& z) { return decode_full(m, z).clipped; }

LatentPoint sample_prior(const ManifoldModel& m, Rng& rng, int class_label) {
  LatentPoint z{std::vector<double>(m.latent_dim), class_label};
  for (double& c : z.coords) c = rng.normal();
  return z;
}

double reconstruction_mse(const ManifoldModel& m, const Tensor& x, int class_label) {
  return mse(decode(m, encode(m, x, class_label)), x);
}

void save_manifold(const ManifoldModel& m, const std::filesystem::path& path) {
  const auto dir = path.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  const std::string stem = path.stem().string();
  nlohmann::json doc;
  doc["format"] = kManifoldFormat;
  doc["version"] = kManifoldVersion;
  doc["latent_dim"] = m.latent_dim;
  doc["data_shape"] = m.data_shape;
  doc["valid_range"] = {m.valid_range.lo, m.valid_range.hi};
  doc["classes"] = m.classes();
  doc["notes"] = m.notes;
  doc["latent_search"] = {{"enabled", m.search.enabled},
                          {"candidates", m.search.candidates},
                          {"rounds", m.search.rounds},
                          {"golden_iterations", m.search.golden_iterations},
                          {"bracket", m.search.bracket},
                          {"rng_seed", m.search.rng_seed}};
  if (m.is_pca()) {
    doc["kind"] = "pca";
    const std::size_t dim = element_count(m.data_shape);
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [label, basis] : m.pca) {
      const std::string prefix = stem + ".class" + std::to_string(label);
      entries.push_back(
          {{"label", label},
           {"mean", blob_entry(dir, prefix + ".mean.f32", to_floats(basis.mean), Shape{dim})},
           {"components", blob_entry(dir, prefix + ".components.f32", to_floats(basis.components),
                                     Shape{m.latent_dim, dim})},
           {"eigenvalues", basis.eigenvalues}});
    }
    doc["pca"] = entries;
  } else {
    doc["kind"] = "decoder";
    const std::string decoder_file = stem + ".decoder.json";
    save_model(m.net->decoder, dir / decoder_file);
    doc["decoder"] = decoder_file;
    if (m.net->encoder) {
      const std::string encoder_file = stem + ".encoder.json";
      save_model(*m.net->encoder, dir / encoder_file);
      doc["encoder"] = encoder_file;
    }
    nlohmann::json banks = nlohmann::json::array();
    for (const auto& [label, entries] : m.net->banks) {
      nlohmann::json layers = nlohmann::json::array();
      for (const auto& e : entries) {
        const std::string prefix = stem + ".bank" + std::to_string(label) + ".layer" + std::to_string(e.layer);
        layers.push_back({{"layer", e.layer},
                          {"gamma", blob_entry(dir, prefix + ".gamma.f32", e.gamma.data, e.gamma.shape)},
                          {"beta", blob_entry(dir, prefix + ".beta.f32", e.beta.data, e.beta.shape)}});
      }
      banks.push_back({{"class", label}, {"layers", layers}});
    }
    doc["bn_banks"] = banks;
  }
  io::write_json(path, doc);
}

ManifoldModel load_manifold(const std::filesystem::path& path) {
  const nlohmann::json doc = io::read_json(path);
  const auto dir = path.parent_path();
  try {
    if (doc.at("format").get<std::string>() != kManifoldFormat ||
        doc.at("version").get<int>() != kManifoldVersion) {
      throw FormatError("not a manifold file: " + path.string());
    }
    const auto range = doc.at("valid_range").get<std::vector<float>>();
    if (range.size() != 2 || !(range[0] <= range[1])) throw FormatError("invalid valid_range in " + path.string());
    const ValueRange valid{range[0], range[1]};
    ManifoldModel m;
    const std::string kind = doc.at("kind").get<std::string>();
    if (kind == "pca") {
      m.latent_dim = doc.at("latent_dim").get<std::size_t>();
      m.data_shape = doc.at("data_shape").get<Shape>();
      m.valid_range = valid;
      const std::size_t dim = element_count(m.data_shape);
      for (const auto& e : doc.at("pca")) {
        PcaBasis basis;
        const auto mean = read_blob_entry(dir, e.at("mean"), Shape{dim});
        const auto comps = read_blob_entry(dir, e.at("components"), Shape{m.latent_dim, dim});
        basis.mean.assign(mean.begin(), mean.end());
        basis.components.assign(comps.begin(), comps.end());
        basis.eigenvalues = e.value("eigenvalues", std::vector<double>{});
        m.pca.emplace(e.at("label").get<int>(), std::move(basis));
      }
      if (m.pca.empty()) throw FormatError("PCA manifold has no classes: " + path.string());
    } else if (kind == "decoder") {
      Model decoder = load_model(dir / doc.at("decoder").get<std::string>());
      std::optional<Model> encoder;
      if (doc.contains("encoder")) encoder = load_model(dir / doc.at("encoder").get<std::string>());
      std::map<int, std::vector<BnBankEntry>> banks;
      for (const auto& b : doc.value("bn_banks", nlohmann::json::array())) {
        std::vector<BnBankEntry> entries;
        for (const auto& jl : b.at("layers")) {
          BnBankEntry e;
          e.layer = jl.at("layer").get<std::size_t>();
          const Shape shape = jl.at("gamma").at("shape").get<Shape>();
          e.gamma = Tensor(shape, read_blob_entry(dir, jl.at("gamma"), shape));
          e.beta = Tensor(shape, read_blob_entry(dir, jl.at("beta"), shape));
          entries.push_back(std::move(e));
        }
        banks.emplace(b.at("class").get<int>(), std::move(entries));
      }
      m = make_decoder_manifold(std::move(decoder), std::move(banks), std::move(encoder), valid);
      if (doc.contains("latent_dim") && doc.at("latent_dim").get<std::size_t>() != m.latent_dim) {
        throw ShapeError("manifold latent_dim disagrees with decoder input");
      }
    } else {
      throw FormatError("unknown manifold kind '" + kind + "'");
    }
    m.notes = doc.value("notes", std::vector<std::string>{});
    if (doc.contains("latent_search")) {
      const auto& s = doc.at("latent_search");
      m.search.enabled = s.value("enabled", true);
      m.search.candidates = s.value("candidates", std::size_t{256});
      m.search.rounds = s.value("rounds", std::size_t{100});
      m.search.golden_iterations = s.value("golden_iterations", std::size_t{30});
      m.search.bracket = s.value("bracket", 1.0);
      m.search.rng_seed = s.value("rng_seed", std::uint64_t{0});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid manifold file " + path.string() + ": " + e.what());
  }
}

}  // namespace latentfuzz
