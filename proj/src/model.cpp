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

#include "latentfuzz/model.hpp"

#include <cmath>
#include <map>

#include "blob_io.hpp"
#include "kernels.hpp"
#include "latentfuzz/error.hpp"
#include "latentfuzz/rng.hpp"

namespace latentfuzz {

namespace {

constexpr std::string_view kManifestFormat = "latentfuzz-model";
constexpr int kManifestVersion = 1;

const std::map<LayerKind, std::string_view>& kind_names() {
  static const std::map<LayerKind, std::string_view> names = {
      {LayerKind::Dense, "Dense"},         {LayerKind::Conv2D, "Conv2D"},
      {LayerKind::BatchNorm, "BatchNorm"}, {LayerKind::ReLU, "ReLU"},
      {LayerKind::Softmax, "Softmax"},     {LayerKind::Flatten, "Flatten"}};
  return names;
}

std::vector<std::string> expected_param_names(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense:
    case LayerKind::Conv2D:
      return {"weight", "bias"};
    case LayerKind::BatchNorm:
      return {"gamma", "beta", "running_mean", "running_var"};
    default:
      return {};
  }
}

Shape expected_param_shape(const Layer& layer, std::string_view name) {
  switch (layer.kind) {
    case LayerKind::Dense:
      return name == "weight" ? Shape{layer.out, layer.in} : Shape{layer.out};
    case LayerKind::Conv2D:
      return name == "weight" ? Shape{layer.out, layer.in, layer.kernel_h, layer.kernel_w}
                              : Shape{layer.out};
    case LayerKind::BatchNorm:
      return Shape{layer.channels};
    default:
      return {};
  }
}

void check_params(const Layer& layer, std::size_t index) {
  const auto names = expected_param_names(layer.kind);
  const std::string where = "layer " + std::to_string(index) + " (" +
                            std::string(layer_kind_name(layer.kind)) + ")";
  if (layer.params.size() != names.size()) {
    throw ShapeError(where + ": expected " + std::to_string(names.size()) + " parameters, got " +
                     std::to_string(layer.params.size()));
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    const NamedTensor& p = layer.params[i];
    if (p.name != names[i]) throw ShapeError(where + ": unexpected parameter '" + p.name + "'");
    const Shape want = expected_param_shape(layer, p.name);
    if (p.value.shape != want) {
      throw ShapeError(where + ": parameter '" + p.name + "' has shape " +
                       shape_to_string(p.value.shape) + ", expected " + shape_to_string(want));
    }
    if (p.value.data.size() != element_count(want)) {
      throw ShapeError(where + ": parameter '" + p.name + "' has wrong element count");
    }
  }
}

std::size_t spatial_size(const Shape& shape) {
  return shape.size() == 3 ? shape[1] * shape[2] : 1;
}

void check_finite(std::span<const float> values, std::size_t layer_index) {
  for (float v : values) {
    if (!std::isfinite(v)) {
      throw Error("non-finite activation after layer " + std::to_string(layer_index));
    }
  }
}

// Index of the last layer whose output is recorded for the Dense/Conv2D layer at `i`.
std::size_t trace_point(const Model& model, std::size_t i) {
  std::size_t j = i;
  while (j + 1 < model.layers.size()) {
    const LayerKind next = model.layers[j + 1].kind;
    if (next != LayerKind::BatchNorm && next != LayerKind::ReLU) break;
    ++j;
  }
  return j;
}

}  // namespace

std::string_view layer_kind_name(LayerKind kind) { return kind_names().at(kind); }

LayerKind parse_layer_kind(std::string_view name) {
  for (const auto& [kind, text] : kind_names()) {
    if (text == name) return kind;
  }
  throw FormatError("unknown layer kind '" + std::string(name) + "'");
}

const Tensor& Layer::param(std::string_view name) const {
  for (const auto& p : params) {
    if (p.name == name) return p.value;
  }
  throw Error("layer has no parameter '" + std::string(name) + "'");
}

Tensor& Layer::param(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).param(name));
}

Layer make_dense(std::size_t in, std::size_t out) {
  Layer l;
  l.kind = LayerKind::Dense;
  l.in = in;
  l.out = out;
  l.params = {{"weight", Tensor::zeros({out, in})}, {"bias", Tensor::zeros({out})}};
  return l;
}

Layer make_conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kh, std::size_t kw,
                  std::size_t stride, std::size_t pad) {
  Layer l;
  l.kind = LayerKind::Conv2D;
  l.in = in_ch;
  l.out = out_ch;
  l.kernel_h = kh;
  l.kernel_w = kw;
  l.stride = stride;
  l.pad = pad;
  l.params = {{"weight", Tensor::zeros({out_ch, in_ch, kh, kw})}, {"bias", Tensor::zeros({out_ch})}};
  return l;
}

Layer make_batchnorm(std::size_t channels, float eps) {
  Layer l;
  l.kind = LayerKind::BatchNorm;
  l.channels = channels;
  l.eps = eps;
  Tensor ones({channels}, std::vector<float>(channels, 1.0f));
  l.params = {{"gamma", ones},
              {"beta", Tensor::zeros({channels})},
              {"running_mean", Tensor::zeros({channels})},
              {"running_var", ones}};
  return l;
}

Layer make_simple(LayerKind kind) {
  Layer l;
  l.kind = kind;
  return l;
}

bool is_trainable_param(LayerKind kind, std::string_view name) {
  if (kind == LayerKind::BatchNorm) return name == "gamma" || name == "beta";
  return kind == LayerKind::Dense || kind == LayerKind::Conv2D;
}

std::vector<Shape> layer_output_shapes(const Model& model) {
  if (model.input_shape.empty() || element_count(model.input_shape) == 0) {
    throw ShapeError("model input shape " + shape_to_string(model.input_shape) + " is empty");
  }
  std::vector<Shape> shapes;
  Shape cur = model.input_shape;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& l = model.layers[i];
    check_params(l, i);
    const std::string where = "layer " + std::to_string(i) + " (" +
                              std::string(layer_kind_name(l.kind)) + ")";
    switch (l.kind) {
      case LayerKind::Dense:
        if (cur.size() != 1 || cur[0] != l.in) {
          throw ShapeError(where + ": input " + shape_to_string(cur) + " does not match in=" +
                           std::to_string(l.in));
        }
        cur = {l.out};
        break;
      case LayerKind::Conv2D: {
        if (cur.size() != 3 || cur[0] != l.in) {
          throw ShapeError(where + ": input " + shape_to_string(cur) + " does not match in_ch=" +
                           std::to_string(l.in));
        }
        if (l.stride == 0 || l.kernel_h == 0 || l.kernel_w == 0 ||
            cur[1] + 2 * l.pad < l.kernel_h || cur[2] + 2 * l.pad < l.kernel_w) {
          throw ShapeError(where + ": kernel does not fit input " + shape_to_string(cur));
        }
        const kernels::ConvGeometry g{cur[0], cur[1], cur[2], l.out, l.kernel_h, l.kernel_w,
                                      l.stride, l.pad};
        cur = {l.out, g.out_h(), g.out_w()};
        break;
      }
      case LayerKind::BatchNorm:
        if ((cur.size() != 1 && cur.size() != 3) || cur[0] != l.channels) {
          throw ShapeError(where + ": input " + shape_to_string(cur) + " does not match channels=" +
                           std::to_string(l.channels));
        }
        break;
      case LayerKind::Softmax:
        if (cur.size() != 1) throw ShapeError(where + ": input must be a vector");
        break;
      case LayerKind::Flatten:
        cur = {element_count(cur)};
        break;
      case LayerKind::ReLU:
        break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

void validate_model(const Model& model, bool classifier) {
  const auto shapes = layer_output_shapes(model);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& l = model.layers[i];
    for (const auto& p : l.params) {
      if (!p.value.all_finite()) {
        throw Error("layer " + std::to_string(i) + " parameter '" + p.name + "' is not finite");
      }
    }
    if (l.kind == LayerKind::BatchNorm) {
      if (!(l.eps > 0.0f)) throw Error("layer " + std::to_string(i) + ": BatchNorm eps must be > 0");
      for (float v : l.param("running_var").data) {
        if (v < 0.0f) throw Error("layer " + std::to_string(i) + ": negative running_var");
      }
    }
  }
  if (classifier) {
    if (model.layers.empty() || model.layers.back().kind != LayerKind::Softmax) {
      throw ShapeError("classifier must end with Softmax");
    }
    if (shapes.back()[0] != model.class_labels.size()) {
      throw ShapeError("classifier output width " + std::to_string(shapes.back()[0]) +
                       " does not match " + std::to_string(model.class_labels.size()) +
                       " class labels");
    }
  }
}

TraceLayout trace_layout(const Model& model) {
  const auto shapes = layer_output_shapes(model);
  TraceLayout layout;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerKind k = model.layers[i].kind;
    if (k != LayerKind::Dense && k != LayerKind::Conv2D) continue;
    layout.layer_ids.push_back(i);
    layout.offsets.push_back(layout.neuron_count);
    layout.widths.push_back(shapes[i][0]);
    layout.neuron_count += shapes[i][0];
  }
  return layout;
}

std::size_t ActivationTrace::neuron_count() const {
  std::size_t n = 0;
  for (const auto& v : values) n += v.size();
  return n;
}

ForwardResult forward_trace(const Model& model, const Tensor& input, ForwardOptions options) {
  if (input.shape != model.input_shape) {
    throw ShapeError("input shape " + shape_to_string(input.shape) + " does not match model input " +
                     shape_to_string(model.input_shape));
  }
  const auto shapes = layer_output_shapes(model);
  ForwardResult result;
  std::vector<float> cur = input.data;
  Shape cur_shape = input.shape;
  std::vector<float> next;
  std::size_t pending_trace = model.layers.size();  // Index of the layer whose output is traced.
  std::size_t pending_owner = 0;

  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& l = model.layers[i];
    const Shape& out_shape = shapes[i];
    next.assign(element_count(out_shape), 0.0f);
    switch (l.kind) {
      case LayerKind::Dense:
        kernels::dense_forward<float, float>(cur, l.param("weight").data, l.param("bias").data, l.in,
                                             l.out, next);
        break;
      case LayerKind::Conv2D: {
        const kernels::ConvGeometry g{cur_shape[0], cur_shape[1], cur_shape[2], l.out,
                                      l.kernel_h,   l.kernel_w,   l.stride,     l.pad};
        kernels::conv2d_forward<float, float>(cur, l.param("weight").data, l.param("bias").data, g,
                                              next);
        break;
      }
      case LayerKind::BatchNorm:
        kernels::batchnorm_forward<float, float>(
            cur, l.param("gamma").data, l.param("beta").data, l.param("running_mean").data,
            l.param("running_var").data, static_cast<double>(l.eps), l.channels,
            spatial_size(cur_shape), next);
        break;
      case LayerKind::ReLU:
        kernels::relu_forward<float>(cur, next);
        break;
      case LayerKind::Softmax:
        kernels::softmax_forward<float>(cur, next);
        break;
      case LayerKind::Flatten:
        next = cur;
        break;
    }
    if (options.checked) check_finite(next, i);
    if (l.kind == LayerKind::Dense || l.kind == LayerKind::Conv2D) {
      pending_owner = i;
      pending_trace = trace_point(model, i);
    }
    if (i == pending_trace) {
      std::vector<float> neurons;
      if (out_shape.size() == 3) {
        const std::size_t spatial = out_shape[1] * out_shape[2];
        neurons.resize(out_shape[0]);
        for (std::size_t c = 0; c < out_shape[0]; ++c) {
          double acc = 0.0;
          for (std::size_t s = 0; s < spatial; ++s) acc += next[c * spatial + s];
          neurons[c] = static_cast<float>(acc / static_cast<double>(spatial));
        }
      } else {
        neurons = next;
      }
      result.trace.layer_ids.push_back(pending_owner);
      result.trace.values.push_back(std::move(neurons));
      pending_trace = model.layers.size();
    }
    cur.swap(next);
    cur_shape = out_shape;
  }
  result.output = Tensor(cur_shape, std::move(cur));
  return result;
}

Tensor forward(const Model& model, const Tensor& input, ForwardOptions options) {
  return forward_trace(model, input, options).output;
}

// ---------------------------------------------------------------------------
// Manifest I/O

Model load_model(const std::filesystem::path& manifest_path) {
  const nlohmann::json doc = io::read_json(manifest_path);
  const auto dir = manifest_path.parent_path();
  Model model;
  try {
    if (doc.at("format").get<std::string>() != kManifestFormat) {
      throw FormatError("not a model manifest: " + manifest_path.string());
    }
    if (doc.at("version").get<int>() != kManifestVersion) {
      throw FormatError("unsupported model manifest version in " + manifest_path.string());
    }
    model.input_shape = doc.at("input_shape").get<Shape>();
    model.class_labels = doc.value("class_labels", std::vector<std::string>{});
    for (const auto& jl : doc.at("layers")) {
      Layer l;
      l.kind = parse_layer_kind(jl.at("kind").get<std::string>());
      l.in = jl.value("in", std::size_t{0});
      l.out = jl.value("out", std::size_t{0});
      l.kernel_h = jl.value("kernel_h", std::size_t{0});
      l.kernel_w = jl.value("kernel_w", std::size_t{0});
      l.stride = jl.value("stride", std::size_t{1});
      l.pad = jl.value("pad", std::size_t{0});
      l.channels = jl.value("channels", std::size_t{0});
      l.eps = jl.value("eps", 1e-5f);
      if (jl.contains("params")) {
        for (const auto& jp : jl.at("params")) {
          Shape shape = jp.at("shape").get<Shape>();
          const std::size_t bytes = jp.at("bytes").get<std::size_t>();
          if (bytes != 4 * element_count(shape)) {
            throw ShapeError("parameter '" + jp.at("name").get<std::string>() + "' declares shape " +
                             shape_to_string(shape) + " but " + std::to_string(bytes) + " bytes");
          }
          auto values = io::read_f32_blob(dir / jp.at("file").get<std::string>(), bytes);
          l.params.push_back({jp.at("name").get<std::string>(), Tensor(std::move(shape), std::move(values))});
        }
      }
      model.layers.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid model manifest " + manifest_path.string() + ": " + e.what());
  }
  validate_model(model, !model.layers.empty() && model.layers.back().kind == LayerKind::Softmax);
  return model;
}

void save_model(const Model& model, const std::filesystem::path& manifest_path) {
  validate_model(model, !model.layers.empty() && model.layers.back().kind == LayerKind::Softmax);
  const auto dir = manifest_path.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  const std::string stem = manifest_path.stem().string();
  nlohmann::json doc;
  doc["format"] = kManifestFormat;
  doc["version"] = kManifestVersion;
  doc["input_shape"] = model.input_shape;
  doc["class_labels"] = model.class_labels;
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& l = model.layers[i];
    nlohmann::json jl;
    jl["kind"] = layer_kind_name(l.kind);
    switch (l.kind) {
      case LayerKind::Conv2D:
        jl["kernel_h"] = l.kernel_h;
        jl["kernel_w"] = l.kernel_w;
        jl["stride"] = l.stride;
        jl["pad"] = l.pad;
        [[fallthrough]];
      case LayerKind::Dense:
        jl["in"] = l.in;
        jl["out"] = l.out;
        break;
      case LayerKind::BatchNorm:
        jl["channels"] = l.channels;
        jl["eps"] = l.eps;
        break;
      default:
        break;
    }
    if (!l.params.empty()) {
      nlohmann::json params = nlohmann::json::array();
      for (const auto& p : l.params) {
        const std::string file = stem + ".layer" + std::to_string(i) + "." + p.name + ".f32";
        io::write_f32_blob(dir / file, p.value.data);
        params.push_back({{"name", p.name},
                          {"file", file},
                          {"shape", p.value.shape},
                          {"bytes", 4 * p.value.data.size()}});
      }
      jl["params"] = params;
    }
    layers.push_back(jl);
  }
  doc["layers"] = layers;
  io::write_json(manifest_path, doc);
}

Model build_mlp(const MlpSpec& spec, Rng& rng) {
  Model model;
  model.input_shape = spec.input_shape;
  for (std::size_t c = 0; c < spec.classes; ++c) model.class_labels.push_back(std::to_string(c));
  std::size_t width = element_count(spec.input_shape);
  if (spec.input_shape.size() > 1) model.layers.push_back(make_simple(LayerKind::Flatten));
  auto init_dense = [&rng](Layer& l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l.in));
    for (float& w : l.param("weight").data) w = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
  };
  for (std::size_t h : spec.hidden) {
    Layer d = make_dense(width, h);
    init_dense(d);
    model.layers.push_back(std::move(d));
    if (spec.batchnorm) model.layers.push_back(make_batchnorm(h));
    model.layers.push_back(make_simple(LayerKind::ReLU));
    width = h;
  }
  Layer head = make_dense(width, spec.classes);
  init_dense(head);
  model.layers.push_back(std::move(head));
  model.layers.push_back(make_simple(LayerKind::Softmax));
  validate_model(model);
  return model;
}

}  // namespace latentfuzz
