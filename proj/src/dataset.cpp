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

#include "latentfuzz/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "latentfuzz/error.hpp"
#include "latentfuzz/rng.hpp"

namespace latentfuzz {

namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) throw FormatError("truncated IDX header in " + path.string());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

LabeledDataset subset(const LabeledDataset& data, const std::vector<std::size_t>& idx) {
  LabeledDataset out;
  out.class_count = data.class_count;
  for (std::size_t i : idx) {
    out.inputs.push_back(data.inputs[i]);
    out.labels.push_back(data.labels[i]);
  }
  return out;
}

}  // namespace

const Shape& LabeledDataset::input_shape() const {
  if (inputs.empty()) throw Error("empty dataset has no input shape");
  return inputs.front().shape;
}

void LabeledDataset::validate() const {
  if (inputs.size() != labels.size()) throw Error("dataset inputs and labels differ in length");
  if (class_count < 1) throw Error("dataset class_count must be positive");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].shape != inputs.front().shape) {
      throw ShapeError("dataset sample " + std::to_string(i) + " has shape " +
                       shape_to_string(inputs[i].shape));
    }
    if (labels[i] < 0 || labels[i] >= class_count) {
      throw Error("dataset label " + std::to_string(labels[i]) + " outside [0, " +
                  std::to_string(class_count) + ")");
    }
  }
}

namespace {

constexpr double kPhaseJitter = 10.0;
constexpr double kContrastJitter = 4.0;

// Grating of class `label` with a phase offset and contrast factor applied.
Tensor grating(int label, int classes, const Shape& shape, double phase_offset, double contrast) {
  const std::size_t n = element_count(shape);
  const std::size_t width = shape.empty() ? 1 : shape.back();
  const std::size_t height = shape.size() >= 2 ? shape[shape.size() - 2] : 1;
  const double theta = std::numbers::pi * label / classes;
  const double phase = 0.7 * label + phase_offset;
  std::vector<float> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i % width) / static_cast<double>(width);
    const double y = static_cast<double>((i / width) % height) / static_cast<double>(height);
    const double ch = static_cast<double>(i / (width * height));
    const double u = x * std::cos(theta) + y * std::sin(theta);
    values[i] = static_cast<float>(0.5 + 0.35 * contrast * std::sin(2.0 * std::numbers::pi * 2.0 * u + phase + ch));
  }
  return Tensor(shape, std::move(values));
}

}  // namespace

Tensor blob_template(int label, int classes, const Shape& shape) {
  return grating(label, classes, shape, 0.0, 1.0);
}

LabeledDataset gen_blobs(const BlobSpec& spec) {
  if (spec.classes < 2) throw Error("gen_blobs needs at least 2 classes");
  if (spec.per_class < 1) throw Error("gen_blobs needs at least 1 sample per class");
  if (spec.shape.empty() || element_count(spec.shape) == 0) throw ShapeError("gen_blobs shape is empty");
  if (!(spec.spread >= 0.0) || !std::isfinite(spec.spread)) throw Error("gen_blobs spread must be >= 0");
  Rng rng(spec.rng_seed);
  LabeledDataset data;
  data.class_count = spec.classes;
  for (int c = 0; c < spec.classes; ++c) {
    for (std::size_t k = 0; k < spec.per_class; ++k) {
      // Phase and contrast wobble give each class a few smooth directions of
      // variation on top of the pixel noise; all of it vanishes at spread 0.
      const double phase_offset = kPhaseJitter * spec.spread * rng.normal();
      const double contrast = 1.0 + kContrastJitter * spec.spread * rng.normal();
      Tensor sample = grating(c, spec.classes, spec.shape, phase_offset, contrast);
      for (float& v : sample.data) {
        const double noisy = static_cast<double>(v) + spec.spread * rng.normal();
        v = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
      }
      data.inputs.push_back(std::move(sample));
      data.labels.push_back(c);
    }
  }
  return data;
}

LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path) {
  const auto img = read_bytes(images_path);
  const auto lab = read_bytes(labels_path);
  if (read_be32(img, 0, images_path) != kIdxImageMagic) {
    throw FormatError("bad IDX image magic in " + images_path.string());
  }
  if (read_be32(lab, 0, labels_path) != kIdxLabelMagic) {
    throw FormatError("bad IDX label magic in " + labels_path.string());
  }
  const std::size_t count = read_be32(img, 4, images_path);
  const std::size_t rows = read_be32(img, 8, images_path);
  const std::size_t cols = read_be32(img, 12, images_path);
  const std::size_t label_count = read_be32(lab, 4, labels_path);
  const std::size_t pixels = rows * cols;
  if (img.size() != 16 + count * pixels) {
    throw FormatError("truncated IDX image payload in " + images_path.string());
  }
  if (lab.size() != 8 + label_count) {
    throw FormatError("truncated IDX label payload in " + labels_path.string());
  }
  if (count != label_count) {
    throw FormatError("IDX image count " + std::to_string(count) + " != label count " +
                      std::to_string(label_count));
  }
  LabeledDataset data;
  int max_label = 0;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<float> values(pixels);
    for (std::size_t p = 0; p < pixels; ++p) values[p] = static_cast<float>(img[16 + i * pixels + p]) / 255.0f;
    data.inputs.emplace_back(Shape{1, rows, cols}, std::move(values));
    data.labels.push_back(lab[8 + i]);
    max_label = std::max(max_label, static_cast<int>(lab[8 + i]));
  }
  data.class_count = max_label + 1;
  return data;
}

void write_idx_images(const std::filesystem::path& path, std::span<const std::uint8_t> pixels,
                      std::uint32_t count, std::uint32_t rows, std::uint32_t cols) {
  if (pixels.size() != static_cast<std::size_t>(count) * rows * cols) {
    throw ShapeError("IDX pixel buffer does not match count*rows*cols");
  }
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxImageMagic);
  put_be32(out, count);
  put_be32(out, rows);
  put_be32(out, cols);
  out.insert(out.end(), pixels.begin(), pixels.end());
  write_bytes(path, out);
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  write_bytes(path, out);
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& data, double fraction,
                                                std::uint64_t rng_seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error("split fraction must lie in (0, 1)");
  if (data.size() < 2) throw Error("split needs at least 2 samples");
  data.validate();
  const std::size_t n = data.size();
  const auto total_first = static_cast<std::size_t>(
      std::clamp<double>(std::round(fraction * static_cast<double>(n)), 1.0, static_cast<double>(n - 1)));

  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(data.class_count));
  for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);

  // Per-class quotas: floor of the proportional share, bounded so classes with
  // two or more samples land in both halves, then largest remainders.
  const std::size_t classes = by_class.size();
  std::vector<std::size_t> quota(classes), lo(classes), hi(classes);
  std::vector<double> remainder(classes);
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t k = by_class[c].size();
    lo[c] = k >= 2 ? 1 : 0;
    hi[c] = k >= 2 ? k - 1 : k;
    const double share = fraction * static_cast<double>(k);
    quota[c] = std::clamp(static_cast<std::size_t>(std::floor(share)), lo[c], hi[c]);
    remainder[c] = share - static_cast<double>(quota[c]);
    assigned += quota[c];
  }
  std::vector<std::size_t> rank(classes);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  while (assigned < total_first) {
    bool moved = false;
    for (std::size_t c : rank) {
      if (assigned < total_first && quota[c] < hi[c]) {
        ++quota[c];
        ++assigned;
        moved = true;
      }
    }
    if (!moved) break;
  }
  while (assigned > total_first) {
    bool moved = false;
    for (auto it = rank.rbegin(); it != rank.rend(); ++it) {
      if (assigned > total_first && quota[*it] > lo[*it]) {
        --quota[*it];
        --assigned;
        moved = true;
      }
    }
    if (!moved) break;
  }

  Rng rng(rng_seed);
  std::vector<std::size_t> first, second;
  for (std::size_t c = 0; c < classes; ++c) {
    auto idx = by_class[c];
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    first.insert(first.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(quota[c]));
    second.insert(second.end(), idx.begin() + static_cast<std::ptrdiff_t>(quota[c]), idx.end());
  }
  for (auto* half : {&first, &second}) {
    for (std::size_t i = half->size(); i > 1; --i) std::swap((*half)[i - 1], (*half)[rng.below(i)]);
  }
  if (first.empty() || second.empty()) throw Error("split produced an empty half");
  return {subset(data, first), subset(data, second)};
}

LabeledDataset filter_class(const LabeledDataset& data, int label) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] == label) idx.push_back(i);
  }
  return subset(data, idx);
}

}  // namespace latentfuzz
