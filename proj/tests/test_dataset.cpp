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

#include <algorithm>
#include <fstream>

#include "latentfuzz/dataset.hpp"
#include "latentfuzz/error.hpp"
#include "support/oracles.hpp"

using namespace latentfuzz;

namespace {

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Idx, HandWrittenFileScalesPixels) {
  const auto dir = oracle::scratch_dir("idx_hand");
  // One 2x2 image, big-endian header.
  write_bytes(dir / "img", {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 255, 128, 64});
  write_bytes(dir / "lab", {0, 0, 8, 1, 0, 0, 0, 1, 7});
  const LabeledDataset d = load_idx(dir / "img", dir / "lab");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.inputs[0].shape, (Shape{1, 2, 2}));
  EXPECT_EQ(d.inputs[0].data, (std::vector<float>{0.0f, 1.0f, 128.0f / 255.0f, 64.0f / 255.0f}));
  EXPECT_EQ(d.labels[0], 7);
  EXPECT_EQ(d.class_count, 8);
}

TEST(Idx, RejectsBadMagicAndTruncation) {
  const auto dir = oracle::scratch_dir("idx_bad");
  write_bytes(dir / "img", {0, 0, 8, 2, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 5});
  write_bytes(dir / "lab", {0, 0, 8, 1, 0, 0, 0, 1, 0});
  EXPECT_THROW(load_idx(dir / "img", dir / "lab"), FormatError);
  write_bytes(dir / "img", {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 1, 5});
  EXPECT_THROW(load_idx(dir / "img", dir / "lab"), FormatError);
  EXPECT_THROW(load_idx(dir / "missing", dir / "lab"), Error);
}

TEST(Idx, WriteLoadRoundTrip) {
  const auto dir = oracle::scratch_dir("idx_roundtrip");
  std::vector<std::uint8_t> pixels(3 * 4 * 5), labels = {2, 0, 1};
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<std::uint8_t>(i * 7);
  write_idx_images(dir / "img", pixels, 3, 4, 5);
  write_idx_labels(dir / "lab", labels);
  const LabeledDataset d = load_idx(dir / "img", dir / "lab");
  ASSERT_EQ(d.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(d.labels[i], labels[i]);
    for (std::size_t j = 0; j < 20; ++j) EXPECT_FLOAT_EQ(d.inputs[i].data[j] * 255.0f, pixels[i * 20 + j]);
  }
}

TEST(Split, HalvesPartitionTheDataset) {
  const LabeledDataset d = gen_blobs({2, {1, 4, 4}, 5, 0.1, 3});
  const auto [a, b] = split(d, 0.5, 9);
  EXPECT_EQ(a.size(), 5u);
  EXPECT_EQ(b.size(), 5u);
  std::vector<std::vector<float>> joined, original;
  for (const auto& x : a.inputs) joined.push_back(x.data);
  for (const auto& x : b.inputs) joined.push_back(x.data);
  for (const auto& x : d.inputs) original.push_back(x.data);
  std::sort(joined.begin(), joined.end());
  std::sort(original.begin(), original.end());
  EXPECT_EQ(joined, original);
  for (int c = 0; c < 2; ++c) {
    EXPECT_FALSE(filter_class(a, c).empty());
    EXPECT_FALSE(filter_class(b, c).empty());
  }
}

TEST(Split, DeterministicAndValidated) {
  const LabeledDataset d = gen_blobs({3, {1, 4, 4}, 20, 0.1, 4});
  const auto s1 = split(d, 0.7, 1), s2 = split(d, 0.7, 1);
  EXPECT_EQ(s1.first.inputs, s2.first.inputs);
  EXPECT_EQ(s1.second.labels, s2.second.labels);
  EXPECT_THROW(split(d, 1.0, 1), Error);
  EXPECT_THROW(split(d, 0.0, 1), Error);
}

TEST(Blobs, ZeroSpreadReproducesTemplate) {
  const LabeledDataset d = gen_blobs({3, {1, 6, 6}, 4, 0.0, 5});
  ASSERT_EQ(d.size(), 12u);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d.inputs[i], blob_template(d.labels[i], 3, {1, 6, 6}));
}

TEST(Blobs, DeterministicInRangeAndBalanced) {
  const BlobSpec spec{4, {3, 5, 5}, 10, 0.2, 6};
  const LabeledDataset a = gen_blobs(spec), b = gen_blobs(spec);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NO_THROW(a.validate());
  for (int c = 0; c < 4; ++c) EXPECT_EQ(filter_class(a, c).size(), 10u);
  for (const auto& x : a.inputs)
    for (float v : x.data) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  EXPECT_NE(blob_template(0, 4, {3, 5, 5}), blob_template(1, 4, {3, 5, 5}));
}

TEST(LabeledDataset, ValidateCatchesInconsistency) {
  LabeledDataset d = gen_blobs({2, {1, 2, 2}, 2, 0.1, 7});
  d.labels[0] = 5;
  EXPECT_THROW(d.validate(), Error);
  d = gen_blobs({2, {1, 2, 2}, 2, 0.1, 7});
  d.inputs[1] = Tensor::zeros({4});
  EXPECT_THROW(d.validate(), Error);
}
