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
#include <limits>

#include "latentfuzz/error.hpp"
#include "latentfuzz/rng.hpp"
#include "latentfuzz/tensor.hpp"

using namespace latentfuzz;

TEST(Tensor, RejectsShapeDataMismatch) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<float>(5)), ShapeError);
  EXPECT_NO_THROW(Tensor({2, 3}, std::vector<float>(6)));
}

TEST(Tensor, ZerosAndFiniteness) {
  Tensor t = Tensor::zeros({3, 2});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_TRUE(t.all_finite());
  t.data[4] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
  t.data[4] = std::numeric_limits<float>::infinity();
  EXPECT_FALSE(t.all_finite());
}

TEST(Tensor, ArgmaxPrefersLowestIndexOnTies) {
  const std::vector<float> v = {0.5f, 0.5f, 0.1f};
  EXPECT_EQ(argmax(v), 0u);
  const std::vector<float> w = {0.1f, 0.7f, 0.7f};
  EXPECT_EQ(argmax(w), 1u);
}

TEST(Tensor, ShapeHelpers) {
  const Shape s = {1, 16, 16};
  EXPECT_EQ(element_count(s), 256u);
  EXPECT_EQ(shape_to_string(s), "[1,16,16]");
}

TEST(Rng, SameSeedSameSequence) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    ASSERT_EQ(a.next_u64(), b.next_u64());
    ASSERT_EQ(a.normal(), b.normal());
    ASSERT_EQ(a.uniform(), b.uniform());
  }
}

TEST(Rng, UniformAndBelowStayInRange) {
  Rng r(7);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(r.below(7), 7u);
  }
}

TEST(Rng, BelowIsRoughlyUniform) {
  Rng r(3);
  std::vector<int> counts(5, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[r.below(5)];
  for (int c : counts) EXPECT_NEAR(c / double(n), 0.2, 0.01);
}

TEST(Rng, NormalMoments) {
  Rng r(11);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(sq / n - mean * mean, 1.0, 0.02);
}

TEST(Rng, ForkedStreamsDifferAndAreReproducible) {
  Rng a(5), b(5);
  Rng fa = a.fork(1), fb = b.fork(1);
  Rng other = Rng(5).fork(2);
  const auto x = fa.next_u64();
  EXPECT_EQ(x, fb.next_u64());
  EXPECT_NE(x, other.next_u64());
}
