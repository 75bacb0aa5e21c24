/* Copyright 2026 The hefriendly Authors.
 * This program is Licensed under the Apache License, Version 2.0
 * (the "License"); you may not use this file except in compliance
 * with the License. You may obtain a copy of the License at
 *   http://www.apache.org/licenses/LICENSE-2.0
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License. See accompanying LICENSE file.
 */
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "hef/dataset.hpp"

using namespace hef;

namespace {

DatasetSpec small_spec(const std::string& gen = "shapes") {
  DatasetSpec s;
  s.generator = gen;
  s.train = 60;
  s.validation = 15;
  s.test = 30;
  s.height = s.width = 12;
  return s;
}

std::vector<double> image(const Split& s, std::size_t i) {
  const std::size_t len = s.images.size() / s.size();
  return {s.images.data().begin() + i * len, s.images.data().begin() + (i + 1) * len};
}

}  // namespace

TEST(Dataset, SplitSizesAndShapes) {
  auto d = load_dataset(small_spec());
  EXPECT_EQ(d.train.size(), 60u);
  EXPECT_EQ(d.validation.size(), 15u);
  EXPECT_EQ(d.test.size(), 30u);
  EXPECT_EQ(d.train.images.shape(), (Shape{60, 1, 12, 12}));
  EXPECT_EQ(d.test.class_counts(3), (std::vector<std::size_t>{10, 10, 10}));
}

TEST(Dataset, DeterministicForFixedSeed) {
  for (const char* gen : {"shapes", "blobs"}) {
    auto a = load_dataset(small_spec(gen)), b = load_dataset(small_spec(gen));
    EXPECT_EQ(a.train.images, b.train.images);
    EXPECT_EQ(a.test.images, b.test.images);
    auto spec = small_spec(gen);
    spec.seed = 7;
    EXPECT_NE(load_dataset(spec).train.images, a.train.images);
  }
}

TEST(Dataset, SplitsAreDisjoint) {
  auto d = load_dataset(small_spec());
  std::set<std::vector<double>> seen;
  for (const Split* s : {&d.train, &d.validation, &d.test})
    for (std::size_t i = 0; i < s->size(); ++i) EXPECT_TRUE(seen.insert(image(*s, i)).second);
}

TEST(Dataset, BatchesAreIdenticalAcrossRuns) {
  auto d = load_dataset(small_spec());
  BatchIterator a(d.train, 16, 111), b(d.train, 16, 111);
  Tensor xa, xb;
  std::vector<std::size_t> ya, yb;
  for (int epoch = 0; epoch < 2; ++epoch) {
    a.start_epoch();
    b.start_epoch();
    std::size_t seen = 0;
    while (a.next(xa, ya)) {
      ASSERT_TRUE(b.next(xb, yb));
      EXPECT_EQ(xa, xb);
      EXPECT_EQ(ya, yb);
      seen += ya.size();
    }
    EXPECT_FALSE(b.next(xb, yb));
    EXPECT_EQ(seen, 60u);
  }
}

TEST(Dataset, DifferentSeedsShuffleDifferently) {
  auto d = load_dataset(small_spec());
  BatchIterator a(d.train, 60, 111), b(d.train, 60, 222);
  Tensor xa, xb;
  std::vector<std::size_t> ya, yb;
  a.start_epoch();
  b.start_epoch();
  a.next(xa, ya);
  b.next(xb, yb);
  EXPECT_NE(xa, xb);
}

TEST(Dataset, NoAugmentationYieldsSourceImagesBitwise) {
  auto d = load_dataset(small_spec());
  BatchIterator it(d.train, 7, 3);
  it.start_epoch();
  Tensor x;
  std::vector<std::size_t> y;
  std::multiset<std::vector<double>> src, got;
  for (std::size_t i = 0; i < d.train.size(); ++i) src.insert(image(d.train, i));
  while (it.next(x, y)) {
    Split tmp{x, y};
    for (std::size_t i = 0; i < y.size(); ++i) got.insert(image(tmp, i));
  }
  EXPECT_EQ(src, got);
}

TEST(Dataset, AugmentationOnlyTouchesTrainBatches) {
  auto spec = small_spec();
  spec.augment.hflip = spec.augment.rotate = true;
  auto aug = load_dataset(spec), plain = load_dataset(small_spec());
  EXPECT_EQ(aug.train.images, plain.train.images);
  EXPECT_EQ(aug.test.images, plain.test.images);
  BatchIterator it(aug.train, 60, 5, spec.augment);
  it.start_epoch();
  Tensor x;
  std::vector<std::size_t> y;
  it.next(x, y);
  std::multiset<std::vector<double>> src, got;
  for (std::size_t i = 0; i < 60; ++i) src.insert(image(aug.train, i));
  Split tmp{x, y};
  for (std::size_t i = 0; i < 60; ++i) got.insert(image(tmp, i));
  EXPECT_NE(src, got);
  // Flips and rotations permute pixels, so every image keeps its sum.
  std::multiset<double> s1, s2;
  auto rounded_sum = [](const std::vector<double>& v) {
    double s = 0;
    for (double e : v) s += e;
    return std::round(s * 1e6);
  };
  for (auto& v : src) s1.insert(rounded_sum(v));
  for (auto& v : got) s2.insert(rounded_sum(v));
  EXPECT_EQ(s1, s2);
}

TEST(Dataset, NormalizationUsesTrainStatistics) {
  auto spec = small_spec();
  spec.augment.normalize = true;
  auto d = load_dataset(spec);
  double m = 0, sq = 0;
  for (double v : d.train.images.data()) m += v;
  m /= d.train.images.size();
  for (double v : d.train.images.data()) sq += (v - m) * (v - m);
  EXPECT_NEAR(m, 0.0, 1e-12);
  EXPECT_NEAR(sq / d.train.images.size(), 1.0, 1e-12);
}

TEST(Dataset, CsvFileIsSplitInOrder) {
  const std::string path = testing::TempDir() + "/tiny.csv";
  {
    std::ofstream out(path);
    for (int i = 0; i < 7; ++i) out << (i % 2) << ',' << i << ',' << i + 0.5 << "\n";
  }
  DatasetSpec s;
  s.generator = "file";
  s.path = path;
  s.classes = 2;
  s.channels = 1;
  s.height = 1;
  s.width = 2;
  s.train = 4;
  s.validation = 1;
  s.test = 2;
  auto d = load_dataset(s);
  EXPECT_EQ(d.train.labels, (std::vector<std::size_t>{0, 1, 0, 1}));
  EXPECT_EQ(d.validation.images[0], 4.0);
  EXPECT_EQ(d.test.images[3], 6.5);
  s.test = 3;
  EXPECT_THROW(load_dataset(s), DataError);
}

TEST(Dataset, MissingFileIsIoErrorWithPath) {
  DatasetSpec s;
  s.generator = "file";
  s.path = "/no/such/data.csv";
  try {
    load_dataset(s);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_EQ(e.path(), "/no/such/data.csv");
  }
}

TEST(Dataset, BadSpecsAreConfigErrors) {
  auto s = small_spec();
  s.generator = "mnist";
  EXPECT_THROW(load_dataset(s), ConfigError);
  s = small_spec();
  s.classes = 4;
  EXPECT_THROW(load_dataset(s), ConfigError);
  s = small_spec("blobs");
  s.test = 0;
  EXPECT_THROW(load_dataset(s), ConfigError);
}
