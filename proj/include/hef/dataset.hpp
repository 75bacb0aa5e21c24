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
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "hef/errors.hpp"
#include "hef/random.hpp"
#include "hef/tensor.hpp"
#include "hef/text.hpp"

namespace hef {

struct Augmentation {
  bool hflip = false;
  /// Random multiples of 90 degrees (square images only).
  bool rotate = false;
  /// Per-dataset standardization with train-split mean and std; applied to
  /// every split since it is preprocessing rather than augmentation.
  bool normalize = false;
};

/// Desk-scale stand-in for an image classification dataset.
///
/// `generator` is "shapes" (outlined ring / square / cross on a noisy
/// background), "blobs" (class-specific mean pattern plus noise) or "file"
/// (CSV rows `label,v0,v1,...` read from `path`, assigned to train, validation
/// and test in order).
struct DatasetSpec {
  std::string name = "shapes3";
  std::string generator = "shapes";
  std::string path;
  std::size_t train = 1500;
  std::size_t validation = 300;
  std::size_t test = 300;
  std::size_t classes = 3;
  std::size_t channels = 1;
  std::size_t height = 16;
  std::size_t width = 16;
  double noise = 0.5;
  std::uint64_t seed = 2024;
  Augmentation augment;
};

struct Split {
  Tensor images;  // [n, c, h, w]
  std::vector<std::size_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::vector<std::size_t> class_counts(std::size_t classes) const {
    std::vector<std::size_t> counts(classes, 0);
    for (auto y : labels) ++counts.at(y);
    return counts;
  }
};

struct Dataset {
  DatasetSpec spec;
  Split train, validation, test;
};

namespace detail {

inline void draw_shapes_image(std::size_t label, const DatasetSpec& s, Rng& rng, double* px) {
  const std::size_t h = s.height, w = s.width;
  const double extent = static_cast<double>(std::min(h, w));
  const double radius = uniform(rng, 0.2, 0.38) * extent;
  const double cy = uniform(rng, radius, static_cast<double>(h) - radius);
  const double cx = uniform(rng, radius, static_cast<double>(w) - radius);
  const double amp = uniform(rng, 0.6, 1.4);
  const double gy = uniform(rng, -0.04, 0.04), gx = uniform(rng, -0.04, 0.04);
  for (std::size_t c = 0; c < s.channels; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = static_cast<double>(y) + 0.5 - cy;
        const double dx = static_cast<double>(x) + 0.5 - cx;
        double dist = 0.0;  // distance from the stroke
        switch (label % 3) {
          case 0: dist = std::abs(std::hypot(dy, dx) - radius); break;
          case 1: dist = std::abs(std::max(std::abs(dy), std::abs(dx)) - radius * 0.85); break;
          default: {
            const double arm = std::min(std::abs(dy), std::abs(dx));
            const double reach = std::max(std::abs(dy), std::abs(dx));
            dist = reach <= radius ? arm : std::hypot(arm, reach - radius);
          }
        }
        const double stroke = dist < 0.8 ? amp : 0.0;
        px[(c * h + y) * w + x] = stroke + gy * dy + gx * dx + normal(rng, 0.0, s.noise);
      }
}

inline void draw_blobs_image(std::size_t label, const DatasetSpec& s, Rng& pattern_rng, Rng& rng,
                             std::vector<std::vector<double>>& means, double* px) {
  const std::size_t len = s.channels * s.height * s.width;
  if (means.empty()) {
    means.assign(s.classes, std::vector<double>(len));
    for (auto& m : means)
      for (auto& v : m) v = normal(pattern_rng, 0.0, 1.0);
  }
  for (std::size_t i = 0; i < len; ++i) px[i] = means[label][i] + normal(rng, 0.0, s.noise);
}

inline Split make_split(std::size_t n, const DatasetSpec& s) {
  Split sp;
  sp.images = n ? Tensor({n, s.channels, s.height, s.width}) : Tensor();
  sp.labels.assign(n, 0);
  return sp;
}

inline std::vector<Split> read_csv_dataset(const DatasetSpec& s) {
  std::ifstream in(s.path);
  if (!in) throw IoError("cannot open dataset file", s.path);
  const std::size_t len = s.channels * s.height * s.width;
  std::vector<Split> splits{make_split(s.train, s), make_split(s.validation, s), make_split(s.test, s)};
  const std::size_t sizes[3] = {s.train, s.validation, s.test};
  std::string line;
  std::size_t which = 0, row = 0, lineno = 0;
  while (which < 3 && std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    while (which < 3 && row == sizes[which]) {
      ++which;
      row = 0;
    }
    if (which == 3) break;
    auto fields = text::split(line, ',');
    if (fields.size() != len + 1)
      throw DataError(s.path + ":" + std::to_string(lineno) + ": expected " + std::to_string(len + 1) +
                      " fields");
    const auto label = text::parse_size(fields[0], "label");
    if (label >= s.classes) throw DataError(s.path + ":" + std::to_string(lineno) + ": label out of range");
    splits[which].labels[row] = label;
    for (std::size_t i = 0; i < len; ++i)
      splits[which].images[row * len + i] = text::parse_double(fields[i + 1], "pixel");
    ++row;
  }
  while (which < 3 && row == sizes[which]) {
    ++which;
    row = 0;
  }
  if (which < 3) throw DataError(s.path + ": not enough rows for the requested split sizes");
  return splits;
}

}  // namespace detail

/// Builds the three disjoint splits. Content depends only on the DatasetSpec (its
/// own generator seed); run seeds affect batching, not the data.
inline Dataset load_dataset(const DatasetSpec& spec) {
  if (spec.classes < 2) throw ConfigError("dataset needs at least two classes");
  if (spec.train == 0 || spec.test == 0) throw ConfigError("dataset train and test splits must be non-empty");
  if (spec.augment.rotate && spec.height != spec.width)
    throw ConfigError("rotation augmentation needs square images");
  Dataset ds;
  ds.spec = spec;
  std::vector<Split> splits;
  if (spec.generator == "file") {
    splits = detail::read_csv_dataset(spec);
  } else if (spec.generator == "shapes" || spec.generator == "blobs") {
    if (spec.generator == "shapes" && spec.classes != 3)
      throw ConfigError("the shapes generator produces exactly 3 classes");
    Rng rng(spec.seed);
    Rng pattern_rng(spec.seed ^ 0xb10b5ULL);
    std::vector<std::vector<double>> means;
    const std::size_t len = spec.channels * spec.height * spec.width;
    for (std::size_t n : {spec.train, spec.validation, spec.test}) {
      Split sp = detail::make_split(n, spec);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % spec.classes;
        sp.labels[i] = label;
        double* px = &sp.images[i * len];
        if (spec.generator == "shapes")
          detail::draw_shapes_image(label, spec, rng, px);
        else
          detail::draw_blobs_image(label, spec, pattern_rng, rng, means, px);
      }
      splits.push_back(std::move(sp));
    }
  } else {
    throw ConfigError("unknown dataset generator '" + spec.generator + "'");
  }
  ds.train = std::move(splits[0]);
  ds.validation = std::move(splits[1]);
  ds.test = std::move(splits[2]);

  if (spec.augment.normalize) {
    double mean = 0.0, sq = 0.0;
    for (double v : ds.train.images.data()) mean += v;
    mean /= static_cast<double>(ds.train.images.size());
    for (double v : ds.train.images.data()) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / static_cast<double>(ds.train.images.size()));
    const double inv = sd > 0.0 ? 1.0 / sd : 1.0;
    for (Split* sp : {&ds.train, &ds.validation, &ds.test})
      if (sp->size())
        for (auto& v : sp->images.data()) v = (v - mean) * inv;
  }
  return ds;
}

/// Mini-batches of one split in a seed-determined order. Train-time
/// augmentation is applied on the fly, so the stored split never changes.
class BatchIterator {
 public:
  BatchIterator(const Split& split, std::size_t batch_size, std::uint64_t seed,
                Augmentation augment = {})
      : split_(split), batch_(batch_size), rng_(seed), augment_(augment) {
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    order_.resize(split.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  }

  /// Reshuffles; call at the start of every epoch.
  void start_epoch() {
    shuffle(order_, rng_);
    pos_ = 0;
  }

  bool next(Tensor& images, std::vector<std::size_t>& labels) {
    if (pos_ >= order_.size()) return false;
    const std::size_t n = std::min(batch_, order_.size() - pos_);
    const auto& shape = split_.images.shape();
    const std::size_t c = shape[1], h = shape[2], w = shape[3], len = c * h * w;
    images = Tensor({n, c, h, w});
    labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t src = order_[pos_ + i];
      labels[i] = split_.labels[src];
      const double* in = &split_.images.data()[src * len];
      double* out = &images[i * len];
      const bool flip = augment_.hflip && uniform01(rng_) < 0.5;
      const std::size_t turns = augment_.rotate ? uniform_index(rng_, 4) : 0;
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) {
            std::size_t sy = y, sx = flip ? w - 1 - x : x;
            for (std::size_t t = 0; t < turns; ++t) {
              const std::size_t ny = sx, nx = h - 1 - sy;
              sy = ny;
              sx = nx;
            }
            out[(ch * h + y) * w + x] = in[(ch * h + sy) * w + sx];
          }
    }
    pos_ += n;
    return true;
  }

 private:
  const Split& split_;
  std::size_t batch_;
  Rng rng_;
  Augmentation augment_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace hef
