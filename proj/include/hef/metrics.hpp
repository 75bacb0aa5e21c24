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
#include <cstdint>
#include <optional>
#include <span>
#include <tuple>
#include <string>
#include <vector>

#include "hef/dataset.hpp"
#include "hef/errors.hpp"
#include "hef/graph.hpp"

namespace hef {

struct EvalResult {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;
};

/// Accuracy and one-vs-rest F1 from predicted and true class indices.
/// F1 = 2TP / (2TP + FP + FN), and 0 for a class that is never predicted
/// and never present.
inline EvalResult classification_metrics(std::span<const std::size_t> predicted,
                                         std::span<const std::size_t> actual, std::size_t classes) {
  if (actual.empty()) throw ContractError("evaluation on an empty set");
  if (predicted.size() != actual.size())
    throw DimensionError("prediction and label counts differ");
  std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (predicted[i] >= classes || actual[i] >= classes)
      throw DataError("class index out of range in evaluation");
    if (predicted[i] == actual[i]) {
      ++correct;
      ++tp[actual[i]];
    } else {
      ++fp[predicted[i]];
      ++fn[actual[i]];
    }
  }
  EvalResult r;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(actual.size());
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    const double f1 = denom ? 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom) : 0.0;
    r.per_class_f1.push_back(f1);
    total += f1;
  }
  r.macro_f1 = total / static_cast<double>(classes);
  return r;
}

/// Row-wise argmax (first maximum wins).
inline std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = &logits.data()[i * k];
    out[i] = static_cast<std::size_t>(std::max_element(r, r + k) - r);
  }
  return out;
}

/// Eval-mode predictions of `model` over a split.
inline std::vector<std::size_t> predict_classes(const ModelGraph& model, const Split& split,
                                                std::size_t batch = 256) {
  std::vector<std::size_t> out;
  out.reserve(split.size());
  const auto& shape = split.images.shape();
  const std::size_t len = split.images.size() / split.size();
  for (std::size_t start = 0; start < split.size(); start += batch) {
    const std::size_t n = std::min(batch, split.size() - start);
    Shape bs = shape;
    bs[0] = n;
    std::vector<double> chunk(split.images.data().begin() + static_cast<std::ptrdiff_t>(start * len),
                              split.images.data().begin() + static_cast<std::ptrdiff_t>((start + n) * len));
    const Tensor logits = model.predict(Tensor(bs, std::move(chunk)));
    if (!logits.all_finite()) throw NumericError("model produced non-finite logits");
    for (auto p : argmax_rows(logits)) out.push_back(p);
  }
  return out;
}

inline EvalResult evaluate(const ModelGraph& model, const Split& split) {
  if (split.size() == 0) throw ContractError("evaluation on an empty set");
  if (model.mode() != Mode::Eval) throw ContractError("evaluate requires an eval-mode model");
  const auto classes = model.output_shape().at(0);
  return classification_metrics(predict_classes(model, split), split.labels, classes);
}

// ---------------------------------------------------------------- records

struct EpochMetrics {
  std::size_t epoch = 0;
  double lambda = 0.0;
  double train_loss = 0.0;
  double val_acc = 0.0;
};

/// Outcome of one (arm, seed) run.
struct MetricsRecord {
  std::string arm;
  std::uint64_t seed = 0;
  std::vector<EpochMetrics> epochs;
  bool failed = false;
  std::optional<std::size_t> failed_epoch;
  std::string failure;
  double test_acc = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;
};

/// Mean and sample standard deviation over the completed runs of one arm.
struct AggregateMetrics {
  std::string arm;
  std::size_t completed = 0;
  std::size_t failure_count = 0;
  bool failed = false;
  double acc_mean = 0.0;
  double acc_std = 0.0;
  double f1_mean = 0.0;
  double f1_std = 0.0;
};

inline std::pair<double, double> mean_and_sample_std(std::span<const double> v) {
  if (v.empty()) return {0.0, 0.0};
  // Shifting by the first value keeps identical inputs at exactly zero spread.
  const double shift = v[0];
  double d = 0.0;
  for (double x : v) d += x - shift;
  d /= static_cast<double>(v.size());
  const double mean = shift + d;
  if (v.size() < 2) return {mean, 0.0};
  double sq = 0.0;
  for (double x : v) sq += (x - shift - d) * (x - shift - d);
  return {mean, std::sqrt(sq / static_cast<double>(v.size() - 1))};
}

inline AggregateMetrics seed_sweep_aggregate(std::span<const MetricsRecord> records) {
  AggregateMetrics a;
  if (!records.empty()) a.arm = records.front().arm;
  std::vector<double> acc, f1;
  for (const auto& r : records) {
    if (r.failed) {
      ++a.failure_count;
      continue;
    }
    acc.push_back(r.test_acc);
    f1.push_back(r.macro_f1);
  }
  a.completed = acc.size();
  a.failed = acc.empty();
  std::tie(a.acc_mean, a.acc_std) = mean_and_sample_std(acc);
  std::tie(a.f1_mean, a.f1_std) = mean_and_sample_std(f1);
  return a;
}

}  // namespace hef
