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
#include <span>
#include <string>

#include "hef/autodiff.hpp"
#include "hef/errors.hpp"
#include "hef/ops.hpp"
#include "hef/tensor.hpp"

namespace hef {

struct KDParams {
  double tau = 10.0;
  double alpha = 0.1;

  void validate() const {
    if (!(tau > 0.0)) throw ContractError("distillation temperature must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("distillation alpha must lie in [0, 1]");
  }
};

/// Row-wise softmax(logits / tau).
inline Tensor soft_targets(const Tensor& logits, double tau) {
  if (!(tau > 0.0)) throw ContractError("soft_targets: temperature must be positive");
  if (logits.rank() != 2) throw DimensionError("soft_targets: expected [batch, classes] logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor q(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = &logits.data()[i * k];
    const double mx = *std::max_element(r, r + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += q[i * k + j] = std::exp((r[j] - mx) / tau);
    for (std::size_t j = 0; j < k; ++j) q[i * k + j] /= z;
  }
  return q;
}

/// alpha tau^2 CE(teacher soft targets, student soft targets)
///   + (1 - alpha) CE(labels, student softmax), batch-averaged.
///
/// The teacher enters only through its values, so no gradient ever reaches it.
/// With alpha = 0 this is exactly cross_entropy().
inline Var kd_loss(Tape& tape, Var student_logits, Var teacher_logits,
                   std::span<const std::size_t> labels, const KDParams& p) {
  p.validate();
  const Tensor& sv = tape.value(student_logits);
  const Tensor& tv = tape.value(teacher_logits);
  if (sv.shape() != tv.shape())
    throw DimensionError("kd_loss: student " + shape_str(sv.shape()) + " and teacher " +
                         shape_str(tv.shape()) + " logits differ in shape");
  // Recording below may reallocate the tape, so take what we need now.
  const std::size_t classes = sv.dim(1);
  if (p.alpha == 0.0) return cross_entropy(tape, student_logits, labels);
  const Tensor teacher_q = soft_targets(tv, p.tau);
  Var student_logq = log_softmax(tape, scale(tape, student_logits, 1.0 / p.tau));
  Var distill = scale(tape, soft_cross_entropy(tape, student_logq, teacher_q), p.alpha * p.tau * p.tau);
  if (p.alpha == 1.0) {
    // Labels are still validated.
    for (auto y : labels)
      if (y >= classes) throw DataError("class index " + std::to_string(y) + " out of range");
    return distill;
  }
  Var hard = scale(tape, cross_entropy(tape, student_logits, labels), 1.0 - p.alpha);
  return add(tape, distill, hard);
}

}  // namespace hef
