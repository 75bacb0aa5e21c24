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
#include <functional>
#include <string>
#include <vector>

#include "hef/autodiff.hpp"
#include "hef/graph.hpp"
#include "hef/ops.hpp"
#include "hef/random.hpp"

namespace hef {

struct GradCheckFailure {
  std::string param;
  std::size_t index;
  double analytic;
  double numeric;
  double rel_error;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  double tolerance = 0.0;
  std::vector<GradCheckFailure> failures;

  bool passed() const noexcept { return failures.empty(); }
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero gradients from
/// turning rounding noise into huge ratios.
inline double gradient_relative_error(double analytic, double numeric, double floor = 1e-5) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares reverse-mode gradients of the scalar `loss` with respect to each
/// tensor in `params` against central differences with the given step.
/// `loss` must be deterministic: it is re-evaluated twice per element.
inline GradCheckReport check_gradients(const std::function<Var(Tape&)>& loss,
                                       const std::vector<ParamRef>& params, double tolerance,
                                       double step = 1e-5) {
  for (auto& p : params) p.tensor->drop_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  auto eval = [&] {
    Tape tape(false);
    return tape.value(loss(tape)).item();
  };
  GradCheckReport report;
  report.tolerance = tolerance;
  for (auto& p : params) {
    Tensor& t = *p.tensor;
    std::vector<double> analytic(t.size(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = t[i];
      t[i] = orig + step;
      const double up = eval();
      t[i] = orig - step;
      const double down = eval();
      t[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double rel = gradient_relative_error(analytic[i], numeric);
      report.max_rel_error = std::max(report.max_rel_error, rel);
      ++report.checked;
      if (!(rel < tolerance)) report.failures.push_back({p.name, i, analytic[i], numeric, rel});
    }
    t.drop_grad();
  }
  return report;
}

/// Gradient check of every trainable parameter of `g` for the loss
/// sum_ij r_ij * output_ij with a fixed pseudo-random projection r.
/// Train-mode dropout reuses the same masks on every evaluation.
inline GradCheckReport finite_difference_check(ModelGraph& g, const Tensor& input,
                                               double tolerance, double step = 1e-5) {
  const Shape out_shape = g.output_shape();
  const std::size_t width = shape_size(out_shape);
  Rng proj_rng(0x5eedULL);
  Tensor proj({1, width});
  for (auto& v : proj.data()) v = uniform(proj_rng, -1.0, 1.0);
  const Tensor zero({1});
  // Running statistics must not drift between evaluations.
  std::vector<std::pair<Tensor*, Tensor>> stats;
  for (auto& node : g.nodes())
    if (auto* bn = node.as<BatchNormLayer>()) {
      stats.emplace_back(&bn->running_mean, bn->running_mean);
      stats.emplace_back(&bn->running_var, bn->running_var);
    }
  auto loss = [&](Tape& tape) {
    for (auto& [ptr, saved] : stats) *ptr = saved;
    Rng rng(12345);
    Var y = g.forward(tape, tape.constant(input), &rng);
    if (tape.value(y).rank() != 2) y = flatten(tape, y);
    Var z = dense(tape, y, tape.constant(proj), tape.constant(zero));
    return sum(tape, z);
  };
  auto report = check_gradients(loss, g.parameters(), tolerance, step);
  for (auto& [ptr, saved] : stats) *ptr = saved;
  return report;
}

}  // namespace hef
