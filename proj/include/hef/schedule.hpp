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

#include <cstddef>
#include <iostream>
#include <string>

#include "hef/errors.hpp"
#include "hef/graph.hpp"

namespace hef {

/// ReLU for `start_epoch` epochs, then a linear ramp to the polynomial over
/// `duration` epochs.
struct TransitionSchedule {
  std::size_t start_epoch = 3;
  std::size_t duration = 10;

  void validate() const {
    if (duration == 0) throw ConfigError("transition duration must be >= 1 epoch");
  }
};

/// Blend ratio for epoch e: 0 while e - e0 <= 0, (e - e0) / d while
/// 0 < e - e0 < d, and 1 afterwards.
inline double lambda_at_epoch(const TransitionSchedule& s, std::size_t epoch) {
  s.validate();
  if (epoch <= s.start_epoch) return 0.0;
  const std::size_t since = epoch - s.start_epoch;
  if (since < s.duration) return static_cast<double>(since) / static_cast<double>(s.duration);
  return 1.0;
}

/// All-at-once replacement: 0 before e0, 1 from e0 on.
inline double step_lambda(std::size_t start_epoch, std::size_t epoch) {
  return epoch >= start_epoch ? 1.0 : 0.0;
}

/// In-place form of apply_transition. Returns false (and changes nothing)
/// when the graph has no activation layers.
inline bool set_transition(ModelGraph& g, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ContractError("transition lambda " + std::to_string(lambda) + " outside [0, 1]");
  bool any = false;
  for (auto& n : g.nodes()) {
    auto* a = n.as<ActivationLayer>();
    if (!a) continue;
    const auto k = a->act.kind;
    if (k != ActivationKind::Relu && k != ActivationKind::Weighted &&
        k != ActivationKind::TrainablePoly)
      throw ContractError("layer '" + n.name + "' is a fixed " +
                          std::string(activation_name(k)) + " activation and cannot transition");
    any = true;
  }
  if (!any) return false;
  for (auto& n : g.nodes()) {
    auto* a = n.as<ActivationLayer>();
    if (!a) continue;
    if (lambda == 1.0) {
      a->act.kind = ActivationKind::TrainablePoly;
      a->act.lambda = 1.0;
    } else {
      a->act.kind = ActivationKind::Weighted;
      a->act.lambda = lambda;
    }
  }
  return true;
}

/// Moves every activation layer to the same blend ratio: Weighted(lambda)
/// for lambda < 1, TrainablePoly at 1. Coefficients are left untouched.
/// Layer-by-layer replacement is deliberately not offered.
inline ModelGraph apply_transition(const ModelGraph& g, double lambda) {
  ModelGraph out = g;
  if (!set_transition(out, lambda))
    std::cerr << "warning: apply_transition: model has no activation layers\n";
  return out;
}

}  // namespace hef
