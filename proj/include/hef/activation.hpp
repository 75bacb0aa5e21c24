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

#include <optional>
#include <string>
#include <string_view>

#include "hef/autodiff.hpp"
#include "hef/errors.hpp"
#include "hef/ops.hpp"
#include "hef/tensor.hpp"

namespace hef {

enum class ActivationKind { Relu, Square, ApproxRelu, TrainablePoly, Weighted };

inline std::string_view activation_name(ActivationKind k) {
  switch (k) {
    case ActivationKind::Relu: return "relu";
    case ActivationKind::Square: return "square";
    case ActivationKind::ApproxRelu: return "approx_relu";
    case ActivationKind::TrainablePoly: return "trainable_poly";
    case ActivationKind::Weighted: return "weighted";
  }
  return "?";
}

inline std::optional<ActivationKind> parse_activation_kind(std::string_view name) {
  for (auto k : {ActivationKind::Relu, ActivationKind::Square, ActivationKind::ApproxRelu,
                 ActivationKind::TrainablePoly, ActivationKind::Weighted})
    if (activation_name(k) == name) return k;
  return std::nullopt;
}

/// Trainable (a, b) of a x^2 + b x, one pair per activation layer.
struct PolyCoeffs {
  Tensor a = Tensor::scalar(0.0);
  Tensor b = Tensor::scalar(1.0);
};

/// Initial values for PolyCoeffs.
struct CoeffInit {
  double a = 0.0;
  double b = 1.0;

  /// (0, 1): the polynomial starts as the identity, which agrees with ReLU on positives.
  static CoeffInit relu_like() { return {0.0, 1.0}; }
  /// s1 * 0.0 x^2 + s2 * 1.1 x.
  static CoeffInit scaled(double s1, double s2) { return {s1 * 0.0, s2 * 1.1}; }

  /// "relu_like", "scaled_0.1_0.1" or "scaled_0.01_0.1".
  static CoeffInit preset(std::string_view name) {
    if (name == "relu_like") return relu_like();
    if (name == "scaled_0.1_0.1") return scaled(0.1, 0.1);
    if (name == "scaled_0.01_0.1") return scaled(0.01, 0.1);
    throw ConfigError("unknown coefficient-init preset '" + std::string(name) + "'");
  }
};

/// State of one activation layer. `lambda` is only meaningful for Weighted
/// and is never part of the trainable parameter set.
struct Activation {
  ActivationKind kind = ActivationKind::Relu;
  PolyCoeffs coeffs;
  double lambda = 0.0;

  /// Whether the polynomial coefficients take part in the computation.
  bool uses_coeffs() const noexcept {
    return kind == ActivationKind::TrainablePoly || kind == ActivationKind::Weighted;
  }
};

/// Applies `act` to x, binding the coefficients as tape variables when used.
inline Var apply_activation(Tape& tape, Var x, Activation& act) {
  switch (act.kind) {
    case ActivationKind::Relu: return relu(tape, x);
    case ActivationKind::Square: return square(tape, x);
    case ActivationKind::ApproxRelu: return approx_relu(tape, x);
    case ActivationKind::TrainablePoly:
      return trainable_poly(tape, x, tape.variable(act.coeffs.a), tape.variable(act.coeffs.b));
    case ActivationKind::Weighted:
      return weighted_act(tape, x, tape.variable(act.coeffs.a), tape.variable(act.coeffs.b),
                          act.lambda);
  }
  throw ContractError("unknown activation kind");
}

/// Value-only evaluation of an activation on a tensor.
inline Tensor evaluate_activation(const Activation& act, const Tensor& x) {
  Tape tape(false);
  Activation copy = act;
  return tape.value(apply_activation(tape, tape.constant(x), copy));
}

}  // namespace hef
