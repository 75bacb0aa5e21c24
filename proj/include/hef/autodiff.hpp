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

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "hef/errors.hpp"
#include "hef/tensor.hpp"

namespace hef {

enum class OpKind {
  Dense,
  Conv2d,
  AvgPool,
  MaxPool,
  BatchNorm,
  Relu,
  Square,
  ApproxRelu,
  TrainablePoly,
  Weighted,
  Flatten,
  Dropout,
  Scale,
  Add,
  Sum,
  LogSoftmax,
  NllLoss,
  SoftCrossEntropy,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Dense: return "dense";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::AvgPool: return "avg_pool";
    case OpKind::MaxPool: return "max_pool";
    case OpKind::BatchNorm: return "batch_norm";
    case OpKind::Relu: return "relu";
    case OpKind::Square: return "square";
    case OpKind::ApproxRelu: return "approx_relu";
    case OpKind::TrainablePoly: return "trainable_poly";
    case OpKind::Weighted: return "weighted";
    case OpKind::Flatten: return "flatten";
    case OpKind::Dropout: return "dropout";
    case OpKind::Scale: return "scale";
    case OpKind::Add: return "add";
    case OpKind::Sum: return "sum";
    case OpKind::LogSoftmax: return "log_softmax";
    case OpKind::NllLoss: return "nll_loss";
    case OpKind::SoftCrossEntropy: return "soft_cross_entropy";
  }
  return "?";
}

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

class Tape;

struct TapeNode {
  using Backward = std::function<void(Tape&, const TapeNode&)>;

  OpKind kind;
  std::vector<std::size_t> inputs;
  std::size_t output;
  /// Op-specific values cached by the forward pass.
  std::vector<Tensor> saved;
  Backward backward;
};

/// Append-only record of a forward computation.
///
/// Leaves are either constants or variables bound to an external Tensor;
/// backward() accumulates d(loss)/d(leaf) into the bound tensor's gradient
/// slot and then clears the tape. A non-recording tape evaluates values only.
class Tape {
 public:
  Tape() = default;
  explicit Tape(bool recording) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }

  Var constant(Tensor value) { return push(std::move(value), false, nullptr); }

  /// Leaf whose gradient is delivered to `bound` on backward().
  Var variable(Tensor& bound) {
    if (!bound.materialized()) throw ContractError("cannot bind an unmaterialized tensor");
    Tensor copy(bound.shape(), std::vector<double>(bound.data().begin(), bound.data().end()));
    return push(std::move(copy), recording_, &bound);
  }

  const Tensor& value(Var v) const { return slots_.at(v.id).value; }
  bool requires_grad(Var v) const { return slots_.at(v.id).requires_grad; }
  bool requires_grad(std::size_t slot) const { return slots_[slot].requires_grad; }
  const Tensor& value(std::size_t slot) const { return slots_[slot].value; }

  std::size_t num_values() const noexcept { return slots_.size(); }
  std::span<const TapeNode> nodes() const noexcept { return nodes_; }

  /// Records an op output. Inputs that do not require gradients produce a
  /// plain value with no node.
  Var record(OpKind kind, std::initializer_list<Var> inputs, Tensor out,
             std::vector<Tensor> saved, TapeNode::Backward backward) {
    bool needs = false;
    for (auto in : inputs) needs = needs || slots_.at(in.id).requires_grad;
    Var result = push(std::move(out), recording_ && needs, nullptr);
    if (!(recording_ && needs)) return result;
    TapeNode node{kind, {}, result.id, std::move(saved), std::move(backward)};
    for (auto in : inputs) node.inputs.push_back(in.id);
    nodes_.push_back(std::move(node));
    return result;
  }

  /// Gradient buffer of `slot`, zero-initialized on first access.
  std::span<double> grad(std::size_t slot) {
    auto& s = slots_[slot];
    if (s.grad.empty()) s.grad.assign(s.value.size(), 0.0);
    return s.grad;
  }
  std::span<const double> output_grad(const TapeNode& node) const {
    return slots_[node.output].grad;
  }

  /// Reverse sweep from a scalar loss. Clears the tape afterwards.
  void backward(Var loss) {
    auto& ls = slots_.at(loss.id);
    if (ls.value.size() != 1)
      throw ContractError("backward requires a scalar loss, got shape " +
                          shape_str(ls.value.shape()));
    if (!ls.requires_grad) {
      clear();
      return;
    }
    grad(loss.id)[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      const TapeNode& node = nodes_[i];
      if (slots_[node.output].grad.empty()) continue;
      node.backward(*this, node);
      for (auto in : node.inputs) {
        for (double g : slots_[in].grad)
          if (!std::isfinite(g)) {
            std::string msg = "non-finite gradient produced by node " + std::to_string(i) +
                              " (" + op_name(node.kind) + ")";
            clear();
            throw NumericError(msg, i);
          }
      }
    }
    for (auto& s : slots_) {
      if (!s.bound || s.grad.empty()) continue;
      auto g = s.bound->grad();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += s.grad[k];
    }
    clear();
  }

  void clear() {
    slots_.clear();
    nodes_.clear();
  }

 private:
  struct Slot {
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    Tensor* bound = nullptr;
  };

  Var push(Tensor value, bool requires_grad, Tensor* bound) {
    Slot s;
    s.value = std::move(value);
    s.requires_grad = requires_grad;
    s.bound = bound;
    slots_.push_back(std::move(s));
    return Var{slots_.size() - 1};
  }

  bool recording_ = true;
  std::vector<Slot> slots_;
  std::vector<TapeNode> nodes_;
};

}  // namespace hef
