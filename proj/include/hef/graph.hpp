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
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "hef/activation.hpp"
#include "hef/adam.hpp"
#include "hef/autodiff.hpp"
#include "hef/errors.hpp"
#include "hef/ops.hpp"
#include "hef/random.hpp"
#include "hef/tensor.hpp"
#include "hef/text.hpp"

namespace hef {

struct Conv2dLayer {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  Padding padding = Padding::Valid;
  Tensor weight;  // [out, in, kh, kw]
  Tensor bias;    // [out]
  /// Per-input-channel padding value; set by batch-norm folding.
  std::vector<double> pad_fill;
};

struct DenseLayer {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
};

enum class PoolKind { Max, Avg };

struct PoolLayer {
  PoolKind kind = PoolKind::Max;
  Pool2dOptions window;
};

struct BatchNormLayer {
  std::size_t channels = 0;
  double eps = 1e-5;
  double momentum = 0.1;
  Tensor gamma, beta, running_mean, running_var;
};

struct ActivationLayer {
  Activation act;
};

struct FlattenLayer {};

struct DropoutLayer {
  double p = 0.5;
};

using Layer = std::variant<Conv2dLayer, DenseLayer, PoolLayer, BatchNormLayer, ActivationLayer,
                           FlattenLayer, DropoutLayer>;

struct LayerNode {
  std::string name;
  Layer layer;

  template <typename T>
  T* as() noexcept {
    return std::get_if<T>(&layer);
  }
  template <typename T>
  const T* as() const noexcept {
    return std::get_if<T>(&layer);
  }

  /// Kind name used in reports and depth conventions.
  std::string kind_name() const {
    return std::visit(
        [](const auto& l) -> std::string {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Conv2dLayer>) return "conv2d";
          else if constexpr (std::is_same_v<T, DenseLayer>) return "dense";
          else if constexpr (std::is_same_v<T, PoolLayer>)
            return l.kind == PoolKind::Max ? "max_pool" : "avg_pool";
          else if constexpr (std::is_same_v<T, BatchNormLayer>) return "batch_norm";
          else if constexpr (std::is_same_v<T, ActivationLayer>)
            return std::string(activation_name(l.act.kind));
          else if constexpr (std::is_same_v<T, FlattenLayer>) return "flatten";
          else return "dropout";
        },
        layer);
  }
};

/// Sequential network: an input signature (without the batch dimension),
/// an ordered list of uniquely named layers, and a train/eval mode flag.
class ModelGraph {
 public:
  ModelGraph() = default;

  ModelGraph(Shape input, std::vector<LayerNode> nodes, Mode mode = Mode::Train)
      : input_(std::move(input)), nodes_(std::move(nodes)), mode_(mode) {
    resolve();
  }

  const Shape& input_shape() const noexcept { return input_; }
  Mode mode() const noexcept { return mode_; }
  void set_mode(Mode m) noexcept { mode_ = m; }

  std::vector<LayerNode>& nodes() noexcept { return nodes_; }
  const std::vector<LayerNode>& nodes() const noexcept { return nodes_; }

  const LayerNode* find(std::string_view name) const {
    for (const auto& n : nodes_)
      if (n.name == name) return &n;
    return nullptr;
  }

  std::size_t activation_count() const {
    std::size_t k = 0;
    for (const auto& n : nodes_) k += n.as<ActivationLayer>() != nullptr;
    return k;
  }

  /// Re-runs validation, fills inferred dimensions and default tensors.
  /// Call after editing nodes() directly.
  void resolve() {
    if (input_.empty()) throw DimensionError("model input signature is empty");
    std::set<std::string> names;
    for (const auto& n : nodes_) {
      if (n.name.empty()) throw ConfigError("layer with empty name");
      if (!names.insert(n.name).second) throw ConfigError("duplicate layer name '" + n.name + "'");
    }
    Shape s = input_;
    for (auto& n : nodes_) s = resolve_node(n, s);
  }

  /// Output shape (without batch) of every node, in order.
  std::vector<Shape> infer_shapes() const {
    std::vector<Shape> out;
    Shape s = input_;
    for (const auto& n : nodes_) {
      s = node_output_shape(n, s);
      out.push_back(s);
    }
    return out;
  }

  Shape output_shape() const {
    auto all = infer_shapes();
    return all.empty() ? input_ : all.back();
  }

  /// True when every conv/dense layer has weights.
  bool materialized() const {
    for (const auto& n : nodes_) {
      if (auto* c = n.as<Conv2dLayer>(); c && !c->weight.materialized()) return false;
      if (auto* d = n.as<DenseLayer>(); d && !d->weight.materialized()) return false;
    }
    return true;
  }

  /// Kaiming-uniform weights (bound sqrt(6 / fan_in)) and zero biases.
  void initialize(Rng& rng) {
    for (auto& n : nodes_) {
      if (auto* c = n.as<Conv2dLayer>()) {
        c->weight = Tensor({c->out_channels, c->in_channels, c->kernel_h, c->kernel_w});
        fill_kaiming(c->weight, c->in_channels * c->kernel_h * c->kernel_w, rng);
        c->bias = Tensor({c->out_channels});
      } else if (auto* d = n.as<DenseLayer>()) {
        d->weight = Tensor({d->out_features, d->in_features});
        fill_kaiming(d->weight, d->in_features, rng);
        d->bias = Tensor({d->out_features});
      }
    }
  }

  /// Sets every activation layer's coefficients.
  void set_coefficients(const CoeffInit& init) {
    for (auto& n : nodes_)
      if (auto* a = n.as<ActivationLayer>()) {
        a->act.coeffs.a = Tensor::scalar(init.a);
        a->act.coeffs.b = Tensor::scalar(init.b);
      }
  }

  /// Tensors updated by the optimizer. Running statistics, fixed activation
  /// coefficients and lambda are excluded.
  std::vector<ParamRef> parameters() {
    std::vector<ParamRef> out;
    for (auto& n : nodes_) {
      if (auto* c = n.as<Conv2dLayer>()) {
        out.push_back({n.name + ".weight", &c->weight});
        out.push_back({n.name + ".bias", &c->bias});
      } else if (auto* d = n.as<DenseLayer>()) {
        out.push_back({n.name + ".weight", &d->weight});
        out.push_back({n.name + ".bias", &d->bias});
      } else if (auto* b = n.as<BatchNormLayer>()) {
        out.push_back({n.name + ".gamma", &b->gamma});
        out.push_back({n.name + ".beta", &b->beta});
      } else if (auto* a = n.as<ActivationLayer>(); a && a->act.uses_coeffs()) {
        out.push_back({n.name + ".a", &a->act.coeffs.a});
        out.push_back({n.name + ".b", &a->act.coeffs.b});
      }
    }
    return out;
  }

  /// Every named tensor that defines the model, in a stable order.
  std::vector<ParamRef> state() {
    std::vector<ParamRef> out;
    for (auto& n : nodes_) {
      if (auto* c = n.as<Conv2dLayer>()) {
        out.push_back({n.name + ".weight", &c->weight});
        out.push_back({n.name + ".bias", &c->bias});
      } else if (auto* d = n.as<DenseLayer>()) {
        out.push_back({n.name + ".weight", &d->weight});
        out.push_back({n.name + ".bias", &d->bias});
      } else if (auto* b = n.as<BatchNormLayer>()) {
        out.push_back({n.name + ".gamma", &b->gamma});
        out.push_back({n.name + ".beta", &b->beta});
        out.push_back({n.name + ".running_mean", &b->running_mean});
        out.push_back({n.name + ".running_var", &b->running_var});
      } else if (auto* a = n.as<ActivationLayer>()) {
        out.push_back({n.name + ".a", &a->act.coeffs.a});
        out.push_back({n.name + ".b", &a->act.coeffs.b});
      }
    }
    return out;
  }

  void zero_grad() {
    for (auto& p : state()) p.tensor->drop_grad();
  }

  /// Forward pass of a batch x[n, input...] in the graph's current mode.
  /// Train-mode batch norm updates running statistics; train-mode dropout
  /// draws from `rng`.
  Var forward(Tape& tape, Var x, Rng* rng = nullptr) {
    const Tensor& xv = tape.value(x);
    if (xv.rank() != input_.size() + 1 ||
        !std::equal(input_.begin(), input_.end(), xv.shape().begin() + 1))
      throw DimensionError("model input " + shape_str(xv.shape()) + " does not match signature " +
                           shape_str(input_));
    if (!materialized()) throw ContractError("model parameters are not initialized");
    for (auto& n : nodes_) {
      x = std::visit(
          [&](auto& l) -> Var {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Conv2dLayer>) {
              Conv2dOptions opt{l.stride, l.padding, l.pad_fill};
              return conv2d(tape, x, tape.variable(l.weight), tape.variable(l.bias), opt);
            } else if constexpr (std::is_same_v<T, DenseLayer>) {
              return dense(tape, x, tape.variable(l.weight), tape.variable(l.bias));
            } else if constexpr (std::is_same_v<T, PoolLayer>) {
              return l.kind == PoolKind::Max ? max_pool(tape, x, l.window)
                                             : avg_pool(tape, x, l.window);
            } else if constexpr (std::is_same_v<T, BatchNormLayer>) {
              BatchNormState st{&l.running_mean, &l.running_var, l.eps, l.momentum};
              return batch_norm(tape, x, tape.variable(l.gamma), tape.variable(l.beta), st, mode_);
            } else if constexpr (std::is_same_v<T, ActivationLayer>) {
              return apply_activation(tape, x, l.act);
            } else if constexpr (std::is_same_v<T, FlattenLayer>) {
              return flatten(tape, x);
            } else {
              if (mode_ == Mode::Train && l.p > 0.0 && !rng)
                throw ContractError("train-mode dropout needs a random engine");
              Rng dummy;
              return dropout(tape, x, l.p, rng ? *rng : dummy, mode_);
            }
          },
          n.layer);
    }
    return x;
  }

  /// Eval-mode outputs for a batch. Does not modify the graph.
  Tensor predict(const Tensor& x) const {
    if (mode_ != Mode::Eval) throw ContractError("predict requires an eval-mode graph");
    Tape tape(false);
    // Eval-mode forward never writes to the graph.
    auto& self = const_cast<ModelGraph&>(*this);
    Var out = self.forward(tape, tape.constant(x));
    return tape.value(out);
  }

 private:
  static void fill_kaiming(Tensor& t, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : t.data()) v = uniform(rng, -bound, bound);
  }

  static void expect_tensor(const Tensor& t, const Shape& shape, const std::string& what) {
    if (t.materialized() && t.shape() != shape)
      throw DimensionError(what + " has shape " + shape_str(t.shape()) + ", expected " +
                           shape_str(shape));
  }

  static Shape node_output_shape(const LayerNode& n, const Shape& in) {
    auto fail = [&](const std::string& why) {
      return DimensionError("layer '" + n.name + "' (" + n.kind_name() + "): " + why +
                            "; input shape " + shape_str(in));
    };
    return std::visit(
        [&](const auto& l) -> Shape {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Conv2dLayer>) {
            if (in.size() != 3) throw fail("expects a [channels, height, width] input");
            if (l.in_channels != 0 && l.in_channels != in[0])
              throw fail("declares " + std::to_string(l.in_channels) + " input channels");
            try {
              const auto gy = conv_axis(in[1], l.kernel_h, l.stride, l.padding);
              const auto gx = conv_axis(in[2], l.kernel_w, l.stride, l.padding);
              return {l.out_channels, gy.out, gx.out};
            } catch (const Error& e) {
              throw fail(e.what());
            }
          } else if constexpr (std::is_same_v<T, DenseLayer>) {
            if (in.size() != 1) throw fail("expects a flat input (insert a flatten layer)");
            if (l.in_features != 0 && l.in_features != in[0])
              throw fail("declares " + std::to_string(l.in_features) + " input features");
            return {l.out_features};
          } else if constexpr (std::is_same_v<T, PoolLayer>) {
            if (in.size() != 3) throw fail("expects a [channels, height, width] input");
            if (l.window.window_h > in[1] || l.window.window_w > in[2])
              throw fail("window exceeds input");
            return {in[0], conv_axis(in[1], l.window.window_h, l.window.stride, Padding::Valid).out,
                    conv_axis(in[2], l.window.window_w, l.window.stride, Padding::Valid).out};
          } else if constexpr (std::is_same_v<T, BatchNormLayer>) {
            if (in.size() != 1 && in.size() != 3) throw fail("expects rank 1 or 3 input");
            if (l.channels != 0 && l.channels != in[0])
              throw fail("declares " + std::to_string(l.channels) + " channels");
            return in;
          } else if constexpr (std::is_same_v<T, FlattenLayer>) {
            return {shape_size(in)};
          } else {
            return in;
          }
        },
        n.layer);
  }

  Shape resolve_node(LayerNode& n, const Shape& in) {
    Shape out = node_output_shape(n, in);
    std::visit(
        [&](auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Conv2dLayer>) {
            if (l.out_channels == 0) throw ConfigError("layer '" + n.name + "' needs out channels");
            l.in_channels = in[0];
            expect_tensor(l.weight, {l.out_channels, l.in_channels, l.kernel_h, l.kernel_w},
                          n.name + ".weight");
            expect_tensor(l.bias, {l.out_channels}, n.name + ".bias");
            if (!l.pad_fill.empty() && l.pad_fill.size() != l.in_channels)
              throw DimensionError(n.name + ".pad_fill needs one value per input channel");
          } else if constexpr (std::is_same_v<T, DenseLayer>) {
            if (l.out_features == 0) throw ConfigError("layer '" + n.name + "' needs out features");
            l.in_features = in[0];
            expect_tensor(l.weight, {l.out_features, l.in_features}, n.name + ".weight");
            expect_tensor(l.bias, {l.out_features}, n.name + ".bias");
          } else if constexpr (std::is_same_v<T, BatchNormLayer>) {
            l.channels = in[0];
            const Shape cs{l.channels};
            if (!l.gamma.materialized()) l.gamma = Tensor(cs, 1.0);
            if (!l.beta.materialized()) l.beta = Tensor(cs, 0.0);
            if (!l.running_mean.materialized()) l.running_mean = Tensor(cs, 0.0);
            if (!l.running_var.materialized()) l.running_var = Tensor(cs, 1.0);
            for (auto* t : {&l.gamma, &l.beta, &l.running_mean, &l.running_var})
              expect_tensor(*t, cs, n.name + " batch-norm parameter");
          } else if constexpr (std::is_same_v<T, ActivationLayer>) {
            if (!(l.act.lambda >= 0.0 && l.act.lambda <= 1.0))
              throw ContractError("layer '" + n.name + "': lambda outside [0, 1]");
            if (l.act.coeffs.a.size() != 1 || l.act.coeffs.b.size() != 1)
              throw DimensionError("layer '" + n.name + "': coefficients must be scalars");
          } else if constexpr (std::is_same_v<T, DropoutLayer>) {
            if (!(l.p >= 0.0 && l.p < 1.0))
              throw ConfigError("layer '" + n.name + "': dropout p must lie in [0, 1)");
          }
        },
        n.layer);
    return out;
  }

  Shape input_;
  std::vector<LayerNode> nodes_;
  Mode mode_ = Mode::Train;
};

// ------------------------------------------------------------ config format
//
//   # comment
//   input 3 64 64
//   mode eval                      (optional; default train)
//   conv name=conv1 out=64 kernel=11 stride=4 padding=same activation=relu
//   maxpool window=3 stride=2
//   avgpool window=3x3 stride=2
//   batchnorm eps=1e-5 momentum=0.1
//   activation kind=weighted lambda=0.5 a=0 b=1
//   flatten
//   dropout p=0.2
//   dense out=3 [in=256] [activation=...]
//
// Omitted names default to <kind><index>. `activation=` on conv/dense adds a
// separate activation layer named <layer>_act.

namespace detail {

inline std::pair<std::size_t, std::size_t> parse_window(const std::string& v, const std::string& what) {
  const auto x = v.find('x');
  if (x == std::string::npos) {
    auto k = text::parse_size(v, what);
    return {k, k};
  }
  return {text::parse_size(v.substr(0, x), what), text::parse_size(v.substr(x + 1), what)};
}

inline std::string window_str(std::size_t h, std::size_t w) {
  return std::to_string(h) + "x" + std::to_string(w);
}

}  // namespace detail

inline ModelGraph parse_model_config(std::string_view src) {
  Shape input;
  Mode mode = Mode::Train;
  std::vector<LayerNode> nodes;
  std::map<std::string, int> counters;
  std::istringstream is{std::string(src)};
  std::string raw;
  std::size_t lineno = 0;

  auto make_activation = [](const std::string& kind_name, const std::string& where) {
    auto kind = parse_activation_kind(kind_name);
    if (!kind) throw ConfigError(where + ": unknown activation '" + kind_name + "'");
    Activation act;
    act.kind = *kind;
    if (act.kind == ActivationKind::TrainablePoly) act.lambda = 1.0;
    return act;
  };

  while (std::getline(is, raw)) {
    ++lineno;
    const auto line = text::strip_comment(raw);
    if (line.empty()) continue;
    const auto tok = text::split_ws(line);
    const std::string& kw = tok[0];
    const std::string where = "line " + std::to_string(lineno);
    if (kw == "input") {
      if (tok.size() < 2) throw ConfigError(where + ": input needs at least one dimension");
      input.clear();
      for (std::size_t i = 1; i < tok.size(); ++i) input.push_back(text::parse_size(tok[i], "input"));
      continue;
    }
    if (kw == "mode") {
      if (tok.size() != 2 || (tok[1] != "train" && tok[1] != "eval"))
        throw ConfigError(where + ": mode must be 'train' or 'eval'");
      mode = tok[1] == "train" ? Mode::Train : Mode::Eval;
      continue;
    }
    if (kw == "fire" || kw == "concat" || kw == "branch" || kw == "residual" || kw == "add" ||
        kw == "split" || kw == "route")
      throw ConfigError(where + ": '" + kw +
                        "' introduces branching; only sequential graphs are supported");

    auto attrs = text::parse_attributes(tok, 1);
    auto take = [&](const std::string& key) -> std::optional<std::string> {
      auto it = attrs.find(key);
      if (it == attrs.end()) return std::nullopt;
      auto v = it->second;
      attrs.erase(it);
      return v;
    };
    std::string prefix = kw == "conv" ? "conv" : kw == "dense" ? "fc"
                         : (kw == "maxpool" || kw == "avgpool") ? "pool"
                         : kw == "batchnorm" ? "bn" : kw == "activation" ? "act" : kw;
    auto name = take("name").value_or(prefix + std::to_string(++counters[prefix]));
    std::optional<std::string> fused_act;

    LayerNode node{name, FlattenLayer{}};
    if (kw == "conv") {
      Conv2dLayer c;
      if (auto v = take("in")) c.in_channels = text::parse_size(*v, "in");
      auto out = take("out");
      if (!out) throw ConfigError(where + ": conv needs out=");
      c.out_channels = text::parse_size(*out, "out");
      auto [kh, kw2] = detail::parse_window(take("kernel").value_or("1"), "kernel");
      c.kernel_h = kh;
      c.kernel_w = kw2;
      if (auto v = take("stride")) c.stride = text::parse_size(*v, "stride");
      if (c.stride == 0) throw ConfigError(where + ": stride must be >= 1");
      auto pad = take("padding").value_or("valid");
      if (pad != "same" && pad != "valid") throw ConfigError(where + ": padding must be same|valid");
      c.padding = pad == "same" ? Padding::Same : Padding::Valid;
      fused_act = take("activation");
      node.layer = std::move(c);
    } else if (kw == "dense") {
      DenseLayer d;
      if (auto v = take("in")) d.in_features = text::parse_size(*v, "in");
      auto out = take("out");
      if (!out) throw ConfigError(where + ": dense needs out=");
      d.out_features = text::parse_size(*out, "out");
      fused_act = take("activation");
      node.layer = std::move(d);
    } else if (kw == "maxpool" || kw == "avgpool") {
      PoolLayer p;
      p.kind = kw == "maxpool" ? PoolKind::Max : PoolKind::Avg;
      auto [wh, ww] = detail::parse_window(take("window").value_or("2"), "window");
      p.window.window_h = wh;
      p.window.window_w = ww;
      p.window.stride = text::parse_size(take("stride").value_or(std::to_string(wh)), "stride");
      if (p.window.stride == 0 || wh == 0 || ww == 0)
        throw ConfigError(where + ": pool window and stride must be >= 1");
      node.layer = p;
    } else if (kw == "batchnorm") {
      BatchNormLayer b;
      if (auto v = take("channels")) b.channels = text::parse_size(*v, "channels");
      if (auto v = take("eps")) b.eps = text::parse_double(*v, "eps");
      if (auto v = take("momentum")) b.momentum = text::parse_double(*v, "momentum");
      node.layer = std::move(b);
    } else if (kw == "activation") {
      auto kind = take("kind");
      if (!kind) throw ConfigError(where + ": activation needs kind=");
      ActivationLayer a{make_activation(*kind, where)};
      if (auto v = take("lambda")) a.act.lambda = text::parse_double(*v, "lambda");
      if (auto v = take("a")) a.act.coeffs.a = Tensor::scalar(text::parse_double(*v, "a"));
      if (auto v = take("b")) a.act.coeffs.b = Tensor::scalar(text::parse_double(*v, "b"));
      node.layer = std::move(a);
    } else if (kw == "flatten") {
      node.layer = FlattenLayer{};
    } else if (kw == "dropout") {
      DropoutLayer d;
      if (auto v = take("p")) d.p = text::parse_double(*v, "p");
      node.layer = d;
    } else {
      throw ConfigError(where + ": unknown layer kind '" + kw + "'");
    }
    if (!attrs.empty())
      throw ConfigError(where + ": unknown attribute '" + attrs.begin()->first + "' for " + kw);
    const std::string owner = node.name;
    nodes.push_back(std::move(node));
    if (fused_act) nodes.push_back(LayerNode{owner + "_act", ActivationLayer{make_activation(*fused_act, where)}});
  }
  if (input.empty()) throw ConfigError("model config has no 'input' line");
  return ModelGraph(std::move(input), std::move(nodes), mode);
}

inline ModelGraph load_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model config", path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model_config(ss.str());
}

/// Canonical text form. With `with_coeffs`, activation coefficients are
/// written inline (checkpoints store them as tensors instead).
inline std::string to_model_config(const ModelGraph& g, bool with_coeffs = true) {
  std::ostringstream os;
  os << "input";
  for (auto d : g.input_shape()) os << ' ' << d;
  os << "\nmode " << (g.mode() == Mode::Train ? "train" : "eval") << '\n';
  for (const auto& n : g.nodes()) {
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Conv2dLayer>) {
            os << "conv name=" << n.name << " in=" << l.in_channels << " out=" << l.out_channels
               << " kernel=" << detail::window_str(l.kernel_h, l.kernel_w) << " stride=" << l.stride
               << " padding=" << (l.padding == Padding::Same ? "same" : "valid");
          } else if constexpr (std::is_same_v<T, DenseLayer>) {
            os << "dense name=" << n.name << " in=" << l.in_features << " out=" << l.out_features;
          } else if constexpr (std::is_same_v<T, PoolLayer>) {
            os << (l.kind == PoolKind::Max ? "maxpool" : "avgpool") << " name=" << n.name
               << " window=" << detail::window_str(l.window.window_h, l.window.window_w)
               << " stride=" << l.window.stride;
          } else if constexpr (std::is_same_v<T, BatchNormLayer>) {
            os << "batchnorm name=" << n.name << " channels=" << l.channels
               << " eps=" << text::format_double(l.eps)
               << " momentum=" << text::format_double(l.momentum);
          } else if constexpr (std::is_same_v<T, ActivationLayer>) {
            os << "activation name=" << n.name << " kind=" << activation_name(l.act.kind);
            if (l.act.kind == ActivationKind::Weighted)
              os << " lambda=" << text::format_double(l.act.lambda);
            if (with_coeffs && l.act.uses_coeffs())
              os << " a=" << text::format_double(l.act.coeffs.a[0])
                 << " b=" << text::format_double(l.act.coeffs.b[0]);
          } else if constexpr (std::is_same_v<T, FlattenLayer>) {
            os << "flatten name=" << n.name;
          } else {
            os << "dropout name=" << n.name << " p=" << text::format_double(l.p);
          }
        },
        n.layer);
    os << '\n';
  }
  return os.str();
}

}  // namespace hef
