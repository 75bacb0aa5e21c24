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
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hef/errors.hpp"
#include "hef/graph.hpp"
#include "hef/text.hpp"

namespace hef {

// All passes take the graph by const reference and return a new graph.

// ------------------------------------------------------------------- lint

struct Violation {
  std::string node;
  std::string reason;

  friend bool operator==(const Violation&, const Violation&) = default;
};

/// Lists every node that cannot be evaluated with additions and
/// multiplications alone. Empty result means the graph is HE-friendly.
inline std::vector<Violation> he_lint(const ModelGraph& g) {
  std::vector<Violation> out;
  for (const auto& n : g.nodes()) {
    if (const auto* a = n.as<ActivationLayer>()) {
      if (a->act.kind == ActivationKind::Relu)
        out.push_back({n.name, "relu is not a polynomial"});
      else if (a->act.kind == ActivationKind::Weighted && a->act.lambda < 1.0)
        out.push_back({n.name, "weighted activation with lambda=" + text::format_double(a->act.lambda) +
                                   " still contains a relu branch"});
    } else if (const auto* p = n.as<PoolLayer>(); p && p->kind == PoolKind::Max) {
      out.push_back({n.name, "max-pooling requires comparisons"});
    } else if (n.as<BatchNormLayer>() && g.mode() == Mode::Train) {
      out.push_back({n.name, "train-mode batch norm divides by batch statistics"});
    } else if (n.as<DropoutLayer>()) {
      out.push_back({n.name, "dropout must be removed before encrypted inference"});
    }
  }
  return out;
}

// ---------------------------------------------------------------- folding

namespace detail {

inline bool is_shape_only(const LayerNode& n) {
  return n.as<FlattenLayer>() || n.as<DropoutLayer>();
}

}  // namespace detail

/// Absorbs each eval-mode batch norm into the next conv/dense layer (flatten
/// and dropout may sit in between). With scale s = gamma / sqrt(var + eps)
/// and shift t = beta - s * mean, the next layer's weights become W * s on
/// the matching input channel and its bias b + W t. When that layer pads its
/// input, the padding value is changed to -t / s so border outputs match.
inline ModelGraph fold_batch_norm(const ModelGraph& g) {
  if (g.mode() != Mode::Eval)
    throw ContractError("fold_batch_norm requires an eval-mode graph (batch statistics are not fixed)");
  ModelGraph out = g;
  auto& nodes = out.nodes();
  std::size_t i = 0;
  while (i < nodes.size()) {
    auto* bn = nodes[i].as<BatchNormLayer>();
    if (!bn) {
      ++i;
      continue;
    }
    const auto shapes = out.infer_shapes();
    std::size_t j = i + 1;
    while (j < nodes.size() && detail::is_shape_only(nodes[j])) ++j;
    const std::string bn_name = nodes[i].name;
    if (j == nodes.size())
      throw FoldError("batch norm '" + bn_name + "' has no following conv/dense layer to fold into");
    auto* conv = nodes[j].as<Conv2dLayer>();
    auto* fc = nodes[j].as<DenseLayer>();
    if (!conv && !fc)
      throw FoldError("batch norm '" + bn_name + "' is followed by '" + nodes[j].name + "' (" +
                      nodes[j].kind_name() + "); only conv/dense layers can absorb it");

    const Tensor& wt = conv ? conv->weight : fc->weight;
    if (wt.materialized()) {
      const std::size_t channels = bn->channels;
      std::vector<double> s(channels), t(channels);
      for (std::size_t c = 0; c < channels; ++c) {
        s[c] = bn->gamma[c] / std::sqrt(bn->running_var[c] + bn->eps);
        t[c] = bn->beta[c] - s[c] * bn->running_mean[c];
      }
      if (conv) {
        const auto& in = shapes[j - 1];
        const auto gy = conv_axis(in[1], conv->kernel_h, conv->stride, conv->padding);
        const auto gx = conv_axis(in[2], conv->kernel_w, conv->stride, conv->padding);
        const bool pads = gy.pad_before + gy.pad_after + gx.pad_before + gx.pad_after > 0;
        const std::size_t taps = conv->kernel_h * conv->kernel_w;
        for (std::size_t o = 0; o < conv->out_channels; ++o)
          for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t k = 0; k < taps; ++k) {
              double& w = conv->weight[(o * channels + c) * taps + k];
              conv->bias[o] += w * t[c];
              w *= s[c];
            }
        if (pads) {
          std::vector<double> fill(channels, 0.0);
          for (std::size_t c = 0; c < channels; ++c) {
            const double old = conv->pad_fill.empty() ? 0.0 : conv->pad_fill[c];
            if (s[c] != 0.0)
              fill[c] = (old - t[c]) / s[c];
            else if (old != t[c])
              throw FoldError("batch norm '" + bn_name + "' has zero scale on channel " +
                              std::to_string(c) + "; padded conv '" + nodes[j].name +
                              "' cannot reproduce its output");
          }
          const bool any = std::any_of(fill.begin(), fill.end(), [](double v) { return v != 0.0; });
          conv->pad_fill = any ? fill : std::vector<double>{};
        }
      } else {
        const std::size_t in = fc->in_features;
        const std::size_t per_channel = in / channels;
        for (std::size_t o = 0; o < fc->out_features; ++o)
          for (std::size_t k = 0; k < in; ++k) {
            double& w = fc->weight[o * in + k];
            fc->bias[o] += w * t[k / per_channel];
            w *= s[k / per_channel];
          }
      }
    }
    nodes.erase(nodes.begin() + static_cast<std::ptrdiff_t>(i));
  }
  out.resolve();
  return out;
}

// ---------------------------------------------------------------- pooling

struct PoolReplacement {
  ModelGraph graph;
  std::vector<std::string> replaced;
};

/// Turns every max-pool into an avg-pool with the same window and stride.
inline PoolReplacement replace_maxpool_with_avgpool(const ModelGraph& g) {
  PoolReplacement r{g, {}};
  for (auto& n : r.graph.nodes())
    if (auto* p = n.as<PoolLayer>(); p && p->kind == PoolKind::Max) {
      p->kind = PoolKind::Avg;
      r.replaced.push_back(n.name);
    }
  return r;
}

// ----------------------------------------------------------- finalization

/// Produces the inference graph: Weighted(1) becomes TrainablePoly, dropout
/// is dropped, the graph switches to eval mode and batch norms are folded.
inline ModelGraph finalize_he_friendly(const ModelGraph& g) {
  ModelGraph out = g;
  auto& nodes = out.nodes();
  for (auto& n : nodes) {
    if (auto* a = n.as<ActivationLayer>()) {
      if (a->act.kind == ActivationKind::Weighted) {
        if (a->act.lambda < 1.0)
          throw FinalizeError("layer '" + n.name + "' is a weighted activation with lambda=" +
                              text::format_double(a->act.lambda) + " < 1");
        a->act.kind = ActivationKind::TrainablePoly;
      } else if (a->act.kind == ActivationKind::Relu) {
        throw FinalizeError("layer '" + n.name + "' is still a relu");
      }
    } else if (auto* p = n.as<PoolLayer>(); p && p->kind == PoolKind::Max) {
      throw FinalizeError("layer '" + n.name + "' is a max-pool; replace it with avg-pool first");
    }
  }
  std::erase_if(nodes, [](const LayerNode& n) { return n.as<DropoutLayer>() != nullptr; });
  out.set_mode(Mode::Eval);
  out.resolve();
  try {
    out = fold_batch_norm(out);
  } catch (const FoldError& e) {
    throw FinalizeError(e.what());
  }
  if (auto v = he_lint(out); !v.empty())
    throw FinalizeError("finalized graph still has violation at '" + v.front().node + "': " +
                        v.front().reason);
  return out;
}

// ------------------------------------------------------------------ depth

/// Multiplicative-depth cost per layer kind. relu and max_pool have no cost;
/// they are reported as violations instead.
class DepthConvention {
 public:
  static DepthConvention defaults() {
    DepthConvention c;
    c.cost_ = {{"conv2d", 1},     {"dense", 1},       {"trainable_poly", 1},
               {"square", 1},     {"approx_relu", 1}, {"avg_pool", 1},
               {"batch_norm", 1}, {"flatten", 0},     {"dropout", 0}};
    return c;
  }

  /// `kind = cost` lines overriding the defaults.
  static DepthConvention parse(std::string_view src) {
    auto c = defaults();
    std::istringstream is{std::string(src)};
    std::string raw;
    while (std::getline(is, raw)) {
      auto line = text::strip_comment(raw);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ConfigError("depth convention: expected kind = cost");
      const std::string key(text::trim(line.substr(0, eq)));
      if (key == "relu" || key == "max_pool" || key == "weighted")
        throw ConfigError("depth convention: '" + key + "' has no defined cost");
      if (!c.cost_.count(key)) throw ConfigError("depth convention: unknown layer kind '" + key + "'");
      c.cost_[key] = static_cast<unsigned>(text::parse_size(text::trim(line.substr(eq + 1)), key));
    }
    return c;
  }

  void set(const std::string& kind, unsigned cost) {
    if (!cost_.count(kind)) throw ConfigError("depth convention: unknown layer kind '" + kind + "'");
    cost_[kind] = cost;
  }

  std::optional<unsigned> cost_of(const LayerNode& n) const {
    std::string kind = n.kind_name();
    if (const auto* a = n.as<ActivationLayer>();
        a && a->act.kind == ActivationKind::Weighted && a->act.lambda == 1.0)
      kind = "trainable_poly";
    auto it = cost_.find(kind);
    if (it == cost_.end()) return std::nullopt;
    return it->second;
  }

  const std::map<std::string, unsigned>& costs() const noexcept { return cost_; }

 private:
  std::map<std::string, unsigned> cost_;
};

struct DepthReport {
  struct Entry {
    std::string node;
    std::string kind;
    std::optional<unsigned> cost;
    unsigned cumulative = 0;
  };

  std::vector<Entry> entries;
  unsigned total = 0;
  std::vector<Violation> violations;
  /// Layers counted the way the AlexNet variant listing counts them:
  /// activations included, dropout and flatten excluded.
  std::size_t layer_count = 0;

  bool he_friendly() const noexcept { return violations.empty(); }
};

inline DepthReport multiplicative_depth(const ModelGraph& g,
                                        const DepthConvention& c = DepthConvention::defaults()) {
  DepthReport r;
  for (const auto& n : g.nodes()) {
    DepthReport::Entry e{n.name, n.kind_name(), c.cost_of(n), 0};
    if (e.cost) r.total += *e.cost;
    e.cumulative = r.total;
    r.entries.push_back(std::move(e));
    if (!n.as<DropoutLayer>() && !n.as<FlattenLayer>()) ++r.layer_count;
  }
  r.violations = he_lint(g);
  return r;
}

inline std::string format_depth_report(const DepthReport& r) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-24s %-16s %6s %10s\n", "node", "kind", "cost", "cumulative");
  os << buf;
  for (const auto& e : r.entries) {
    std::snprintf(buf, sizeof buf, "%-24s %-16s %6s %10u\n", e.node.c_str(), e.kind.c_str(),
                  e.cost ? std::to_string(*e.cost).c_str() : "-", e.cumulative);
    os << buf;
  }
  os << "total_depth " << r.total << '\n';
  os << "layer_count " << r.layer_count << '\n';
  os << "violations " << r.violations.size() << '\n';
  for (const auto& v : r.violations) os << "  " << v.node << ": " << v.reason << '\n';
  return os.str();
}

}  // namespace hef
