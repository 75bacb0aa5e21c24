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
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hef/errors.hpp"
#include "hef/tensor.hpp"

namespace hef {

/// A named trainable tensor.
struct ParamRef {
  std::string name;
  Tensor* tensor = nullptr;
};

struct AdamOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are keyed by parameter name so a
/// parameter that joins the trainable set later starts with fresh moments.
class Adam {
 public:
  explicit Adam(AdamOptions opt = {}) : opt_(opt) {
    if (!(opt_.lr > 0.0)) throw ConfigError("adam: learning rate must be positive");
    if (!(opt_.beta1 >= 0.0 && opt_.beta1 < 1.0) || !(opt_.beta2 >= 0.0 && opt_.beta2 < 1.0))
      throw ConfigError("adam: betas must lie in [0, 1)");
    if (!(opt_.eps > 0.0)) throw ConfigError("adam: eps must be positive");
  }

  const AdamOptions& options() const noexcept { return opt_; }
  std::uint64_t steps() const noexcept { return step_; }

  /// Applies one update using each parameter's gradient slot (missing slot = 0).
  void step(const std::vector<ParamRef>& params) {
    ++step_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_));
    for (const auto& p : params) {
      Tensor& t = *p.tensor;
      auto& st = state_[p.name];
      if (st.m.empty()) {
        st.m.assign(t.size(), 0.0);
        st.v.assign(t.size(), 0.0);
      }
      if (st.m.size() != t.size())
        throw DimensionError("adam: moment buffers of '" + p.name + "' do not match parameter size");
      if (!t.has_grad()) continue;
      auto g = t.grad();
      auto w = t.data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        st.m[i] = opt_.beta1 * st.m[i] + (1.0 - opt_.beta1) * g[i];
        st.v[i] = opt_.beta2 * st.v[i] + (1.0 - opt_.beta2) * g[i] * g[i];
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        w[i] -= opt_.lr * mhat / (std::sqrt(vhat) + opt_.eps);
      }
    }
  }

 private:
  struct Moments {
    std::vector<double> m, v;
  };

  AdamOptions opt_;
  std::uint64_t step_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace hef
