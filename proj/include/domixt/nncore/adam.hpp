// Copyright 2026 The domixt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "domixt/error.hpp"
#include "domixt/nncore/graph.hpp"
#include "domixt/nncore/tensor.hpp"

namespace domixt::nn {

struct AdamConfig {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // classic L2: added to the gradient as weight_decay * theta
};

template <class T>
struct AdamState {
  AdamConfig config;
  std::vector<Tensor<T>> first;
  std::vector<Tensor<T>> second;
  long long step = 0;

  AdamState() = default;
  explicit AdamState(AdamConfig c) : config(c) {}
  void reset() {
    first.clear();
    second.clear();
    step = 0;
  }
};

/// One bias-corrected ADAM update of every parameter from its accumulated gradient.
/// Gradients are left untouched; callers zero them before the next backward pass.
template <class T>
void adam_step(std::span<Param<T>* const> params, AdamState<T>& st) {
  if (st.first.empty()) {
    for (auto* p : params) {
      st.first.emplace_back(p->value.shape);
      st.second.emplace_back(p->value.shape);
    }
  }
  if (st.first.size() != params.size()) {
    detail::fail(ErrorCode::ShapeMismatch, "ADAM state holds ", st.first.size(), " moments for ", params.size(),
                 " parameters");
  }
  ++st.step;
  const auto& c = st.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& m = st.first[i];
    auto& v = st.second[i];
    if (!p.grad.same_shape(p.value) || !m.same_shape(p.value)) {
      detail::fail(ErrorCode::ShapeMismatch, "ADAM: parameter ", i, " changed shape");
    }
    const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
    const T wd = static_cast<T>(c.weight_decay), eps = static_cast<T>(c.epsilon);
    const T step_size = static_cast<T>(c.alpha / bc1), inv_root_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    T* __restrict theta = p.value.data.data();
    const T* __restrict grad = p.grad.data.data();
    T* __restrict mm = m.data.data();
    T* __restrict vv = v.data.data();
    const std::size_t n = p.value.size();
    for (std::size_t k = 0; k < n; ++k) {
      T g = grad[k] + wd * theta[k];
      mm[k] = b1 * mm[k] + (T(1) - b1) * g;
      vv[k] = b2 * vv[k] + (T(1) - b2) * g * g;
      theta[k] -= step_size * mm[k] / (std::sqrt(vv[k]) * inv_root_bc2 + eps);
    }
#ifndef NDEBUG
    if (!p.value.all_finite()) detail::fail(ErrorCode::DivergenceDetected, "non-finite parameter after ADAM step");
#endif
  }
}

}  // namespace domixt::nn
