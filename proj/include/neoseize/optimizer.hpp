/*
 * Copyright 2026 The neoseize Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <span>
#include <vector>

#include "neoseize/tensor.hpp"

namespace neoseize {

/// Stochastic gradient descent with Nesterov momentum:
///   v <- mu * v - lr * g
///   theta <- theta + mu * v - lr * g
template <class T>
class SgdNesterov {
 public:
  explicit SgdNesterov(T learning_rate = T(0.001), T momentum = T(0.9))
      : lr_(learning_rate), mu_(momentum) {}

  T learning_rate() const { return lr_; }
  T momentum() const { return mu_; }
  const std::vector<Tensor<T>>& velocity() const { return velocity_; }

  void step(std::span<Parameter<T>* const> params) {
    if (velocity_.empty()) {
      for (const auto* p : params) velocity_.emplace_back(p->value.shape());
    }
    if (velocity_.size() != params.size()) {
      throw ShapeError("optimizer: parameter list changed between steps");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter<T>& p = *params[i];
      if (!p.trainable) continue;
      Tensor<T>& v = velocity_[i];
      if (v.shape() != p.value.shape() || p.grad.shape() != p.value.shape()) {
        throw ShapeError("optimizer: shape mismatch for parameter " + p.name);
      }
      for (std::size_t k = 0; k < v.size(); ++k) {
        const T g = p.grad[k];
        v[k] = mu_ * v[k] - lr_ * g;
        p.value[k] += mu_ * v[k] - lr_ * g;
      }
    }
  }

  void reset() { velocity_.clear(); }

 private:
  T lr_;
  T mu_;
  std::vector<Tensor<T>> velocity_;
};

}  // namespace neoseize
