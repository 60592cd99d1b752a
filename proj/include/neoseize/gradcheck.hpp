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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "neoseize/autograd.hpp"
#include "neoseize/rng.hpp"

namespace neoseize {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  // Coordinates whose +/- eps probe crossed a non-differentiable point and
  // were re-probed with a smaller step.
  std::size_t refined = 0;
  // Coordinates still crossing at the smallest step; left out of the maximum.
  std::size_t skipped = 0;
};

/// Compares reverse-mode gradients of `loss_fn` against central differences
///   (f(theta + eps) - f(theta - eps)) / (2 eps)
/// on a random subset of at least `min_coords` parameter coordinates (all of
/// them when there are fewer). The relative error denominator is
/// max(|analytic|, |numeric|, 1e-8).
///
/// A central difference only estimates the derivative when both probes stay
/// on the same differentiable piece as theta. When a probe changes the
/// graph's branch signature the step is divided by 10, up to `max_refine`
/// times; coordinates that still cross are counted in `skipped`.
///
/// `loss_fn` has signature Var<double>(Graph<double>&) and must bind the
/// checked parameters through Graph::param.
template <class Fn>
GradCheckResult grad_check_detailed(Fn&& loss_fn,
                                    std::span<Parameter<double>* const> params,
                                    double eps = 1e-5,
                                    std::size_t min_coords = 200,
                                    std::uint64_t seed = 0x6a09e667f3bcc909ULL,
                                    int max_refine = 3) {
  for (auto* p : params) p->zero_grad();
  std::uint64_t base_sig = 0;
  {
    Graph<double> g;
    Var<double> loss = loss_fn(g);
    if (!std::isfinite(loss.value()[0])) {
      throw std::domain_error("grad_check: non-finite loss");
    }
    base_sig = g.branch_signature();
    g.backward(loss);
  }

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t k = 0; k < params[i]->value.size(); ++k) {
      coords.emplace_back(i, k);
    }
  }
  Rng rng(seed);
  rng.shuffle(std::span(coords));
  if (coords.size() > min_coords) coords.resize(min_coords);

  auto eval = [&](bool& same_piece) {
    Graph<double> g(false);
    const double v = loss_fn(g).value()[0];
    if (!std::isfinite(v)) throw std::domain_error("grad_check: non-finite loss");
    same_piece = same_piece && g.branch_signature() == base_sig;
    return v;
  };

  GradCheckResult out;
  out.coordinates = coords.size();
  for (auto [i, k] : coords) {
    double& theta = params[i]->value[k];
    const double saved = theta;
    double h = eps;
    double numeric = 0.0;
    bool smooth = false;
    for (int attempt = 0; attempt <= max_refine; ++attempt, h /= 10.0) {
      smooth = true;
      theta = saved + h;
      const double up = eval(smooth);
      theta = saved - h;
      const double down = eval(smooth);
      theta = saved;
      numeric = (up - down) / (2.0 * h);
      if (smooth) {
        if (attempt > 0) ++out.refined;
        break;
      }
    }
    if (!smooth) {
      ++out.skipped;
      continue;
    }
    const double analytic = params[i]->grad[k];
    const double denom =
        std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    out.max_relative_error =
        std::max(out.max_relative_error, std::abs(analytic - numeric) / denom);
  }
  return out;
}

template <class Fn>
double grad_check(Fn&& loss_fn, std::span<Parameter<double>* const> params,
                  double eps = 1e-5, std::size_t min_coords = 200) {
  return grad_check_detailed(std::forward<Fn>(loss_fn), params, eps, min_coords)
      .max_relative_error;
}

}  // namespace neoseize
