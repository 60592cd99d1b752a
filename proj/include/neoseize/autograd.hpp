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

// Minimal tape-based reverse-mode differentiation.
//
// A Graph records every value produced during a forward pass in creation
// order, which is a topological order by construction. backward() walks the
// tape once from the loss toward the leaves. Only the operations a fully
// convolutional classifier needs are provided; there is no broadcasting.
//
// Batched tensors use the layout [batch, channels, positions]; rank-2 inputs
// to the sequence ops are read as [channels, positions] with batch 1.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "neoseize/rng.hpp"
#include "neoseize/tensor.hpp"

namespace neoseize {

enum class Padding { Same, Valid };
enum class PoolKind { Avg, Max };
enum class BnMode { Train, Infer };

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <class T>
class Graph;

/// Handle to a value recorded on a Graph.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* g, std::size_t id) : graph_(g), id_(id) {}

  Graph<T>* graph() const { return graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Tensor<T>& value() const { return graph_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::span<const T> grad() const { return graph_->grad(id_); }

 private:
  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Running statistics of one batch-normalisation layer.
template <class T>
struct RunningStats {
  Tensor<T> mean;
  Tensor<T> var;
  bool ready = false;

  RunningStats() = default;
  explicit RunningStats(std::size_t channels)
      : mean(Shape{channels}, T{0}), var(Shape{channels}, T{1}), ready(true) {}
};

template <class T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  Var<T> input(Tensor<T> value, bool requires_grad = false) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = grad_enabled_ && requires_grad;
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  /// Leaf bound to a parameter; backward() accumulates into p.grad.
  Var<T> param(Parameter<T>& p) {
    Node n;
    n.value = p.value;
    n.requires_grad = grad_enabled_ && p.trainable;
    n.param = &p;
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  /// Records an operation result. `fn` receives the graph and the id of the
  /// new node and must push that node's gradient into its parents.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> parents,
                BackwardFn fn) {
    bool needs = false;
    for (const auto& p : parents) {
      if (p.graph() != this) {
        throw GraphError("operation mixes values from different graphs");
      }
      needs = needs || nodes_[p.id()].requires_grad;
    }
    Node n;
    n.value = std::move(value);
    n.requires_grad = grad_enabled_ && needs;
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  void backward(Var<T> loss) {
    if (loss.graph() != this) throw GraphError("loss belongs to another graph");
    if (backward_done_) {
      throw GraphError("backward called twice on the same graph");
    }
    if (nodes_[loss.id()].value.size() != 1) {
      throw GraphError("backward requires a scalar loss, got shape " +
                       shape_str(nodes_[loss.id()].value.shape()));
    }
    backward_done_ = true;
    if (!nodes_[loss.id()].requires_grad) return;
    grad_buffer(loss.id())[0] = T{1};
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param != nullptr) {
        auto& g = n.param->grad;
        if (g.shape() != n.value.shape()) g = Tensor<T>(n.value.shape());
        for (std::size_t k = 0; k < n.grad.size(); ++k) g[k] += n.grad[k];
      }
    }
  }

  /// Hash of every branch decision taken so far (ReLU signs, argmax
  /// choices, probability clamps). Two evaluations with equal signatures lie
  /// on the same differentiable piece.
  std::uint64_t branch_signature() const { return branch_; }
  void mix_branch(std::uint64_t v) { branch_ = mix_seed(branch_ ^ v); }

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  std::span<const T> grad(std::size_t id) const { return nodes_.at(id).grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient accumulator of node `id`, zero-initialised on first use.
  std::span<T> grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), T{0});
    return n.grad;
  }

 private:
  struct Node {
    Tensor<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
  bool backward_done_ = false;
  std::uint64_t branch_ = 0;
};

namespace detail {

/// Folds a boolean sequence into a hash, 64 flags per mixing step.
class MaskHasher {
 public:
  void push(bool bit) {
    word_ |= static_cast<std::uint64_t>(bit) << fill_;
    if (++fill_ == 64) flush();
  }
  void push_index(std::size_t i) { hash_ = mix_seed(hash_ ^ (i + 1)); }
  std::uint64_t finish() {
    if (fill_) flush();
    return hash_;
  }

 private:
  void flush() {
    hash_ = mix_seed(hash_ ^ word_);
    word_ = 0;
    fill_ = 0;
  }
  std::uint64_t hash_ = 0;
  std::uint64_t word_ = 0;
  unsigned fill_ = 0;
};

struct SeqDims {
  std::size_t batch, channels, length;
};

inline SeqDims seq_dims(const Shape& s, const char* op) {
  if (s.size() == 2) return {1, s[0], s[1]};
  if (s.size() == 3) return {s[0], s[1], s[2]};
  throw ShapeError(std::string(op) + ": expected rank 2 or 3 input, got " +
                   shape_str(s));
}

// Fixed-order lane accumulation; vectorises without reassociating across runs.
template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  constexpr std::size_t kLanes = 16;
  T acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[i + l] * b[i + l];
  }
  T tail{0};
  for (; i < n; ++i) tail += a[i] * b[i];
  T s{0};
  for (std::size_t l = 0; l < kLanes; ++l) s += acc[l];
  return s + tail;
}

template <class T>
T sum(const T* a, std::size_t n) {
  constexpr std::size_t kLanes = 16;
  T acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[i + l];
  }
  T tail{0};
  for (; i < n; ++i) tail += a[i];
  T s{0};
  for (std::size_t l = 0; l < kLanes; ++l) s += acc[l];
  return s + tail;
}

inline void unit_stride_range(std::ptrdiff_t shift, std::size_t in_len,
                              std::size_t out_len, std::size_t& lo,
                              std::size_t& hi) {
  // positions o with 0 <= o + shift < in_len, clipped to [0, out_len)
  std::ptrdiff_t a = std::max<std::ptrdiff_t>(0, -shift);
  std::ptrdiff_t b = std::min<std::ptrdiff_t>(
      static_cast<std::ptrdiff_t>(out_len),
      static_cast<std::ptrdiff_t>(in_len) - shift);
  lo = static_cast<std::size_t>(a);
  hi = static_cast<std::size_t>(std::max(a, b));
}

struct ConvGeom {
  std::size_t batch, in_ch, in_len, out_ch, width, stride, pad, out_len;
};

// Rows of `src` ([rows, len]) copied into a zero-filled buffer of rows of
// length `stride`, starting at column `offset`.
template <class T>
void pad_rows(const T* src, std::size_t rows, std::size_t len, std::size_t offset,
              std::size_t stride, std::vector<T>& out) {
  out.assign(rows * stride, T{0});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(src + r * len, src + (r + 1) * len, out.data() + r * stride + offset);
  }
}

// Fixed 32-byte vectors through the GCC/Clang vector extension; the
// accumulator tile then stays in registers.
template <class T>
struct Simd {
  typedef T vec __attribute__((vector_size(32)));
  static constexpr std::size_t lanes = 32 / sizeof(T);
  static vec load(const T* p) {
    vec v;
    std::memcpy(&v, p, sizeof v);
    return v;
  }
  static void store(T* p, vec v) { std::memcpy(p, &v, sizeof v); }
  static vec splat(T x) { return vec{} + x; }
};

inline constexpr std::size_t kConvVecs = 2;
inline constexpr std::size_t kConvTile = kConvVecs * 8;  // slack, in elements

// out[k, o] (+)= sum_{c,j} wt(k, c, j) * xp[c, o + j] for KB maps starting at
// k0, with wt(k, c, j) = w[k * k_stride + c * c_stride + j * j_stride]. xp rows
// have length `xp_len` and at least kConvTile slack past the last read.
template <class T, std::size_t KB>
void corr_block(const T* xp, std::size_t xp_len, std::size_t in_ch, const T* w,
                std::ptrdiff_t k_stride, std::ptrdiff_t c_stride, std::ptrdiff_t j_stride,
                std::size_t width, std::size_t k0, T* out, std::size_t out_len,
                const T* bias) {
  using S = Simd<T>;
  using vec = typename S::vec;
  constexpr std::size_t NV = kConvVecs, tile = NV * S::lanes;
  for (std::size_t o0 = 0; o0 < out_len; o0 += tile) {
    const std::size_t tn = std::min(tile, out_len - o0);
    vec acc[KB][NV];
#pragma GCC unroll 8
    for (std::size_t kk = 0; kk < KB; ++kk) {
      const vec init = S::splat(bias ? bias[k0 + kk] : T{0});
#pragma GCC unroll 4
      for (std::size_t v = 0; v < NV; ++v) acc[kk][v] = init;
    }
    for (std::size_t c = 0; c < in_ch; ++c) {
      const T* xrow = xp + c * xp_len + o0;
      const T* wc = w + static_cast<std::ptrdiff_t>(k0) * k_stride +
                    static_cast<std::ptrdiff_t>(c) * c_stride;
      for (std::size_t j = 0; j < width; ++j) {
        vec xs[NV];
#pragma GCC unroll 4
        for (std::size_t v = 0; v < NV; ++v) xs[v] = S::load(xrow + j + v * S::lanes);
        const T* wj = wc + static_cast<std::ptrdiff_t>(j) * j_stride;
#pragma GCC unroll 8
        for (std::size_t kk = 0; kk < KB; ++kk) {
          const T wv = wj[static_cast<std::ptrdiff_t>(kk) * k_stride];
#pragma GCC unroll 4
          for (std::size_t v = 0; v < NV; ++v) acc[kk][v] += xs[v] * wv;
        }
      }
    }
    for (std::size_t kk = 0; kk < KB; ++kk) {
      T* orow = out + (k0 + kk) * out_len + o0;
      T buf[tile];
      for (std::size_t v = 0; v < NV; ++v) S::store(buf + v * S::lanes, acc[kk][v]);
      if (bias) {
        std::copy(buf, buf + tn, orow);
      } else {
        for (std::size_t t = 0; t < tn; ++t) orow[t] += buf[t];
      }
    }
  }
}

template <class T>
void corr_all(const T* xp, std::size_t xp_len, std::size_t in_ch, const T* w,
              std::ptrdiff_t k_stride, std::ptrdiff_t c_stride, std::ptrdiff_t j_stride,
              std::size_t width, std::size_t out_ch, T* out, std::size_t out_len,
              const T* bias) {
  std::size_t k = 0;
  for (; k + 4 <= out_ch; k += 4) {
    corr_block<T, 4>(xp, xp_len, in_ch, w, k_stride, c_stride, j_stride, width, k, out,
                     out_len, bias);
  }
  for (; k + 2 <= out_ch; k += 2) {
    corr_block<T, 2>(xp, xp_len, in_ch, w, k_stride, c_stride, j_stride, width, k, out,
                     out_len, bias);
  }
  for (; k < out_ch; ++k) {
    corr_block<T, 1>(xp, xp_len, in_ch, w, k_stride, c_stride, j_stride, width, k, out,
                     out_len, bias);
  }
}

template <class T>
void conv_forward(const ConvGeom& g, const T* x, const T* w, const T* bias,
                  T* y) {
  if (g.stride == 1) {
    // padded row: [pad zeros | x | zeros], long enough for whole tiles
    const std::size_t row = g.out_len + g.width - 1 + kConvTile;
    std::vector<T> xp;
    for (std::size_t b = 0; b < g.batch; ++b) {
      pad_rows(x + b * g.in_ch * g.in_len, g.in_ch, g.in_len, g.pad, row, xp);
      corr_all(xp.data(), row, g.in_ch, w, static_cast<std::ptrdiff_t>(g.in_ch * g.width),
               static_cast<std::ptrdiff_t>(g.width), 1, g.width, g.out_ch,
               y + b * g.out_ch * g.out_len, g.out_len, bias);
    }
    return;
  }
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t k = 0; k < g.out_ch; ++k) {
      T* yrow = y + (b * g.out_ch + k) * g.out_len;
      std::fill(yrow, yrow + g.out_len, bias[k]);
      for (std::size_t c = 0; c < g.in_ch; ++c) {
        const T* xrow = x + (b * g.in_ch + c) * g.in_len;
        const T* wk = w + (k * g.in_ch + c) * g.width;
        for (std::size_t j = 0; j < g.width; ++j) {
          const T wv = wk[j];
          const auto shift = static_cast<std::ptrdiff_t>(j) -
                             static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t o = 0; o < g.out_len; ++o) {
            auto idx = static_cast<std::ptrdiff_t>(o * g.stride) + shift;
            if (idx >= 0 && idx < static_cast<std::ptrdiff_t>(g.in_len)) {
              yrow[o] += wv * xrow[idx];
            }
          }
        }
      }
    }
  }
}

// dw[k, c, j] += sum_o dy[k, o] * xp[c, o + j], W = filter width.
template <class T, std::size_t W>
void conv_weight_grad_w(const ConvGeom& g, const T* xp, std::size_t row, const T* dy,
                        T* dw) {
  using S = Simd<T>;
  using vec = typename S::vec;
  constexpr std::size_t KB = 4, L = S::lanes;
  const std::size_t body = g.out_len / L * L;
  for (std::size_t k0 = 0; k0 < g.out_ch; k0 += KB) {
    const std::size_t kn = std::min(KB, g.out_ch - k0);
    const T* d[KB];
    for (std::size_t kk = 0; kk < KB; ++kk) {
      d[kk] = dy + (k0 + std::min(kk, kn - 1)) * g.out_len;
    }
    for (std::size_t c = 0; c < g.in_ch; ++c) {
      const T* xs = xp + c * row;
      vec acc[KB][W];
#pragma GCC unroll 8
      for (std::size_t kk = 0; kk < KB; ++kk) {
#pragma GCC unroll 8
        for (std::size_t j = 0; j < W; ++j) acc[kk][j] = vec{};
      }
      for (std::size_t o = 0; o < body; o += L) {
        vec xv[W];
#pragma GCC unroll 8
        for (std::size_t j = 0; j < W; ++j) xv[j] = S::load(xs + o + j);
#pragma GCC unroll 8
        for (std::size_t kk = 0; kk < KB; ++kk) {
          const vec dv = S::load(d[kk] + o);
#pragma GCC unroll 8
          for (std::size_t j = 0; j < W; ++j) acc[kk][j] += dv * xv[j];
        }
      }
      for (std::size_t kk = 0; kk < kn; ++kk) {
        for (std::size_t j = 0; j < W; ++j) {
          T s{0};
          for (std::size_t l = 0; l < L; ++l) s += acc[kk][j][l];
          for (std::size_t o = body; o < g.out_len; ++o) s += d[kk][o] * xs[o + j];
          dw[((k0 + kk) * g.in_ch + c) * W + j] += s;
        }
      }
    }
  }
}

template <class T>
void conv_weight_grad(const ConvGeom& g, const T* xp, std::size_t row, const T* dy,
                      T* dw) {
  switch (g.width) {
    case 1: return conv_weight_grad_w<T, 1>(g, xp, row, dy, dw);
    case 3: return conv_weight_grad_w<T, 3>(g, xp, row, dy, dw);
    case 5: return conv_weight_grad_w<T, 5>(g, xp, row, dy, dw);
    default: break;
  }
  for (std::size_t k = 0; k < g.out_ch; ++k) {
    for (std::size_t c = 0; c < g.in_ch; ++c) {
      for (std::size_t j = 0; j < g.width; ++j) {
        dw[(k * g.in_ch + c) * g.width + j] += dot(dy + k * g.out_len, xp + c * row + j, g.out_len);
      }
    }
  }
}

template <class T>
void conv_backward(const ConvGeom& g, const T* x, const T* w, const T* dy,
                   T* dx, T* dw, T* db) {
  if (g.stride == 1) {
    const std::size_t row = g.out_len + g.width - 1 + kConvTile;
    // dy padded so that dx[c, i] = sum_{k,j'} w[k, c, width-1-j'] * dyp[k, i + j']
    const std::size_t dy_off = g.width - 1 - g.pad;
    const std::size_t dy_row = g.in_len + g.width - 1 + kConvTile;
    std::vector<T> xp, dyp;
    for (std::size_t b = 0; b < g.batch; ++b) {
      const T* dyb = dy + b * g.out_ch * g.out_len;
      if (db) {
        for (std::size_t k = 0; k < g.out_ch; ++k) db[k] += sum(dyb + k * g.out_len, g.out_len);
      }
      if (dw) {
        pad_rows(x + b * g.in_ch * g.in_len, g.in_ch, g.in_len, g.pad, row, xp);
        conv_weight_grad(g, xp.data(), row, dyb, dw);
      }
      if (dx) {
        pad_rows(dyb, g.out_ch, g.out_len, dy_off, dy_row, dyp);
        corr_all(dyp.data(), dy_row, g.out_ch, w + (g.width - 1),
                 static_cast<std::ptrdiff_t>(g.width),
                 static_cast<std::ptrdiff_t>(g.in_ch * g.width), -1, g.width, g.in_ch,
                 dx + b * g.in_ch * g.in_len, g.in_len, static_cast<const T*>(nullptr));
      }
    }
    return;
  }
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t k = 0; k < g.out_ch; ++k) {
      const T* dyrow = dy + (b * g.out_ch + k) * g.out_len;
      if (db) db[k] += sum(dyrow, g.out_len);
      for (std::size_t c = 0; c < g.in_ch; ++c) {
        const T* xrow = x + (b * g.in_ch + c) * g.in_len;
        T* dxrow = dx ? dx + (b * g.in_ch + c) * g.in_len : nullptr;
        const T* wk = w + (k * g.in_ch + c) * g.width;
        T* dwk = dw ? dw + (k * g.in_ch + c) * g.width : nullptr;
        for (std::size_t j = 0; j < g.width; ++j) {
          const auto shift = static_cast<std::ptrdiff_t>(j) -
                             static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t o = 0; o < g.out_len; ++o) {
            auto idx = static_cast<std::ptrdiff_t>(o * g.stride) + shift;
            if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(g.in_len)) {
              continue;
            }
            if (dwk) dwk[j] += dyrow[o] * xrow[idx];
            if (dxrow) dxrow[idx] += wk[j] * dyrow[o];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Cross-correlation of x [C_in, I] or [B, C_in, I] with w [C_out, C_in, f]
/// plus per-map bias b [C_out].
template <class T>
Var<T> conv1d(Var<T> x, Var<T> w, Var<T> b, std::size_t stride = 1,
              Padding padding = Padding::Same) {
  const auto d = detail::seq_dims(x.shape(), "conv1d");
  const Shape& ws = w.shape();
  if (ws.size() != 3 || ws[1] != d.channels) {
    throw ShapeError("conv1d: weight shape " + shape_str(ws) +
                     " incompatible with input " + shape_str(x.shape()));
  }
  if (b.shape() != Shape{ws[0]}) {
    throw ShapeError("conv1d: bias shape " + shape_str(b.shape()) +
                     " does not match " + std::to_string(ws[0]) + " maps");
  }
  if (ws[2] % 2 == 0) throw ShapeError("conv1d: filter width must be odd");
  if (stride == 0) throw ShapeError("conv1d: stride must be positive");

  detail::ConvGeom g{d.batch, d.channels, d.length, ws[0], ws[2], stride, 0, 0};
  if (padding == Padding::Same) {
    g.out_len = (d.length + stride - 1) / stride;
    const std::size_t need = (g.out_len - 1) * stride + g.width;
    g.pad = need > d.length ? (need - d.length) / 2 : 0;
  } else {
    if (d.length < g.width) {
      throw ShapeError("conv1d: input shorter than filter with valid padding");
    }
    g.out_len = (d.length - g.width) / stride + 1;
  }

  Shape out_shape = x.shape().size() == 2 ? Shape{g.out_ch, g.out_len}
                                          : Shape{g.batch, g.out_ch, g.out_len};
  Tensor<T> y(std::move(out_shape));
  detail::conv_forward(g, x.value().data().data(), w.value().data().data(),
                       b.value().data().data(), y.data().data());

  const std::size_t xi = x.id(), wi = w.id(), bi = b.id();
  return x.graph()->record(
      std::move(y), {x, w, b}, [g, xi, wi, bi](Graph<T>& gr, std::size_t self) {
        const T* dy = gr.grad(self).data();
        T* dx = gr.requires_grad(xi) ? gr.grad_buffer(xi).data() : nullptr;
        T* dw = gr.requires_grad(wi) ? gr.grad_buffer(wi).data() : nullptr;
        T* db = gr.requires_grad(bi) ? gr.grad_buffer(bi).data() : nullptr;
        detail::conv_backward(g, gr.value(xi).data().data(),
                              gr.value(wi).data().data(), dy, dx, dw, db);
      });
}

template <class T>
Var<T> relu(Var<T> x) {
  const auto& xv = x.value();
  Tensor<T> y(xv.shape());
  detail::MaskHasher mask;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    y[i] = xv[i] < T{0} ? T{0} : xv[i];  // NaN passes through
    mask.push(xv[i] > T{0});
  }
  x.graph()->mix_branch(mask.finish());
  const std::size_t xi = x.id();
  return x.graph()->record(std::move(y), {x},
                           [xi](Graph<T>& gr, std::size_t self) {
                             auto dy = gr.grad(self);
                             auto dx = gr.grad_buffer(xi);
                             const auto& xv = gr.value(xi);
                             for (std::size_t i = 0; i < dx.size(); ++i) {
                               if (xv[i] > T{0}) dx[i] += dy[i];
                             }
                           });
}

/// Per-map normalisation over batch and positions. Train mode normalises by
/// batch statistics and folds them into `stats`; infer mode reads `stats`.
template <class T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, RunningStats<T>& stats,
                  BnMode mode, T momentum = T(0.1), T eps = T(1e-5)) {
  const auto d = detail::seq_dims(x.shape(), "batch_norm");
  if (gamma.shape() != Shape{d.channels} || beta.shape() != Shape{d.channels}) {
    throw ShapeError("batch_norm: gamma/beta must have shape [" +
                     std::to_string(d.channels) + "]");
  }
  const std::size_t per = d.batch * d.length;
  const auto& xv = x.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();

  std::vector<T> mean(d.channels), inv_std(d.channels);
  if (mode == BnMode::Infer) {
    if (!stats.ready) {
      throw GraphError("batch_norm: inference requested before any statistics");
    }
    for (std::size_t c = 0; c < d.channels; ++c) {
      mean[c] = stats.mean[c];
      inv_std[c] = T{1} / std::sqrt(stats.var[c] + eps);
    }
  } else {
    if (per == 0) throw ShapeError("batch_norm: empty batch");
    if (!stats.ready) stats = RunningStats<T>(d.channels);
    for (std::size_t c = 0; c < d.channels; ++c) {
      double s = 0;
      for (std::size_t b = 0; b < d.batch; ++b) {
        const T* row = xv.data().data() + (b * d.channels + c) * d.length;
        for (std::size_t l = 0; l < d.length; ++l) s += row[l];
      }
      const double m = s / static_cast<double>(per);
      double ss = 0;
      for (std::size_t b = 0; b < d.batch; ++b) {
        const T* row = xv.data().data() + (b * d.channels + c) * d.length;
        for (std::size_t l = 0; l < d.length; ++l) {
          const double e = row[l] - m;
          ss += e * e;
        }
      }
      const double var = ss / static_cast<double>(per);
      mean[c] = static_cast<T>(m);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + eps));
      stats.mean[c] = (T{1} - momentum) * stats.mean[c] + momentum * mean[c];
      stats.var[c] = (T{1} - momentum) * stats.var[c] +
                     momentum * static_cast<T>(var);
    }
  }

  Tensor<T> xhat(xv.shape());
  Tensor<T> y(xv.shape());
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t c = 0; c < d.channels; ++c) {
      const std::size_t off = (b * d.channels + c) * d.length;
      for (std::size_t l = 0; l < d.length; ++l) {
        const T h = (xv[off + l] - mean[c]) * inv_std[c];
        xhat[off + l] = h;
        y[off + l] = gv[c] * h + bv[c];
      }
    }
  }

  const std::size_t xi = x.id(), gi = gamma.id(), bi = beta.id();
  const bool train = mode == BnMode::Train;
  return x.graph()->record(
      std::move(y), {x, gamma, beta},
      [d, per, xi, gi, bi, train, inv_std = std::move(inv_std),
       xhat = std::move(xhat)](Graph<T>& gr, std::size_t self) {
        auto dy = gr.grad(self);
        const auto& gv = gr.value(gi);
        std::vector<T> sum_dy(d.channels, T{0}), sum_dy_xhat(d.channels, T{0});
        for (std::size_t b = 0; b < d.batch; ++b) {
          for (std::size_t c = 0; c < d.channels; ++c) {
            const std::size_t off = (b * d.channels + c) * d.length;
            sum_dy[c] += detail::sum(dy.data() + off, d.length);
            sum_dy_xhat[c] +=
                detail::dot(dy.data() + off, xhat.data().data() + off, d.length);
          }
        }
        if (gr.requires_grad(gi)) {
          auto dg = gr.grad_buffer(gi);
          for (std::size_t c = 0; c < d.channels; ++c) dg[c] += sum_dy_xhat[c];
        }
        if (gr.requires_grad(bi)) {
          auto dbt = gr.grad_buffer(bi);
          for (std::size_t c = 0; c < d.channels; ++c) dbt[c] += sum_dy[c];
        }
        if (!gr.requires_grad(xi)) return;
        auto dx = gr.grad_buffer(xi);
        const T n = static_cast<T>(per);
        for (std::size_t b = 0; b < d.batch; ++b) {
          for (std::size_t c = 0; c < d.channels; ++c) {
            const std::size_t off = (b * d.channels + c) * d.length;
            const T scale = gv[c] * inv_std[c];
            if (train) {
              const T mdy = sum_dy[c] / n;
              const T mdx = sum_dy_xhat[c] / n;
              for (std::size_t l = 0; l < d.length; ++l) {
                dx[off + l] +=
                    scale * (dy[off + l] - mdy - xhat[off + l] * mdx);
              }
            } else {
              for (std::size_t l = 0; l < d.length; ++l) {
                dx[off + l] += scale * dy[off + l];
              }
            }
          }
        }
      });
}

/// Pooling along the last axis; trailing samples that do not fill a window
/// are dropped.
template <class T>
Var<T> pool1d(Var<T> x, PoolKind kind, std::size_t width, std::size_t stride) {
  if (width == 0 || stride == 0) {
    throw ShapeError("pool1d: width and stride must be positive");
  }
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("pool1d: scalar input");
  const std::size_t len = s.back();
  const std::size_t rows = len ? x.value().size() / len : 0;
  const std::size_t out_len = len >= width ? (len - width) / stride + 1 : 0;
  Shape os = s;
  os.back() = out_len;
  Tensor<T> y(os);
  std::vector<std::size_t> argmax;
  if (kind == PoolKind::Max) argmax.resize(rows * out_len);
  const auto& xv = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data().data() + r * len;
    for (std::size_t o = 0; o < out_len; ++o) {
      const T* win = in + o * stride;
      if (kind == PoolKind::Avg) {
        T acc{0};
        for (std::size_t j = 0; j < width; ++j) acc += win[j];
        y[r * out_len + o] = acc / static_cast<T>(width);
      } else {
        std::size_t best = 0;
        for (std::size_t j = 1; j < width; ++j) {
          if (win[j] > win[best]) best = j;
        }
        y[r * out_len + o] = win[best];
        argmax[r * out_len + o] = o * stride + best;
      }
    }
  }
  if (kind == PoolKind::Max) {
    detail::MaskHasher h;
    for (std::size_t a : argmax) h.push_index(a);
    x.graph()->mix_branch(h.finish());
  }
  const std::size_t xi = x.id();
  return x.graph()->record(
      std::move(y), {x},
      [=, argmax = std::move(argmax)](Graph<T>& gr, std::size_t self) {
        auto dy = gr.grad(self);
        auto dx = gr.grad_buffer(xi);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t o = 0; o < out_len; ++o) {
            const T g = dy[r * out_len + o];
            if (kind == PoolKind::Avg) {
              const T share = g / static_cast<T>(width);
              for (std::size_t j = 0; j < width; ++j) {
                dx[r * len + o * stride + j] += share;
              }
            } else {
              dx[r * len + argmax[r * out_len + o]] += g;
            }
          }
        }
      });
}

/// Mean over the last (position) axis: [.., K, I] -> [.., K].
template <class T>
Var<T> global_avg_pool(Var<T> x) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw ShapeError("global_avg_pool: expected rank >= 2");
  const std::size_t len = s.back();
  if (len == 0) throw ShapeError("global_avg_pool: zero-length feature maps");
  Shape os(s.begin(), s.end() - 1);
  Tensor<T> y(os);
  const auto& xv = x.value();
  for (std::size_t r = 0; r < y.size(); ++r) {
    y[r] = detail::sum(xv.data().data() + r * len, len) / static_cast<T>(len);
  }
  const std::size_t xi = x.id();
  return x.graph()->record(std::move(y), {x},
                           [xi, len](Graph<T>& gr, std::size_t self) {
                             auto dy = gr.grad(self);
                             auto dx = gr.grad_buffer(xi);
                             for (std::size_t r = 0; r < dy.size(); ++r) {
                               const T g = dy[r] / static_cast<T>(len);
                               for (std::size_t l = 0; l < len; ++l) {
                                 dx[r * len + l] += g;
                               }
                             }
                           });
}

/// Softmax along the last axis, with max subtraction.
template <class T>
Var<T> softmax(Var<T> z) {
  const Shape& s = z.shape();
  if (s.empty()) throw ShapeError("softmax: scalar input");
  const std::size_t n = s.back();
  const std::size_t rows = n ? z.value().size() / n : 0;
  Tensor<T> y(s);
  const auto& zv = z.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = zv.data().data() + r * n;
    T* out = y.data().data() + r * n;
    const T mx = *std::max_element(in, in + n);
    T total{0};
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = std::exp(in[i] - mx);
      total += out[i];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= total;
  }
  const std::size_t zi = z.id();
  return z.graph()->record(std::move(y), {z},
                           [zi, n, rows](Graph<T>& gr, std::size_t self) {
                             auto dy = gr.grad(self);
                             const auto& yv = gr.value(self);
                             auto dz = gr.grad_buffer(zi);
                             for (std::size_t r = 0; r < rows; ++r) {
                               T inner{0};
                               for (std::size_t i = 0; i < n; ++i) {
                                 inner += dy[r * n + i] * yv[r * n + i];
                               }
                               for (std::size_t i = 0; i < n; ++i) {
                                 dz[r * n + i] +=
                                     yv[r * n + i] * (dy[r * n + i] - inner);
                               }
                             }
                           });
}

inline constexpr double kProbClamp = 1e-7;

/// Weighted categorical cross-entropy averaged over the batch.
/// `probs` is [C] or [B, C]; an empty `class_weights` means unit weights.
template <class T>
Var<T> cross_entropy(Var<T> probs, std::span<const int> targets,
                     std::span<const T> class_weights = {}) {
  const Shape& s = probs.shape();
  if (s.empty() || s.size() > 2) {
    throw ShapeError("cross_entropy: expected [C] or [B, C] probabilities");
  }
  const std::size_t classes = s.back();
  const std::size_t batch = s.size() == 2 ? s[0] : 1;
  if (targets.size() != batch) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                     " targets for batch of " + std::to_string(batch));
  }
  if (!class_weights.empty() && class_weights.size() != classes) {
    throw ShapeError("cross_entropy: class weight count mismatch");
  }
  std::vector<T> w(classes, T{1});
  for (std::size_t c = 0; c < class_weights.size(); ++c) {
    if (!(class_weights[c] > T{0})) {
      throw std::invalid_argument("cross_entropy: weights must be positive");
    }
    w[c] = class_weights[c];
  }
  std::vector<int> t(targets.begin(), targets.end());
  for (int v : t) {
    if (v < 0 || static_cast<std::size_t>(v) >= classes) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(v) +
                              " outside [0, " + std::to_string(classes) + ")");
    }
  }
  const auto& pv = probs.value();
  const T lo = static_cast<T>(kProbClamp), hi = T{1} - lo;
  T loss{0};
  detail::MaskHasher clamped;
  for (std::size_t b = 0; b < batch; ++b) {
    const T raw = pv[b * classes + t[b]];
    clamped.push(raw <= lo || raw >= hi);
    loss -= w[t[b]] * std::log(std::clamp(raw, lo, hi));
  }
  probs.graph()->mix_branch(clamped.finish());
  loss /= static_cast<T>(batch);
  const std::size_t pi = probs.id();
  return probs.graph()->record(
      Tensor<T>(Shape{}, std::vector<T>{loss}), {probs},
      [pi, batch, classes, lo, hi, w = std::move(w), t = std::move(t)](
          Graph<T>& gr, std::size_t self) {
        const T g = gr.grad(self)[0] / static_cast<T>(batch);
        const auto& pv = gr.value(pi);
        auto dp = gr.grad_buffer(pi);
        for (std::size_t b = 0; b < batch; ++b) {
          const T p = pv[b * classes + t[b]];
          if (p > lo && p < hi) dp[b * classes + t[b]] -= g * w[t[b]] / p;
        }
      });
}

/// Weighted binary cross-entropy of probabilities p [B] against 0/1 targets.
template <class T>
Var<T> binary_cross_entropy(Var<T> p, std::span<const int> targets,
                            T weight_negative = T{1}, T weight_positive = T{1}) {
  const std::size_t batch = p.value().size();
  if (targets.size() != batch) {
    throw ShapeError("binary_cross_entropy: target count mismatch");
  }
  if (!(weight_negative > T{0}) || !(weight_positive > T{0})) {
    throw std::invalid_argument("binary_cross_entropy: weights must be positive");
  }
  std::vector<int> t(targets.begin(), targets.end());
  for (int v : t) {
    if (v != 0 && v != 1) {
      throw std::out_of_range("binary_cross_entropy: target must be 0 or 1");
    }
  }
  const auto& pv = p.value();
  const T lo = static_cast<T>(kProbClamp), hi = T{1} - lo;
  T loss{0};
  detail::MaskHasher clamped;
  for (std::size_t b = 0; b < batch; ++b) {
    clamped.push(pv[b] <= lo || pv[b] >= hi);
    const T q = std::clamp(pv[b], lo, hi);
    loss -= t[b] ? weight_positive * std::log(q)
                 : weight_negative * std::log(T{1} - q);
  }
  loss /= static_cast<T>(batch);
  p.graph()->mix_branch(clamped.finish());
  const std::size_t pid = p.id();
  return p.graph()->record(
      Tensor<T>(Shape{}, std::vector<T>{loss}), {p},
      [=, t = std::move(t)](Graph<T>& gr, std::size_t self) {
        const T g = gr.grad(self)[0] / static_cast<T>(batch);
        const auto& pv = gr.value(pid);
        auto dp = gr.grad_buffer(pid);
        for (std::size_t b = 0; b < batch; ++b) {
          const T q = pv[b];
          if (!(q > lo && q < hi)) continue;
          dp[b] += t[b] ? -g * weight_positive / q
                        : g * weight_negative / (T{1} - q);
        }
      });
}

template <class T>
Var<T> sum(Var<T> x) {
  const auto& xv = x.value();
  T s{0};
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
  const std::size_t xi = x.id();
  return x.graph()->record(Tensor<T>(Shape{}, std::vector<T>{s}), {x},
                           [xi](Graph<T>& gr, std::size_t self) {
                             const T g = gr.grad(self)[0];
                             for (auto& d : gr.grad_buffer(xi)) d += g;
                           });
}

template <class T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> y = x.value().reshaped(std::move(shape));
  const std::size_t xi = x.id();
  return x.graph()->record(std::move(y), {x},
                           [xi](Graph<T>& gr, std::size_t self) {
                             auto dy = gr.grad(self);
                             auto dx = gr.grad_buffer(xi);
                             for (std::size_t i = 0; i < dx.size(); ++i) {
                               dx[i] += dy[i];
                             }
                           });
}

/// Column `col` of a [R, C] tensor, as [R].
template <class T>
Var<T> select_column(Var<T> x, std::size_t col) {
  const Shape& s = x.shape();
  if (s.size() != 2 || col >= s[1]) {
    throw ShapeError("select_column: bad column for shape " + shape_str(s));
  }
  const std::size_t rows = s[0], cols = s[1];
  Tensor<T> y(Shape{rows});
  for (std::size_t r = 0; r < rows; ++r) y[r] = x.value()[r * cols + col];
  const std::size_t xi = x.id();
  return x.graph()->record(std::move(y), {x},
                           [=](Graph<T>& gr, std::size_t self) {
                             auto dy = gr.grad(self);
                             auto dx = gr.grad_buffer(xi);
                             for (std::size_t r = 0; r < rows; ++r) {
                               dx[r * cols + col] += dy[r];
                             }
                           });
}

/// Maximum along the last axis; the gradient goes to the first maximum.
template <class T>
Var<T> max_last_axis(Var<T> x) {
  const Shape& s = x.shape();
  if (s.empty() || s.back() == 0) {
    throw ShapeError("max_last_axis: empty last axis");
  }
  const std::size_t n = s.back();
  const std::size_t rows = x.value().size() / n;
  Tensor<T> y(Shape(s.begin(), s.end() - 1));
  std::vector<std::size_t> arg(rows);
  const auto& xv = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (xv[r * n + i] > xv[r * n + best]) best = i;
    }
    arg[r] = r * n + best;
    y[r] = xv[arg[r]];
  }
  {
    detail::MaskHasher h;
    for (std::size_t a : arg) h.push_index(a);
    x.graph()->mix_branch(h.finish());
  }
  const std::size_t xi = x.id();
  return x.graph()->record(std::move(y), {x},
                           [xi, arg = std::move(arg)](Graph<T>& gr,
                                                      std::size_t self) {
                             auto dy = gr.grad(self);
                             auto dx = gr.grad_buffer(xi);
                             for (std::size_t r = 0; r < arg.size(); ++r) {
                               dx[arg[r]] += dy[r];
                             }
                           });
}

}  // namespace neoseize
