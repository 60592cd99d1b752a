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

// Fully convolutional seizure classifiers.
//
// Feature-extraction block: [conv(f, stride 1) -> batch norm -> ReLU] x 3
// followed by average pooling with width = stride = pool_stride.
// Classification block: conv(f, 2 maps) -> global average pooling -> softmax.
//
// fcn1d classifies a single-channel window [1, L] into (background, seizure).
// fcn2d runs the same stack with shared weights on every channel of an
// [N, L] window independently, takes the per-channel seizure probability and
// reports the maximum over channels.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "neoseize/autograd.hpp"
#include "neoseize/binary_io.hpp"
#include "neoseize/keyvalue.hpp"
#include "neoseize/rng.hpp"
#include "neoseize/tensor.hpp"

namespace neoseize {

enum class FcnMode { Fcn1d, Fcn2d };

inline std::string to_string(FcnMode m) {
  return m == FcnMode::Fcn1d ? "fcn1d" : "fcn2d";
}

inline FcnMode parse_mode(const std::string& s) {
  if (s == "fcn1d") return FcnMode::Fcn1d;
  if (s == "fcn2d") return FcnMode::Fcn2d;
  throw ConfigError("unknown mode '" + s + "' (expected fcn1d or fcn2d)");
}

inline constexpr std::size_t kNumClasses = 2;

struct FcnConfig {
  std::size_t n_blocks = 3;
  std::size_t pool_stride = 2;
  std::size_t n_maps = 32;
  std::size_t filter_width = 3;
  std::size_t n_input_channels = 1;
  FcnMode mode = FcnMode::Fcn1d;
  std::size_t input_len = 256;
  std::uint64_t seed = 0;

  std::size_t conv_layers() const { return 3 * n_blocks + 1; }

  /// Product of all pooling strides.
  std::size_t downsampling() const {
    std::size_t s = 1;
    for (std::size_t i = 0; i < n_blocks; ++i) s *= pool_stride;
    return s;
  }

  void validate() const {
    if (n_blocks < 1 || n_blocks > 5) {
      throw ConfigError("n_blocks must be in [1, 5], got " +
                        std::to_string(n_blocks));
    }
    if (pool_stride < 1 || pool_stride > 3) {
      throw ConfigError("pool_stride must be 1, 2 or 3, got " +
                        std::to_string(pool_stride));
    }
    if (n_maps < 2) throw ConfigError("n_maps must be at least 2");
    if (filter_width % 2 == 0) throw ConfigError("filter_width must be odd");
    if (input_len == 0) throw ConfigError("input_len must be positive");
    if (mode == FcnMode::Fcn1d && n_input_channels != 1) {
      throw ConfigError("fcn1d takes exactly one input channel");
    }
    if (mode == FcnMode::Fcn2d && n_input_channels < 2) {
      throw ConfigError("fcn2d takes at least two input channels");
    }
  }

  KeyValues to_key_values() const {
    return {{"mode", to_string(mode)},
            {"blocks", std::to_string(n_blocks)},
            {"pool_stride", std::to_string(pool_stride)},
            {"n_maps", std::to_string(n_maps)},
            {"filter_width", std::to_string(filter_width)},
            {"n_input_channels", std::to_string(n_input_channels)},
            {"input_len", std::to_string(input_len)},
            {"model_seed", std::to_string(seed)}};
  }

  static FcnConfig from_key_values(const KeyValues& kvs) {
    FcnConfig c;
    for (const auto& [k, v] : kvs) {
      if (k == "mode") c.mode = parse_mode(v);
      else if (k == "blocks") c.n_blocks = kv::to_u64(k, v);
      else if (k == "pool_stride") c.pool_stride = kv::to_u64(k, v);
      else if (k == "n_maps") c.n_maps = kv::to_u64(k, v);
      else if (k == "filter_width") c.filter_width = kv::to_u64(k, v);
      else if (k == "n_input_channels") c.n_input_channels = kv::to_u64(k, v);
      else if (k == "input_len") c.input_len = kv::to_u64(k, v);
      else if (k == "model_seed") c.seed = kv::to_u64(k, v);
      else throw ConfigError("unknown model manifest key '" + k + "'");
    }
    return c;
  }

  friend bool operator==(const FcnConfig&, const FcnConfig&) = default;
};

enum class LayerKind { Conv, BatchNorm, Relu, AvgPool, GlobalAvgPool, Softmax,
                       ChannelMax };

struct LayerDesc {
  LayerKind kind;
  std::size_t width = 1;
  std::size_t stride = 1;
  std::size_t in_maps = 0;
  std::size_t out_maps = 0;
};

/// Ordered layer descriptors from input to output. Accepts n_blocks = 0
/// (classification block only) for analysis.
inline std::vector<LayerDesc> layer_plan(const FcnConfig& c) {
  std::vector<LayerDesc> plan;
  std::size_t maps = 1;
  for (std::size_t b = 0; b < c.n_blocks; ++b) {
    for (int k = 0; k < 3; ++k) {
      plan.push_back({LayerKind::Conv, c.filter_width, 1, maps, c.n_maps});
      plan.push_back({LayerKind::BatchNorm, 1, 1, c.n_maps, c.n_maps});
      plan.push_back({LayerKind::Relu, 1, 1, c.n_maps, c.n_maps});
      maps = c.n_maps;
    }
    plan.push_back({LayerKind::AvgPool, c.pool_stride, c.pool_stride, maps, maps});
  }
  plan.push_back({LayerKind::Conv, c.filter_width, 1, maps, kNumClasses});
  plan.push_back({LayerKind::GlobalAvgPool, 1, 1, kNumClasses, kNumClasses});
  plan.push_back({LayerKind::Softmax, 1, 1, kNumClasses, kNumClasses});
  if (c.mode == FcnMode::Fcn2d) {
    plan.push_back({LayerKind::ChannelMax, 1, 1, 1, 1});
  }
  return plan;
}

inline std::size_t count_conv_layers(const FcnConfig& c) {
  std::size_t n = 0;
  for (const auto& l : layer_plan(c)) n += l.kind == LayerKind::Conv;
  return n;
}

/// Receptive field of the classification conv, in input samples:
/// RF <- (RF - 1) * s + f, starting from the deepest conv's width and walking
/// toward the input, capped at input_len.
inline std::size_t receptive_field_uncapped(const FcnConfig& c) {
  if (c.filter_width % 2 == 0) throw ConfigError("filter_width must be odd");
  const auto plan = layer_plan(c);
  std::size_t last = 0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (plan[i].kind == LayerKind::Conv) last = i;
  }
  std::size_t rf = plan[last].width;
  for (std::size_t i = last; i-- > 0;) {
    const auto& l = plan[i];
    if (l.kind == LayerKind::Conv || l.kind == LayerKind::AvgPool) {
      rf = (rf - 1) * l.stride + l.width;
    }
  }
  return rf;
}

inline std::size_t receptive_field(const FcnConfig& c) {
  return std::min(receptive_field_uncapped(c), c.input_len);
}

/// Trainable parameters: conv weights and biases, batch-norm gamma and beta.
inline std::size_t count_params(const FcnConfig& c) {
  std::size_t n = 0;
  for (const auto& l : layer_plan(c)) {
    if (l.kind == LayerKind::Conv) {
      n += l.in_maps * l.width * l.out_maps + l.out_maps;
    } else if (l.kind == LayerKind::BatchNorm) {
      n += 2 * l.out_maps;
    }
  }
  return n;
}

template <class T>
class FcnModel {
 public:
  struct Conv {
    Parameter<T> weight;
    Parameter<T> bias;
  };
  struct Norm {
    Parameter<T> gamma;
    Parameter<T> beta;
    RunningStats<T> stats;
  };

  FcnModel() = default;

  /// Builds the network and draws He-uniform weights from config.seed.
  explicit FcnModel(FcnConfig config) : config_(config) {
    config_.validate();
    Rng rng(derive_seed(config_.seed, 0x6663'6e5f'696e'6974ULL));
    std::size_t conv_i = 0, norm_i = 0;
    for (const auto& l : layer_plan(config_)) {
      if (l.kind == LayerKind::Conv) {
        const std::string base = "conv" + std::to_string(conv_i++);
        Tensor<T> w(Shape{l.out_maps, l.in_maps, l.width});
        const double limit = std::sqrt(6.0 / static_cast<double>(l.in_maps * l.width));
        for (std::size_t i = 0; i < w.size(); ++i) {
          w[i] = static_cast<T>(rng.uniform(-limit, limit));
        }
        convs_.push_back({Parameter<T>(base + ".weight", std::move(w)),
                          Parameter<T>(base + ".bias", Tensor<T>(Shape{l.out_maps}))});
      } else if (l.kind == LayerKind::BatchNorm) {
        const std::string base = "bn" + std::to_string(norm_i++);
        norms_.push_back({Parameter<T>(base + ".gamma", Tensor<T>(Shape{l.out_maps}, T{1})),
                          Parameter<T>(base + ".beta", Tensor<T>(Shape{l.out_maps})),
                          RunningStats<T>(l.out_maps)});
      }
    }
  }

  const FcnConfig& config() const { return config_; }
  std::vector<Conv>& convs() { return convs_; }
  const std::vector<Conv>& convs() const { return convs_; }
  std::vector<Norm>& norms() { return norms_; }
  const std::vector<Norm>& norms() const { return norms_; }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& c : convs_) {
      out.push_back(&c.weight);
      out.push_back(&c.bias);
    }
    for (auto& n : norms_) {
      out.push_back(&n.gamma);
      out.push_back(&n.beta);
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& c : convs_) n += c.weight.value.size() + c.bias.value.size();
    for (const auto& b : norms_) n += b.gamma.value.size() + b.beta.value.size();
    return n;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  /// Output of the last feature-extraction block for x [B, 1, L].
  Var<T> features(Graph<T>& g, Var<T> x, BnMode mode) {
    std::size_t conv_i = 0, norm_i = 0;
    Var<T> h = x;
    for (std::size_t b = 0; b < config_.n_blocks; ++b) {
      for (int k = 0; k < 3; ++k) {
        Conv& c = convs_[conv_i++];
        h = conv1d(h, g.param(c.weight), g.param(c.bias));
        Norm& n = norms_[norm_i++];
        h = batch_norm(h, g.param(n.gamma), g.param(n.beta), n.stats, mode);
        h = relu(h);
      }
      if (config_.pool_stride > 1) {
        h = pool1d(h, PoolKind::Avg, config_.pool_stride, config_.pool_stride);
      }
    }
    return h;
  }

  /// Two class maps [B, 2, L'] before global pooling.
  Var<T> class_maps(Graph<T>& g, Var<T> x, BnMode mode) {
    Var<T> h = features(g, x, mode);
    Conv& c = convs_.back();
    return conv1d(h, g.param(c.weight), g.param(c.bias));
  }

  /// fcn1d: x [B, 1, L] -> class probabilities [B, 2].
  /// fcn2d: x [B, N, L] -> seizure probability [B] (max over channels).
  Var<T> forward(Graph<T>& g, Var<T> x, BnMode mode) {
    const Shape& s = x.shape();
    if (s.size() != 3 || s[1] != config_.n_input_channels) {
      throw ShapeError("fcn forward: expected [B, " +
                       std::to_string(config_.n_input_channels) + ", L], got " +
                       shape_str(s));
    }
    if (config_.mode == FcnMode::Fcn1d) {
      return softmax(global_avg_pool(class_maps(g, x, mode)));
    }
    const std::size_t batch = s[0], ch = s[1];
    Var<T> flat = reshape(x, {batch * ch, 1, s[2]});
    Var<T> probs = softmax(global_avg_pool(class_maps(g, flat, mode)));
    Var<T> per_channel = reshape(select_column(probs, 1), {batch, ch});
    return max_last_axis(per_channel);
  }

  /// Seizure probability per window using running statistics.
  /// windows: [B, C, L] with C = n_input_channels.
  std::vector<T> predict_seizure(const Tensor<T>& windows,
                                 std::size_t chunk = 64) {
    const Shape& s = windows.shape();
    if (s.size() != 3 || s[1] != config_.n_input_channels) {
      throw ShapeError("predict: expected [B, " +
                       std::to_string(config_.n_input_channels) + ", L], got " +
                       shape_str(s));
    }
    std::vector<T> out;
    out.reserve(s[0]);
    const std::size_t per = s[1] * s[2];
    for (std::size_t start = 0; start < s[0]; start += chunk) {
      const std::size_t n = std::min(chunk, s[0] - start);
      std::vector<T> buf(windows.data().begin() + start * per,
                         windows.data().begin() + (start + n) * per);
      Graph<T> g(false);
      auto y = forward(g, g.input(Tensor<T>(Shape{n, s[1], s[2]}, std::move(buf))),
                       BnMode::Infer);
      if (config_.mode == FcnMode::Fcn1d) {
        for (std::size_t i = 0; i < n; ++i) out.push_back(y.value()[i * 2 + 1]);
      } else {
        for (std::size_t i = 0; i < n; ++i) out.push_back(y.value()[i]);
      }
    }
    return out;
  }

  /// Single-window prediction: fcn1d -> {p_background, p_seizure};
  /// fcn2d -> {p_seizure}.
  std::vector<T> predict(const Tensor<T>& window) {
    if (window.rank() != 2) throw ShapeError("predict: expected [C, L] window");
    Graph<T> g(false);
    auto y = forward(g, g.input(window.reshaped({1, window.dim(0), window.dim(1)})),
                     BnMode::Infer);
    auto d = y.value().data();
    return {d.begin(), d.end()};
  }

  /// Per-position seizure-ness: softmax across the two final maps, repeated
  /// by the total pooling factor and padded with the last value to input
  /// length. Returns [C, L] (C = 1 for fcn1d).
  Tensor<T> seizure_heatmap(const Tensor<T>& window) {
    if (window.rank() != 2 || window.dim(0) != config_.n_input_channels) {
      throw ShapeError("heatmap: expected [" +
                       std::to_string(config_.n_input_channels) + ", L] window");
    }
    const std::size_t ch = window.dim(0), len = window.dim(1);
    Graph<T> g(false);
    auto maps = class_maps(g, g.input(window.reshaped({ch, 1, len})), BnMode::Infer);
    auto sm = softmax(g.input(transpose_maps(maps.value())));
    const std::size_t positions = maps.shape()[2];
    const std::size_t factor = config_.downsampling();
    Tensor<T> out(Shape{ch, len});
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t p = positions ? std::min(i / factor, positions - 1) : 0;
        out.at(c, i) = sm.value()[(c * positions + p) * kNumClasses + 1];
      }
    }
    return out;
  }

  void save(const std::filesystem::path& path) const;
  static FcnModel load(const std::filesystem::path& path);

  /// Copies values and running statistics from another model of the same
  /// configuration (used to keep the best snapshot during training).
  void copy_state_from(const FcnModel& other) {
    if (!(other.config_ == config_)) throw ConfigError("model config mismatch");
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      convs_[i].weight.value = other.convs_[i].weight.value;
      convs_[i].bias.value = other.convs_[i].bias.value;
    }
    for (std::size_t i = 0; i < norms_.size(); ++i) {
      norms_[i].gamma.value = other.norms_[i].gamma.value;
      norms_[i].beta.value = other.norms_[i].beta.value;
      norms_[i].stats = other.norms_[i].stats;
    }
  }

  template <class U>
  FcnModel<U> cast() const {
    FcnModel<U> m(config_);
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      m.convs()[i].weight.value = convs_[i].weight.value.template cast<U>();
      m.convs()[i].bias.value = convs_[i].bias.value.template cast<U>();
    }
    for (std::size_t i = 0; i < norms_.size(); ++i) {
      auto& n = m.norms()[i];
      n.gamma.value = norms_[i].gamma.value.template cast<U>();
      n.beta.value = norms_[i].beta.value.template cast<U>();
      n.stats.mean = norms_[i].stats.mean.template cast<U>();
      n.stats.var = norms_[i].stats.var.template cast<U>();
      n.stats.ready = norms_[i].stats.ready;
    }
    return m;
  }

  /// Every stored tensor by name, in a fixed order (serialisation order).
  std::vector<std::pair<std::string, const Tensor<T>*>> named_tensors() const {
    std::vector<std::pair<std::string, const Tensor<T>*>> out;
    for (const auto& c : convs_) {
      out.emplace_back(c.weight.name, &c.weight.value);
      out.emplace_back(c.bias.name, &c.bias.value);
    }
    for (std::size_t i = 0; i < norms_.size(); ++i) {
      const auto& n = norms_[i];
      const std::string base = "bn" + std::to_string(i);
      out.emplace_back(n.gamma.name, &n.gamma.value);
      out.emplace_back(n.beta.name, &n.beta.value);
      out.emplace_back(base + ".running_mean", &n.stats.mean);
      out.emplace_back(base + ".running_var", &n.stats.var);
    }
    return out;
  }

 private:
  // [C, 2, P] -> [C * P, 2] so softmax runs across the two class maps.
  static Tensor<T> transpose_maps(const Tensor<T>& maps) {
    const std::size_t ch = maps.dim(0), k = maps.dim(1), p = maps.dim(2);
    Tensor<T> out(Shape{ch * p, k});
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t m = 0; m < k; ++m) {
        for (std::size_t i = 0; i < p; ++i) out.at(c * p + i, m) = maps.at(c, m, i);
      }
    }
    return out;
  }

  Tensor<T>* mutable_tensor(const std::string& name) {
    for (auto& [n, t] : named_tensors()) {
      if (n == name) return const_cast<Tensor<T>*>(t);
    }
    return nullptr;
  }

  FcnConfig config_;
  std::vector<Conv> convs_;
  std::vector<Norm> norms_;
};

inline constexpr char kModelMagic[4] = {'N', 'S', 'M', 'D'};
inline constexpr std::uint16_t kModelVersion = 1;

/// Layout: "NSMD", u16 version, u32 manifest length, manifest (key=value
/// text of the FcnConfig), u32 tensor count, then per tensor: u16 name
/// length, name, u8 rank, u64 dims, little-endian f32 values.
template <class T>
void FcnModel<T>::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os.write(kModelMagic, 4);
  io::put_u16(os, kModelVersion);
  const std::string manifest = kv::format(config_.to_key_values());
  io::put_u32(os, static_cast<std::uint32_t>(manifest.size()));
  os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  const auto tensors = named_tensors();
  io::put_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    io::put_string16(os, name);
    io::put_u8(os, static_cast<std::uint8_t>(t->rank()));
    for (std::size_t d : t->shape()) io::put_u64(os, d);
    for (std::size_t i = 0; i < t->size(); ++i) {
      io::put_f32(os, static_cast<float>((*t)[i]));
    }
  }
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

template <class T>
FcnModel<T> FcnModel<T>::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open model '" + path.string() + "'");
  const std::string magic = io::get_bytes(is, 4, "magic");
  if (magic != std::string(kModelMagic, 4)) {
    throw FormatError("'" + path.string() + "' is not a model file");
  }
  if (const auto v = io::get_u16(is, "version"); v != kModelVersion) {
    throw FormatError("unsupported model version " + std::to_string(v));
  }
  const std::string manifest = io::get_bytes(is, io::get_u32(is, "manifest"), "manifest");
  FcnModel<T> model(FcnConfig::from_key_values(kv::parse(manifest, "model manifest")));
  const std::uint32_t count = io::get_u32(is, "tensor count");
  const auto expected = model.named_tensors();
  if (count != expected.size()) {
    throw FormatError("model has " + std::to_string(count) + " tensors, config implies " +
                      std::to_string(expected.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = io::get_string16(is, "tensor name");
    Tensor<T>* dst = model.mutable_tensor(name);
    if (!dst) throw FormatError("unexpected tensor '" + name + "'");
    Shape shape(io::get_u8(is, "rank"));
    for (auto& d : shape) d = io::get_u64(is, "dimension");
    if (shape != dst->shape()) {
      throw FormatError("tensor '" + name + "' has shape " + shape_str(shape) +
                        ", expected " + shape_str(dst->shape()));
    }
    for (std::size_t k = 0; k < dst->size(); ++k) {
      (*dst)[k] = static_cast<T>(io::get_f32(is, "tensor values"));
    }
  }
  return model;
}

}  // namespace neoseize
