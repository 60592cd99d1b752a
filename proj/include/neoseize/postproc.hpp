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

// Post-processing of per-window seizure probabilities: channel fusion,
// smoothing, background adaptation and collar, in that order.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "neoseize/keyvalue.hpp"

namespace neoseize {

/// Per-window probabilities. Entry k belongs to the window starting at
/// start_time + k*period and is timestamped at that window's end.
struct ProbabilityTrace {
  double period = 1.0;
  double window_len = 8.0;
  double start_time = 0.0;
  std::vector<double> values;
  std::vector<std::vector<double>> per_channel;  // optional, before fusion

  double time_of(std::size_t k) const {
    return start_time + static_cast<double>(k) * period + window_len;
  }
};

struct PostprocConfig {
  bool fuse = true;
  bool smooth = true;
  double ma_window = 60.0;  // seconds
  bool adapt = false;
  double adapt_tau = 600.0;  // seconds
  double adapt_beta = 1.0;
  bool use_collar = true;
  double collar_s = 30.0;

  KeyValues to_key_values() const {
    return {{"post.fuse", fuse ? "true" : "false"},
            {"post.smooth", smooth ? "true" : "false"},
            {"post.ma_window", kv::number(ma_window)},
            {"post.adapt", adapt ? "true" : "false"},
            {"post.adapt_tau", kv::number(adapt_tau)},
            {"post.adapt_beta", kv::number(adapt_beta)},
            {"post.collar", use_collar ? "true" : "false"},
            {"post.collar_s", kv::number(collar_s)}};
  }

  void update(const KeyValues& kvs) {
    for (auto [key, field] : {std::pair{"post.fuse", &fuse}, std::pair{"post.smooth", &smooth},
                              std::pair{"post.adapt", &adapt},
                              std::pair{"post.collar", &use_collar}}) {
      if (auto it = kvs.find(key); it != kvs.end()) *field = kv::to_bool(key, it->second);
    }
    for (auto [key, field] : {std::pair{"post.ma_window", &ma_window},
                              std::pair{"post.adapt_tau", &adapt_tau},
                              std::pair{"post.adapt_beta", &adapt_beta},
                              std::pair{"post.collar_s", &collar_s}}) {
      if (auto it = kvs.find(key); it != kvs.end()) *field = kv::to_double(key, it->second);
    }
  }
};

inline std::vector<double> fuse_channels_max(const std::vector<std::vector<double>>& rows) {
  if (rows.empty() || rows[0].empty()) throw std::invalid_argument("fuse: empty matrix");
  std::vector<double> out = rows[0];
  for (const auto& r : rows) {
    if (r.size() != out.size()) throw std::invalid_argument("fuse: ragged channel rows");
    for (std::size_t i = 0; i < r.size(); ++i) out[i] = std::max(out[i], r[i]);
  }
  return out;
}

/// Centred mean over floor(window_s/period) entries, truncated at the edges.
/// Deviations are averaged around the centre value so a constant input is
/// reproduced exactly.
inline std::vector<double> moving_average(const std::vector<double>& v, double window_s,
                                          double period = 1.0) {
  const auto w = static_cast<std::ptrdiff_t>(std::floor(window_s / period + 1e-9));
  if (w < 1) throw std::invalid_argument("moving_average: window shorter than one period");
  const auto n = static_cast<std::ptrdiff_t>(v.size());
  const std::ptrdiff_t back = (w - 1) / 2, ahead = w / 2;
  std::vector<double> out(v.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - back);
    const std::ptrdiff_t hi = std::min(n - 1, i + ahead);
    const double ref = v[static_cast<std::size_t>(i)];
    double dev = 0.0, mn = ref, mx = ref;
    for (std::ptrdiff_t j = lo; j <= hi; ++j) {
      const double x = v[static_cast<std::size_t>(j)];
      dev += x - ref;
      mn = std::min(mn, x);
      mx = std::max(mx, x);
    }
    out[static_cast<std::size_t>(i)] =
        std::clamp(ref + dev / static_cast<double>(hi - lo + 1), mn, mx);
  }
  return out;
}

/// Subtracts a causal exponential moving average of the trace itself:
///   b_t = b_{t-1} + a (v_t - b_{t-1}),  b_{-1} = 0,  a = 1 - exp(-period/tau)
///   out_t = clamp(v_t - beta b_t, 0, 1) / (1 - beta b_t), or 0 where
///   1 - beta b_t <= 0.
inline std::vector<double> background_adapt(const std::vector<double>& v, double period = 1.0,
                                            double tau = 600.0, double beta = 1.0) {
  if (beta < 0.0) throw std::invalid_argument("background_adapt: beta must be >= 0");
  if (!(period > 0.0) || !(tau > 0.0)) {
    throw std::invalid_argument("background_adapt: period and tau must be positive");
  }
  const double a = 1.0 - std::exp(-period / tau);
  std::vector<double> out(v.size());
  double b = 0.0;
  for (std::size_t t = 0; t < v.size(); ++t) {
    b += a * (v[t] - b);
    const double denom = 1.0 - beta * b;
    out[t] = denom > 0.0 ? std::clamp(std::clamp(v[t] - beta * b, 0.0, 1.0) / denom, 0.0, 1.0)
                         : 0.0;
  }
  return out;
}

/// Centred sliding maximum of width 2*floor(collar_s/period) + 1.
inline std::vector<double> collar(const std::vector<double>& v, double collar_s,
                                  double period = 1.0) {
  if (collar_s < 0.0) throw std::invalid_argument("collar: collar_s must be >= 0");
  const auto r = static_cast<std::ptrdiff_t>(std::floor(collar_s / period + 1e-9));
  const auto n = static_cast<std::ptrdiff_t>(v.size());
  std::vector<double> out(v.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - r), hi = std::min(n - 1, i + r);
    double m = v[static_cast<std::size_t>(lo)];
    for (std::ptrdiff_t j = lo + 1; j <= hi; ++j) m = std::max(m, v[static_cast<std::size_t>(j)]);
    out[static_cast<std::size_t>(i)] = m;
  }
  return out;
}

/// fuse -> moving average -> background adaptation -> collar; each stage can
/// be switched off. With fusion off, the first row is used.
inline std::vector<double> postprocess_chain(const std::vector<std::vector<double>>& rows,
                                             double period, const PostprocConfig& cfg) {
  if (rows.empty()) throw std::invalid_argument("postprocess: no channels");
  std::vector<double> v = cfg.fuse ? fuse_channels_max(rows) : rows[0];
  if (cfg.smooth) v = moving_average(v, cfg.ma_window, period);
  if (cfg.adapt) v = background_adapt(v, period, cfg.adapt_tau, cfg.adapt_beta);
  if (cfg.use_collar) v = collar(v, cfg.collar_s, period);
  return v;
}

/// Maps window-indexed values to epochs of length `period`: each window's
/// value goes to the epoch containing its end, earlier epochs repeat the
/// first value and trailing epochs the last.
inline std::vector<double> align_to_epochs(const std::vector<double>& v, double window_len,
                                           double period, std::size_t n_epochs) {
  if (v.empty()) throw std::invalid_argument("align_to_epochs: empty trace");
  const auto lag = static_cast<std::ptrdiff_t>(std::llround(window_len / period)) - 1;
  std::vector<double> out(n_epochs);
  for (std::size_t e = 0; e < n_epochs; ++e) {
    const std::ptrdiff_t k = static_cast<std::ptrdiff_t>(e) - lag;
    out[e] = v[static_cast<std::size_t>(
        std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(v.size()) - 1))];
  }
  return out;
}

inline void write_trace_csv(const std::vector<double>& values, double period,
                            const std::filesystem::path& path, double first_time = 0.0) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << "time_s,probability\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    os << kv::number(first_time + static_cast<double>(i) * period) << ","
       << kv::number(values[i]) << "\n";
  }
}

inline void write_channel_trace_csv(const std::vector<std::vector<double>>& rows,
                                    const std::vector<std::string>& names, double period,
                                    const std::filesystem::path& path, double first_time = 0.0) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << "time_s";
  for (const auto& n : names) os << "," << n;
  os << "\n";
  const std::size_t len = rows.empty() ? 0 : rows[0].size();
  for (std::size_t i = 0; i < len; ++i) {
    os << kv::number(first_time + static_cast<double>(i) * period);
    for (const auto& r : rows) os << "," << kv::number(r[i]);
    os << "\n";
  }
}

}  // namespace neoseize
