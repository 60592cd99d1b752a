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

// Front end: zero-phase band-pass FIR, anti-aliased integer decimation and
// sliding windows.
//
// Filters are Hamming-windowed sincs. The length starts from the usual
// 3.3 * fs / transition estimate and grows until a dense check of the
// frequency response meets the requested ripple and attenuation.

#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "neoseize/eeg_data.hpp"
#include "neoseize/keyvalue.hpp"
#include "neoseize/parallel.hpp"

namespace neoseize {

struct PreprocessConfig {
  double band_lo = 0.5;
  double band_hi = 12.8;
  double target_rate = 32.0;
  double window_len = 8.0;
  double window_shift = 1.0;

  void validate() const {
    if (!(band_lo > 0.0 && band_lo < band_hi && band_hi < target_rate / 2.0)) {
      throw ConfigError("preprocess: need 0 < band_lo < band_hi < target_rate/2");
    }
    if (!(window_len > 0.0)) throw ConfigError("preprocess: window_len must be positive");
    if (!(window_shift > 0.0)) throw ConfigError("preprocess: window_shift must be positive");
  }

  std::size_t window_samples() const {
    return static_cast<std::size_t>(std::llround(window_len * target_rate));
  }
  std::size_t shift_samples() const {
    return static_cast<std::size_t>(std::llround(window_shift * target_rate));
  }

  KeyValues to_key_values() const {
    return {{"pre.band_lo", kv::number(band_lo)},
            {"pre.band_hi", kv::number(band_hi)},
            {"pre.target_rate", kv::number(target_rate)},
            {"pre.window_len", kv::number(window_len)},
            {"pre.window_shift", kv::number(window_shift)}};
  }

  void update(const KeyValues& kvs) {
    for (auto [key, field] : {std::pair{"pre.band_lo", &band_lo},
                              std::pair{"pre.band_hi", &band_hi},
                              std::pair{"pre.target_rate", &target_rate},
                              std::pair{"pre.window_len", &window_len},
                              std::pair{"pre.window_shift", &window_shift}}) {
      if (auto it = kvs.find(key); it != kvs.end()) *field = kv::to_double(key, it->second);
    }
  }
};

struct FirSpec {
  double sample_rate;
  // Passband [pass_lo, pass_hi]; stopbands [0, stop_lo] and [stop_hi, fs/2].
  // stop_lo <= 0 means low-pass.
  double pass_lo, pass_hi, stop_lo, stop_hi;
  double ripple_db = 1.0;
  double atten_db = 40.0;
};

/// Magnitude response of a linear-phase FIR at frequency f (Hz).
inline double fir_gain(const std::vector<double>& h, double fs, double f) {
  const double mid = 0.5 * static_cast<double>(h.size() - 1);
  double acc = 0.0;
  for (std::size_t n = 0; n < h.size(); ++n) {
    acc += h[n] * std::cos(2.0 * std::numbers::pi * f / fs * (static_cast<double>(n) - mid));
  }
  return std::abs(acc);
}

namespace pre_detail {

inline double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

inline std::vector<double> windowed_sinc(std::size_t taps, double fs, double lo_cut,
                                         double hi_cut) {
  std::vector<double> h(taps);
  const double mid = 0.5 * static_cast<double>(taps - 1);
  const double a = 2.0 * hi_cut / fs, b = lo_cut > 0.0 ? 2.0 * lo_cut / fs : 0.0;
  for (std::size_t n = 0; n < taps; ++n) {
    const double m = static_cast<double>(n) - mid;
    const double ideal = a * sinc(a * m) - b * sinc(b * m);
    const double w = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                            static_cast<double>(taps - 1));
    h[n] = ideal * w;
  }
  return h;
}

inline bool meets(const std::vector<double>& h, const FirSpec& s) {
  const double fs = s.sample_rate, nyq = fs / 2.0;
  const int grid = 400;
  double pmin = 1e300, pmax = 0.0;
  for (int i = 0; i <= grid; ++i) {
    const double f = s.pass_lo + (s.pass_hi - s.pass_lo) * i / grid;
    const double g = fir_gain(h, fs, f);
    pmin = std::min(pmin, g);
    pmax = std::max(pmax, g);
  }
  if (!(pmin > 0.0) || 20.0 * std::log10(pmax / pmin) > s.ripple_db) return false;
  if (20.0 * std::log10(pmax) > s.ripple_db || 20.0 * std::log10(pmin) < -s.ripple_db) {
    return false;
  }
  const double floor = std::pow(10.0, -s.atten_db / 20.0);
  if (s.stop_lo > 0.0) {
    for (int i = 0; i <= grid; ++i) {
      if (fir_gain(h, fs, s.stop_lo * i / grid) > floor) return false;
    }
  }
  if (s.stop_hi < nyq) {
    // sidelobes are densest right after the edge
    const std::size_t points = std::max<std::size_t>(grid, 4 * h.size());
    for (std::size_t i = 0; i <= points; ++i) {
      const double f = s.stop_hi + (nyq - s.stop_hi) * static_cast<double>(i) / points;
      if (fir_gain(h, fs, f) > floor) return false;
    }
  }
  return true;
}

}  // namespace pre_detail

/// Designs (and caches) an odd-length linear-phase FIR meeting `s`. Taps are
/// scaled so the gain at the passband centre (DC for low-pass) is exactly 1.
inline const std::vector<double>& design_fir(const FirSpec& s) {
  static std::mutex mu;
  static std::map<std::tuple<double, double, double, double, double, double, double>,
                  std::vector<double>>
      cache;
  const auto key = std::make_tuple(s.sample_rate, s.pass_lo, s.pass_hi, s.stop_lo, s.stop_hi,
                                   s.ripple_db, s.atten_db);
  std::lock_guard lock(mu);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  const double fs = s.sample_rate;
  double transition = s.stop_hi - s.pass_hi;
  if (s.stop_lo > 0.0) transition = std::min(transition, s.pass_lo - s.stop_lo);
  const double lo_cut = s.stop_lo > 0.0 ? 0.5 * (s.stop_lo + s.pass_lo) : 0.0;
  const double hi_cut = 0.5 * (s.pass_hi + std::min(s.stop_hi, fs / 2.0));
  auto taps = static_cast<std::size_t>(std::ceil(3.3 * fs / transition)) | 1;
  std::vector<double> h;
  for (int attempt = 0;; ++attempt) {
    if (attempt > 40) throw std::runtime_error("FIR design did not converge");
    h = pre_detail::windowed_sinc(taps, fs, lo_cut, hi_cut);
    const double ref = s.stop_lo > 0.0 ? std::sqrt(s.pass_lo * s.pass_hi) : 0.0;
    double g = 0.0;
    if (ref == 0.0) {
      for (double v : h) g += v;
    } else {
      g = fir_gain(h, fs, ref);
    }
    for (double& v : h) v /= g;
    if (pre_detail::meets(h, s)) break;
    taps = (taps + taps / 10 + 2) | 1;
  }
  return cache.emplace(key, std::move(h)).first->second;
}

inline FirSpec bandpass_spec(double fs, double lo, double hi) {
  return {fs, lo, hi, lo / 4.0, 2.0 * hi, 1.0, 40.0};
}

/// Anti-aliasing low-pass for decimation to `target`: flat to 0.4*target,
/// 40 dB down from the new Nyquist.
inline FirSpec decimation_spec(double fs, double target) {
  return {fs, 0.0, 0.4 * target, 0.0, 0.5 * target, 0.1, 40.0};
}

namespace pre_detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex mu;
  return mu;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

inline std::size_t fft_size(std::size_t n) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  return m;
}

/// Zero-phase filtering of one row: linear convolution with the centred
/// kernel via a single FFT, edges extended by replicating the end samples.
inline void filter_row(std::span<const double> x, std::span<double> y,
                       const std::vector<double>& h) {
  const std::size_t n = x.size(), taps = h.size(), half = taps / 2;
  if (n == 0) return;
  const std::size_t padded = n + 2 * half;
  const std::size_t m = fft_size(padded + taps - 1);
  const std::size_t bins = m / 2 + 1;
  std::unique_ptr<double, FftwFree> buf(static_cast<double*>(fftw_malloc(sizeof(double) * m)));
  std::unique_ptr<double, FftwFree> kbuf(static_cast<double*>(fftw_malloc(sizeof(double) * m)));
  std::unique_ptr<fftw_complex, FftwFree> X(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins)));
  std::unique_ptr<fftw_complex, FftwFree> K(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins)));
  fftw_plan fwd, inv;
  {
    std::lock_guard lock(fftw_planner_mutex());
    fwd = fftw_plan_dft_r2c_1d(static_cast<int>(m), buf.get(), X.get(), FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(static_cast<int>(m), X.get(), buf.get(), FFTW_ESTIMATE);
  }
  double* b = buf.get();
  for (std::size_t i = 0; i < m; ++i) {
    double v = 0.0;
    if (i < half) {
      v = x[0];
    } else if (i < half + n) {
      v = x[i - half];
    } else if (i < padded) {
      v = x[n - 1];
    }
    b[i] = v;
  }
  std::fill(kbuf.get(), kbuf.get() + m, 0.0);
  std::copy(h.begin(), h.end(), kbuf.get());
  fftw_execute_dft_r2c(fwd, kbuf.get(), K.get());
  fftw_execute_dft_r2c(fwd, b, X.get());
  const double scale = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < bins; ++k) {
    const double re = X.get()[k][0] * K.get()[k][0] - X.get()[k][1] * K.get()[k][1];
    const double im = X.get()[k][0] * K.get()[k][1] + X.get()[k][1] * K.get()[k][0];
    X.get()[k][0] = re * scale;
    X.get()[k][1] = im * scale;
  }
  fftw_execute_dft_c2r(inv, X.get(), b);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }
  // full-convolution index of output sample i is i + 2*half
  for (std::size_t i = 0; i < n; ++i) y[i] = b[i + 2 * half];
}

}  // namespace pre_detail

/// Band-pass filters every channel; output length equals input length.
inline EegRecord bandpass_filter(const EegRecord& r, double lo, double hi) {
  if (!(lo > 0.0 && lo < hi && hi < r.sample_rate / 2.0)) {
    throw ConfigError("bandpass: need 0 < lo < hi < sample_rate/2, got " + kv::number(lo) +
                      ".." + kv::number(hi) + " Hz at " + kv::number(r.sample_rate) + " Hz");
  }
  const auto& h = design_fir(bandpass_spec(r.sample_rate, lo, hi));
  EegRecord out = r;
  parallel_for(r.n_channels(), [&](std::size_t c) {
    pre_detail::filter_row(r.channel(c), out.channel(c), h);
  });
  return out;
}

/// Integer decimation behind an anti-aliasing low-pass;
/// n_out = floor(n_in / factor).
inline EegRecord resample(const EegRecord& r, double target_rate) {
  const double ratio = r.sample_rate / target_rate;
  const auto factor = static_cast<std::size_t>(std::llround(ratio));
  if (!(target_rate > 0.0) || factor < 1 || std::abs(ratio - static_cast<double>(factor)) > 1e-9) {
    throw ConfigError("resample: " + kv::number(r.sample_rate) + " Hz is not an integer multiple of " +
                      kv::number(target_rate) + " Hz");
  }
  EegRecord out;
  out.subject_id = r.subject_id;
  out.channel_names = r.channel_names;
  out.sample_rate = target_rate;
  const std::size_t n = r.n_samples(), n_out = n / factor;
  out.samples = Tensor<double>(Shape{r.n_channels(), n_out});
  if (factor == 1) {
    out.samples = r.samples;
    return out;
  }
  const auto& h = design_fir(decimation_spec(r.sample_rate, target_rate));
  const auto half = static_cast<std::ptrdiff_t>(h.size() / 2);
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  parallel_for(r.n_channels(), [&](std::size_t c) {
    const auto x = r.channel(c);
    auto y = out.channel(c);
    for (std::size_t j = 0; j < n_out; ++j) {
      const auto centre = static_cast<std::ptrdiff_t>(j * factor);
      double acc = 0.0;
      for (std::size_t k = 0; k < h.size(); ++k) {
        const auto idx = std::clamp(centre + half - static_cast<std::ptrdiff_t>(k),
                                    std::ptrdiff_t{0}, last);
        acc += h[k] * x[static_cast<std::size_t>(idx)];
      }
      y[j] = acc;
    }
  });
  return out;
}

/// Band-pass then decimate.
inline EegRecord preprocess(const EegRecord& r, const PreprocessConfig& cfg) {
  cfg.validate();
  return resample(bandpass_filter(r, cfg.band_lo, cfg.band_hi), cfg.target_rate);
}

struct WindowPlan {
  std::size_t length = 0;  // samples per window
  std::size_t step = 0;    // samples between starts
  std::size_t count = 0;

  std::size_t start(std::size_t i) const { return i * step; }
};

inline WindowPlan plan_windows(std::size_t n_samples, double rate, double window_len,
                               double window_shift) {
  const double len = window_len * rate, step = window_shift * rate;
  WindowPlan p;
  p.length = static_cast<std::size_t>(std::llround(len));
  p.step = static_cast<std::size_t>(std::llround(step));
  if (p.length == 0 || p.step == 0 || std::abs(len - static_cast<double>(p.length)) > 1e-9 ||
      std::abs(step - static_cast<double>(p.step)) > 1e-9) {
    throw ConfigError("windows: length and shift must be whole numbers of samples");
  }
  if (n_samples < p.length) {
    throw DataError("record of " + std::to_string(n_samples) + " samples is shorter than one " +
                    std::to_string(p.length) + "-sample window");
  }
  p.count = (n_samples - p.length) / p.step + 1;
  return p;
}

struct Window {
  double start_time = 0.0;
  Tensor<double> data;  // [n_channels, L]
};

inline std::vector<Window> segment_windows(const EegRecord& r, double window_len,
                                           double window_shift) {
  const auto plan = plan_windows(r.n_samples(), r.sample_rate, window_len, window_shift);
  std::vector<Window> out(plan.count);
  for (std::size_t w = 0; w < plan.count; ++w) {
    out[w].start_time = static_cast<double>(plan.start(w)) / r.sample_rate;
    out[w].data = Tensor<double>(Shape{r.n_channels(), plan.length});
    for (std::size_t c = 0; c < r.n_channels(); ++c) {
      const auto row = r.channel(c).subspan(plan.start(w), plan.length);
      std::copy(row.begin(), row.end(), out[w].data.data().begin() + c * plan.length);
    }
  }
  return out;
}

}  // namespace neoseize
