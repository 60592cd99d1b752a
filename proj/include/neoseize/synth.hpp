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

// Synthetic neonatal EEG: 1/f background noise with rhythmic, evolving
// seizure discharges injected into a subset of channels.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "neoseize/eeg_data.hpp"
#include "neoseize/keyvalue.hpp"
#include "neoseize/parallel.hpp"
#include "neoseize/rng.hpp"

namespace neoseize {

struct SynthConfig {
  std::size_t n_subjects = 9;
  double record_duration = 3600.0;  // seconds
  std::size_t n_channels = 8;
  double sample_rate = 256.0;
  double seizure_rate = 6.0;  // expected events per hour
  double duration_min = 20.0;
  double duration_max = 90.0;
  std::size_t spread_min = 1;  // channels per seizure, uniform on [min, max]
  std::size_t spread_max = 3;
  double snr = 2.0;  // seizure peak amplitude over background RMS
  std::uint64_t seed = 1;

  static constexpr double kBackgroundRms = 30.0;  // microvolts
  static constexpr double kMinGap = 30.0;         // seconds between events

  double seizure_amplitude() const { return snr * kBackgroundRms; }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("synth: " + m); };
    if (n_subjects == 0) fail("n_subjects must be positive");
    if (!(record_duration > 0.0)) fail("record_duration must be positive");
    if (n_channels == 0) fail("n_channels must be positive");
    if (!(sample_rate > 0.0)) fail("sample_rate must be positive");
    if (!(seizure_rate >= 0.0)) fail("seizure_rate must be non-negative");
    if (!(duration_min >= 10.0)) fail("duration_min must be at least 10 s");
    if (!(duration_max >= duration_min)) fail("duration_max must be >= duration_min");
    if (spread_min < 1 || spread_max < spread_min || spread_max > n_channels) {
      fail("need 1 <= spread_min <= spread_max <= n_channels");
    }
    if (!(snr > 0.0) || !(seizure_amplitude() > 2.0)) {
      fail("snr too small: seizure amplitude must exceed 2 uV");
    }
    const double expected =
        seizure_rate * record_duration / 3600.0 * 0.5 * (duration_min + duration_max);
    if (expected > record_duration) {
      fail("expected seizure time exceeds the record duration");
    }
  }

  KeyValues to_key_values() const {
    return {{"synth.n_subjects", std::to_string(n_subjects)},
            {"synth.record_duration", kv::number(record_duration)},
            {"synth.n_channels", std::to_string(n_channels)},
            {"synth.sample_rate", kv::number(sample_rate)},
            {"synth.seizure_rate", kv::number(seizure_rate)},
            {"synth.duration_min", kv::number(duration_min)},
            {"synth.duration_max", kv::number(duration_max)},
            {"synth.spread_min", std::to_string(spread_min)},
            {"synth.spread_max", std::to_string(spread_max)},
            {"synth.snr", kv::number(snr)},
            {"synth.seed", std::to_string(seed)}};
  }

  /// Reads the `synth.*` keys present in `kvs`; others keep their values.
  void update(const KeyValues& kvs) {
    auto get = [&](const char* k, auto& field) {
      const auto it = kvs.find(k);
      if (it == kvs.end()) return;
      using F = std::remove_reference_t<decltype(field)>;
      if constexpr (std::is_floating_point_v<F>) {
        field = kv::to_double(k, it->second);
      } else {
        field = static_cast<F>(kv::to_u64(k, it->second));
      }
    };
    get("synth.n_subjects", n_subjects);
    get("synth.record_duration", record_duration);
    get("synth.n_channels", n_channels);
    get("synth.sample_rate", sample_rate);
    get("synth.seizure_rate", seizure_rate);
    get("synth.duration_min", duration_min);
    get("synth.duration_max", duration_max);
    get("synth.spread_min", spread_min);
    get("synth.spread_max", spread_max);
    get("synth.snr", snr);
    get("synth.seed", seed);
  }
};

struct Subject {
  EegRecord record;
  AnnotationSet annotations;
};

inline std::vector<std::string> default_channel_names(std::size_t n) {
  static const char* kBipolar[] = {"Fp2-C4", "C4-O2", "Fp1-C3", "C3-O1",
                                   "T4-C4",  "C4-Cz", "Cz-C3",  "C3-T3"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(n == 8 ? kBipolar[i] : "ch" + std::to_string(i));
  }
  return out;
}

namespace synth_detail {

/// Paul Kellet's pink-noise filter, then scaled to the target RMS.
inline void pink_noise(std::span<double> out, Rng& rng, double rms) {
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  // burn in so the slow poles start near steady state
  for (int i = 0; i < 4096 + static_cast<int>(out.size()); ++i) {
    const double w = rng.normal();
    b0 = 0.99886 * b0 + w * 0.0555179;
    b1 = 0.99332 * b1 + w * 0.0750759;
    b2 = 0.96900 * b2 + w * 0.1538520;
    b3 = 0.86650 * b3 + w * 0.3104856;
    b4 = 0.55000 * b4 + w * 0.5329522;
    b5 = -0.7616 * b5 - w * 0.0168980;
    const double v = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
    b6 = w * 0.115926;
    if (i >= 4096) out[static_cast<std::size_t>(i - 4096)] = v;
  }
  double mean = 0.0;
  for (double v : out) mean += v;
  mean /= static_cast<double>(out.size());
  double ss = 0.0;
  for (double& v : out) {
    v -= mean;
    ss += v * v;
  }
  const double scale = ss > 0.0 ? rms / std::sqrt(ss / static_cast<double>(out.size())) : 0.0;
  for (double& v : out) v *= scale;
}

inline std::size_t poisson(Rng& rng, double lambda) {
  std::size_t k = 0;
  double t = 0.0;
  for (;;) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    t -= std::log(u);
    if (t > lambda) return k;
    ++k;
  }
}

struct Discharge {
  double onset, offset;
  std::vector<std::size_t> channels;
  double f_start, f_end, drive;
  std::vector<double> gain, lag;
};

inline std::vector<Discharge> plan_events(const SynthConfig& c, Rng& rng) {
  const double T = c.record_duration;
  const double q = 1.0 / c.sample_rate;
  std::size_t k = poisson(rng, c.seizure_rate * T / 3600.0);
  std::vector<double> dur(k);
  for (auto& d : dur) d = std::round(rng.uniform(c.duration_min, c.duration_max) / q) * q;
  auto total = [&] {
    double s = 0.0;
    for (double d : dur) s += d;
    return s + static_cast<double>(dur.size() + 1) * SynthConfig::kMinGap;
  };
  while (!dur.empty() && total() > T) dur.pop_back();
  k = dur.size();
  const double free = T - total();
  std::vector<double> gap(k + 1);
  double gsum = 0.0;
  for (auto& g : gap) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    g = -std::log(u);
    gsum += g;
  }
  std::vector<Discharge> out;
  double t = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    t += SynthConfig::kMinGap + std::floor(free * gap[i] / gsum / q) * q;
    Discharge d;
    d.onset = t;
    d.offset = t + dur[i];
    t = d.offset;
    const std::size_t m =
        c.spread_min + static_cast<std::size_t>(rng.below(c.spread_max - c.spread_min + 1));
    std::vector<std::size_t> all(c.n_channels);
    for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
    for (std::size_t j = 0; j < m; ++j) {
      std::swap(all[j], all[j + rng.below(all.size() - j)]);
    }
    d.channels.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m));
    std::sort(d.channels.begin(), d.channels.end());
    d.f_start = rng.uniform(1.0, 3.0);
    d.f_end = rng.uniform(1.0, 3.0);
    d.drive = rng.uniform(1.0, 3.0);
    for (std::size_t j = 0; j < m; ++j) {
      d.gain.push_back(rng.uniform(0.7, 1.0));
      d.lag.push_back(rng.uniform(0.0, 0.2));
    }
    out.push_back(std::move(d));
  }
  return out;
}

/// Amplitude-ramped discharge whose instantaneous frequency moves linearly
/// from f_start to f_end, shaped by tanh to add harmonics.
inline void inject(std::span<double> row, const Discharge& d, std::size_t j, double rate,
                   double amplitude) {
  const double dur = d.offset - d.onset;
  const double ramp = std::min(5.0, 0.25 * dur);
  const double norm = std::tanh(d.drive);
  const auto first = static_cast<std::size_t>(std::llround(d.onset * rate));
  const auto last = std::min(row.size(), static_cast<std::size_t>(std::llround(d.offset * rate)));
  const double slope = (d.f_end - d.f_start) / dur;
  for (std::size_t i = first; i < last; ++i) {
    const double t = static_cast<double>(i - first) / rate;
    double env = 1.0;
    if (t < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * t / ramp);
    if (dur - t < ramp) env = std::min(env, 0.5 - 0.5 * std::cos(std::numbers::pi * (dur - t) / ramp));
    const double tl = std::max(0.0, t - d.lag[j]);
    const double phase = 2.0 * std::numbers::pi * (d.f_start * tl + 0.5 * slope * tl * tl);
    row[i] += amplitude * d.gain[j] * env * std::tanh(d.drive * std::sin(phase)) / norm;
  }
}

}  // namespace synth_detail

inline std::string subject_name(std::size_t i) {
  return (i + 1 < 10 ? "subj0" : "subj") + std::to_string(i + 1);
}

/// One synthetic subject; a pure function of (config, index).
inline Subject synth_subject(const SynthConfig& c, std::size_t index) {
  const std::uint64_t sub = derive_seed(c.seed, index);
  const auto n = static_cast<std::size_t>(std::llround(c.record_duration * c.sample_rate));
  Subject s;
  s.record.subject_id = subject_name(index);
  s.record.sample_rate = c.sample_rate;
  s.record.channel_names = default_channel_names(c.n_channels);
  s.record.samples = Tensor<double>(Shape{c.n_channels, n});
  for (std::size_t ch = 0; ch < c.n_channels; ++ch) {
    Rng rng(derive_seed(sub, 1000 + ch));
    synth_detail::pink_noise(s.record.channel(ch), rng, SynthConfig::kBackgroundRms);
  }
  Rng ev(derive_seed(sub, 1));
  s.annotations.subject_id = s.record.subject_id;
  for (const auto& d : synth_detail::plan_events(c, ev)) {
    s.annotations.events.push_back({d.onset, d.offset, std::nullopt});
    for (std::size_t j = 0; j < d.channels.size(); ++j) {
      synth_detail::inject(s.record.channel(d.channels[j]), d, j, c.sample_rate,
                           c.seizure_amplitude());
      s.annotations.events.push_back({d.onset, d.offset, d.channels[j]});
    }
  }
  for (auto& v : s.record.samples.storage()) v = static_cast<float>(v);
  s.annotations.normalize();
  return s;
}

inline std::vector<Subject> synth_dataset(const SynthConfig& c) {
  c.validate();
  std::vector<Subject> out(c.n_subjects);
  parallel_for(c.n_subjects, [&](std::size_t i) { out[i] = synth_subject(c, i); });
  return out;
}

/// Keeps strong events for a seeded fraction of all weak events across the
/// dataset (at least one when fraction > 0); weak events are untouched.
inline std::vector<AnnotationSet> restrict_strong(const std::vector<AnnotationSet>& sets,
                                                  double fraction, std::uint64_t seed) {
  std::vector<std::pair<std::size_t, std::size_t>> weak;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    for (std::size_t e = 0; e < sets[s].events.size(); ++e) {
      if (sets[s].events[e].weak()) weak.emplace_back(s, e);
    }
  }
  Rng rng(seed);
  rng.shuffle(std::span(weak));
  std::size_t keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(weak.size())));
  if (fraction > 0.0 && !weak.empty()) keep = std::max<std::size_t>(keep, 1);
  keep = std::min(keep, weak.size());
  std::vector<AnnotationSet> out;
  for (const auto& a : sets) {
    AnnotationSet b = a;
    b.events.clear();
    out.push_back(std::move(b));
  }
  std::vector<std::vector<SeizureEvent>> kept_parents(sets.size());
  for (std::size_t i = 0; i < keep; ++i) {
    kept_parents[weak[i].first].push_back(sets[weak[i].first].events[weak[i].second]);
  }
  for (std::size_t s = 0; s < sets.size(); ++s) {
    for (const auto& e : sets[s].events) {
      const bool keep_it = e.weak() || std::any_of(kept_parents[s].begin(), kept_parents[s].end(),
                                                   [&](const auto& w) { return w.contains(e); });
      if (keep_it) out[s].events.push_back(e);
    }
    out[s].normalize();
  }
  return out;
}

}  // namespace neoseize
