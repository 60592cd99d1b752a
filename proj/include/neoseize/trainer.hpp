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

// Training samples, the training loop with early stopping, ensembles and the
// leave-one-subject-out harness.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "neoseize/eeg_data.hpp"
#include "neoseize/fcn_model.hpp"
#include "neoseize/metrics.hpp"
#include "neoseize/optimizer.hpp"
#include "neoseize/parallel.hpp"
#include "neoseize/postproc.hpp"
#include "neoseize/preprocess.hpp"
#include "neoseize/synth.hpp"

namespace neoseize {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ClassWeighting { None, InverseFrequency };

inline std::string to_string(ClassWeighting w) {
  return w == ClassWeighting::None ? "none" : "inverse-frequency";
}

inline ClassWeighting parse_class_weighting(const std::string& s) {
  if (s == "none") return ClassWeighting::None;
  if (s == "inverse-frequency") return ClassWeighting::InverseFrequency;
  throw ConfigError("train.class_weighting: expected none or inverse-frequency, got '" + s + "'");
}

struct TrainConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;
  std::size_t batch_size = 4096;
  std::size_t patience = 25;
  std::size_t max_epochs = 100;
  ClassWeighting class_weighting = ClassWeighting::InverseFrequency;
  std::size_t n_validation_subjects = 3;
  std::size_t n_splits = 3;
  double validation_fraction = 0.2;  // fcn1d stratified split
  std::size_t max_per_class = 0;     // 0: keep every sample
  std::uint64_t seed = 1;

  static TrainConfig defaults_for(FcnMode mode) {
    TrainConfig c;
    if (mode == FcnMode::Fcn2d) {
      c.batch_size = 300;
      c.patience = 8;
    }
    return c;
  }

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must be in [0,1)");
    if (batch_size == 0 || patience == 0 || max_epochs == 0) {
      throw ConfigError("train: batch_size, patience and max_epochs must be positive");
    }
    if (patience >= max_epochs) throw ConfigError("train: patience must be below max_epochs");
    if (n_splits == 0 || n_validation_subjects == 0) {
      throw ConfigError("train: n_splits and n_validation_subjects must be positive");
    }
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
      throw ConfigError("train: validation_fraction must be in (0,1)");
    }
  }

  KeyValues to_key_values() const {
    return {{"train.learning_rate", kv::number(learning_rate)},
            {"train.momentum", kv::number(momentum)},
            {"train.batch_size", std::to_string(batch_size)},
            {"train.patience", std::to_string(patience)},
            {"train.max_epochs", std::to_string(max_epochs)},
            {"train.class_weighting", to_string(class_weighting)},
            {"train.n_validation_subjects", std::to_string(n_validation_subjects)},
            {"train.n_splits", std::to_string(n_splits)},
            {"train.validation_fraction", kv::number(validation_fraction)},
            {"train.max_per_class", std::to_string(max_per_class)},
            {"train.seed", std::to_string(seed)}};
  }

  void update(const KeyValues& kvs) {
    auto find = [&](const char* k) -> const std::string* {
      auto it = kvs.find(k);
      return it == kvs.end() ? nullptr : &it->second;
    };
    if (auto* v = find("train.learning_rate")) learning_rate = kv::to_double("train.learning_rate", *v);
    if (auto* v = find("train.momentum")) momentum = kv::to_double("train.momentum", *v);
    if (auto* v = find("train.class_weighting")) class_weighting = parse_class_weighting(*v);
    if (auto* v = find("train.validation_fraction")) {
      validation_fraction = kv::to_double("train.validation_fraction", *v);
    }
    for (auto [key, field] : {std::pair{"train.batch_size", &batch_size},
                              std::pair{"train.patience", &patience},
                              std::pair{"train.max_epochs", &max_epochs},
                              std::pair{"train.n_validation_subjects", &n_validation_subjects},
                              std::pair{"train.n_splits", &n_splits},
                              std::pair{"train.max_per_class", &max_per_class}}) {
      if (auto* v = find(key)) *field = static_cast<std::size_t>(kv::to_u64(key, *v));
    }
    if (auto* v = find("train.seed")) seed = kv::to_u64("train.seed", *v);
  }
};

/// Records brought to the network's input rate, shared by sample sets.
using RecordPool = std::shared_ptr<const std::vector<EegRecord>>;

inline RecordPool prepare_records(const std::vector<EegRecord>& records,
                                  const PreprocessConfig& cfg) {
  auto out = std::make_shared<std::vector<EegRecord>>(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    (*out)[i] = records[i].sample_rate == cfg.target_rate ? records[i] : preprocess(records[i], cfg);
  }
  return out;
}

struct SampleRef {
  std::uint32_t record = 0;
  std::int32_t channel = -1;  // -1: all channels
  std::uint32_t start = 0;    // first sample
};

/// Windows referenced into a record pool. Single-channel samples feed the
/// 1D network, all-channel samples the 2D network.
struct SampleSet {
  RecordPool records;
  std::size_t window_samples = 0;
  std::size_t channels_per_sample = 1;
  std::vector<SampleRef> refs;
  std::vector<int> labels;

  std::size_t size() const { return refs.size(); }

  std::size_t count(int label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
  }

  const EegRecord& record_of(std::size_t i) const { return (*records)[refs[i].record]; }
  const std::string& subject(std::size_t i) const { return record_of(i).subject_id; }
  std::optional<std::size_t> channel(std::size_t i) const {
    if (refs[i].channel < 0) return std::nullopt;
    return static_cast<std::size_t>(refs[i].channel);
  }
  double start_time(std::size_t i) const {
    return static_cast<double>(refs[i].start) / record_of(i).sample_rate;
  }

  /// Materialises samples `idx` as [B, channels_per_sample, L].
  template <class T>
  Tensor<T> batch(std::span<const std::size_t> idx) const {
    const std::size_t L = window_samples, C = channels_per_sample;
    Tensor<T> out(Shape{idx.size(), C, L});
    T* dst = out.data().data();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const SampleRef& r = refs[idx[b]];
      const EegRecord& rec = (*records)[r.record];
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t ch = r.channel >= 0 ? static_cast<std::size_t>(r.channel) : c;
        const auto src = rec.channel(ch).subspan(r.start, L);
        for (std::size_t i = 0; i < L; ++i) dst[(b * C + c) * L + i] = static_cast<T>(src[i]);
      }
    }
    return out;
  }

  template <class T>
  Tensor<T> input(std::size_t i) const {
    const std::size_t one[] = {i};
    return batch<T>(one).reshaped({channels_per_sample, window_samples});
  }

  SampleSet subset(std::span<const std::size_t> idx) const {
    SampleSet s;
    s.records = records;
    s.window_samples = window_samples;
    s.channels_per_sample = channels_per_sample;
    for (std::size_t i : idx) {
      s.refs.push_back(refs[i]);
      s.labels.push_back(labels[i]);
    }
    return s;
  }

  void append(const SampleSet& o) {
    if (records != o.records) throw std::invalid_argument("append: different record pools");
    refs.insert(refs.end(), o.refs.begin(), o.refs.end());
    labels.insert(labels.end(), o.labels.begin(), o.labels.end());
  }
};

namespace train_detail {

inline bool inside(double t0, double t1, const SeizureEvent& e) {
  return e.onset <= t0 + 1e-9 && t1 <= e.offset + 1e-9;
}
inline bool outside(double t0, double t1, const SeizureEvent& e) {
  return t1 <= e.onset + 1e-9 || t0 >= e.offset - 1e-9;
}

inline void check_inputs(const RecordPool& pool, const std::vector<AnnotationSet>& ann) {
  if (!pool || pool->size() != ann.size()) {
    throw std::invalid_argument("samples: records and annotations differ in count");
  }
}

}  // namespace train_detail

/// Single-channel windows: seizure when fully inside a strong event on that
/// channel, background when fully outside every weak event.
inline SampleSet make_samples_strong(const RecordPool& pool,
                                     const std::vector<AnnotationSet>& ann,
                                     const PreprocessConfig& cfg) {
  train_detail::check_inputs(pool, ann);
  bool any_strong = false;
  for (const auto& a : ann) any_strong = any_strong || !a.strong_events().empty();
  if (!any_strong) throw TrainingError("strong-label samples need at least one strong event");
  SampleSet s;
  s.records = pool;
  s.window_samples = cfg.window_samples();
  s.channels_per_sample = 1;
  for (std::size_t r = 0; r < pool->size(); ++r) {
    const EegRecord& rec = (*pool)[r];
    const auto plan = plan_windows(rec.n_samples(), rec.sample_rate, cfg.window_len, cfg.window_shift);
    const auto weak = ann[r].weak_events();
    const auto strong = ann[r].strong_events();
    for (std::size_t w = 0; w < plan.count; ++w) {
      const double t0 = static_cast<double>(plan.start(w)) / rec.sample_rate;
      const double t1 = t0 + cfg.window_len;
      const bool background = std::all_of(weak.begin(), weak.end(), [&](const auto& e) {
        return train_detail::outside(t0, t1, e);
      });
      for (std::size_t c = 0; c < rec.n_channels(); ++c) {
        int label = -1;
        if (background) {
          label = 0;
        } else if (std::any_of(strong.begin(), strong.end(), [&](const auto& e) {
                     return *e.channel == c && train_detail::inside(t0, t1, e);
                   })) {
          label = 1;
        }
        if (label < 0) continue;
        s.refs.push_back({static_cast<std::uint32_t>(r), static_cast<std::int32_t>(c),
                          static_cast<std::uint32_t>(plan.start(w))});
        s.labels.push_back(label);
      }
    }
  }
  return s;
}

/// All-channel windows: 1 when fully inside a weak event, 0 when fully
/// outside all of them; straddling windows are left out.
inline SampleSet make_samples_weak(const RecordPool& pool, const std::vector<AnnotationSet>& ann,
                                   const PreprocessConfig& cfg) {
  train_detail::check_inputs(pool, ann);
  SampleSet s;
  s.records = pool;
  s.window_samples = cfg.window_samples();
  s.channels_per_sample = pool->empty() ? 1 : pool->front().n_channels();
  for (std::size_t r = 0; r < pool->size(); ++r) {
    const EegRecord& rec = (*pool)[r];
    if (rec.n_channels() != s.channels_per_sample) {
      throw std::invalid_argument("weak samples: records differ in channel count");
    }
    const auto plan = plan_windows(rec.n_samples(), rec.sample_rate, cfg.window_len, cfg.window_shift);
    const auto weak = ann[r].weak_events();
    for (std::size_t w = 0; w < plan.count; ++w) {
      const double t0 = static_cast<double>(plan.start(w)) / rec.sample_rate;
      const double t1 = t0 + cfg.window_len;
      int label = -1;
      if (std::any_of(weak.begin(), weak.end(),
                      [&](const auto& e) { return train_detail::inside(t0, t1, e); })) {
        label = 1;
      } else if (std::all_of(weak.begin(), weak.end(),
                             [&](const auto& e) { return train_detail::outside(t0, t1, e); })) {
        label = 0;
      }
      if (label < 0) continue;
      s.refs.push_back({static_cast<std::uint32_t>(r), -1, static_cast<std::uint32_t>(plan.start(w))});
      s.labels.push_back(label);
    }
  }
  return s;
}

/// Seeded random subset with at most `max_per_class` samples of each class;
/// surviving samples keep their original order.
inline SampleSet cap_per_class(const SampleSet& s, std::size_t max_per_class, std::uint64_t seed) {
  if (max_per_class == 0) return s;
  std::vector<std::size_t> keep;
  for (int label : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.labels[i] == label) idx.push_back(i);
    }
    if (idx.size() > max_per_class) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(label)));
      rng.shuffle(std::span(idx));
      idx.resize(max_per_class);
    }
    keep.insert(keep.end(), idx.begin(), idx.end());
  }
  std::sort(keep.begin(), keep.end());
  return s.subset(keep);
}

/// Splits off `fraction` of every (subject, class) group as validation.
inline std::pair<SampleSet, SampleSet> stratified_split(const SampleSet& s, double fraction,
                                                        std::uint64_t seed) {
  std::map<std::pair<std::uint32_t, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < s.size(); ++i) groups[{s.refs[i].record, s.labels[i]}].push_back(i);
  std::vector<std::size_t> train, val;
  for (auto& [key, idx] : groups) {
    Rng rng(derive_seed(seed, (std::uint64_t{key.first} << 1) | static_cast<std::uint64_t>(key.second)));
    rng.shuffle(std::span(idx));
    const auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    val.insert(val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {s.subset(train), s.subset(val)};
}

/// w_c = n / (2 n_c); (1, 1) for balanced classes.
inline std::array<double, 2> inverse_frequency_weights(const SampleSet& s) {
  const double n = static_cast<double>(s.size());
  const double n0 = static_cast<double>(s.count(0)), n1 = static_cast<double>(s.count(1));
  if (n0 == 0.0 || n1 == 0.0) throw TrainingError("training set contains a single class");
  return {n / (2.0 * n0), n / (2.0 * n1)};
}

/// Tracks the best validation score; a later epoch must beat it strictly.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Records the score of the next epoch (1-based); returns true when
  /// training should stop.
  bool update(double score) {
    ++epoch_;
    if (epoch_ == 1 || score > best_) {
      best_ = score;
      best_epoch_ = epoch_;
    }
    return epoch_ - best_epoch_ >= patience_;
  }

  bool improved_last() const { return best_epoch_ == epoch_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best() const { return best_; }
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = -std::numeric_limits<double>::infinity();
};

/// Seizure probability for every sample, batched, inference-mode BN.
template <class T>
std::vector<double> predict_samples(FcnModel<T>& model, const SampleSet& s,
                                    std::size_t batch = 256) {
  std::vector<double> out;
  out.reserve(s.size());
  std::vector<std::size_t> idx;
  for (std::size_t i0 = 0; i0 < s.size(); i0 += batch) {
    idx.clear();
    for (std::size_t i = i0; i < std::min(s.size(), i0 + batch); ++i) idx.push_back(i);
    const auto x = s.batch<T>(idx);
    for (T p : model.predict_seizure(x, batch)) out.push_back(static_cast<double>(p));
  }
  return out;
}

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_auc = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_val_auc = 0.0;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Mini-batch SGD with Nesterov momentum; keeps the parameters of the epoch
/// with the best validation AUC.
template <class T>
TrainResult train_model(FcnModel<T>& model, const SampleSet& train, const SampleSet& val,
                        const TrainConfig& cfg, const ProgressFn& progress = {}) {
  cfg.validate();
  if (train.size() == 0 || val.size() == 0) throw TrainingError("empty training or validation set");
  if (train.channels_per_sample != model.config().n_input_channels) {
    throw TrainingError("samples have " + std::to_string(train.channels_per_sample) +
                        " channels, model expects " +
                        std::to_string(model.config().n_input_channels));
  }
  auto weights = inverse_frequency_weights(train);  // also rejects a single-class set
  if (cfg.class_weighting == ClassWeighting::None) weights = {1.0, 1.0};
  const T w[2] = {static_cast<T>(weights[0]), static_cast<T>(weights[1])};
  SgdNesterov<T> opt(static_cast<T>(cfg.learning_rate), static_cast<T>(cfg.momentum));
  auto params = model.parameters();
  FcnModel<T> best = model;
  EarlyStopping stopper(cfg.patience);
  TrainResult result;
  std::vector<std::size_t> order(train.size());
  const bool is2d = model.config().mode == FcnMode::Fcn2d;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(cfg.seed, epoch));
    rng.shuffle(std::span(order));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + b0,
                                             std::min(cfg.batch_size, order.size() - b0));
      Tensor<T> x = train.batch<T>(idx);
      std::vector<int> targets(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) targets[i] = train.labels[idx[i]];
      model.zero_grad();
      Graph<T> g;
      Var<T> y = model.forward(g, g.input(std::move(x)), BnMode::Train);
      Var<T> loss = is2d ? binary_cross_entropy(y, std::span<const int>(targets), w[0], w[1])
                         : cross_entropy(y, std::span<const int>(targets), std::span<const T>(w));
      const double lv = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(lv)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches + 1));
      }
      g.backward(loss);
      opt.step(std::span<Parameter<T>* const>(params));
      loss_sum += lv;
      ++batches;
    }
    const auto scores = predict_samples(model, val);
    const double val_auc = auc(roc_curve(scores, val.labels));
    result.history.push_back({epoch, loss_sum / static_cast<double>(batches), val_auc});
    const bool stop = stopper.update(val_auc);
    if (stopper.improved_last()) best.copy_state_from(model);
    if (progress) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "epoch %zu loss %.5f val_auc %.3f%s", epoch,
                    result.history.back().train_loss, val_auc,
                    stopper.improved_last() ? " *" : "");
      progress(buf);
    }
    if (stop) break;
  }
  model.copy_state_from(best);
  result.best_epoch = stopper.best_epoch();
  result.best_val_auc = stopper.best();
  return result;
}

/// Mean of per-model probabilities.
inline std::vector<double> ensemble_average(const std::vector<std::vector<double>>& members) {
  if (members.empty()) throw std::invalid_argument("ensemble: no members");
  std::vector<double> out(members[0].size(), 0.0);
  for (const auto& m : members) {
    if (m.size() != out.size()) throw std::invalid_argument("ensemble: length mismatch");
    for (std::size_t i = 0; i < m.size(); ++i) out[i] += m[i];
  }
  for (double& v : out) v /= static_cast<double>(members.size());
  return out;
}

/// Same architecture; the initialisation seed may differ.
inline bool same_architecture(FcnConfig a, FcnConfig b) {
  a.seed = b.seed = 0;
  return a == b;
}

template <class T>
std::vector<double> ensemble_average(std::vector<FcnModel<T>>& models, const Tensor<T>& windows) {
  if (models.empty()) throw std::invalid_argument("ensemble: no models");
  std::vector<std::vector<double>> members;
  for (auto& m : models) {
    if (!same_architecture(m.config(), models[0].config())) {
      throw std::invalid_argument("ensemble: model configs differ");
    }
    const auto p = m.predict_seizure(windows);
    members.emplace_back(p.begin(), p.end());
  }
  return ensemble_average(members);
}

/// Window-level seizure probabilities for a whole record at the network's
/// input rate: one row per channel for fcn1d, a single row for fcn2d.
template <class T>
std::vector<std::vector<double>> predict_record(FcnModel<T>& model, const EegRecord& rec,
                                                const PreprocessConfig& cfg,
                                                std::size_t batch = 256) {
  const auto plan = plan_windows(rec.n_samples(), rec.sample_rate, cfg.window_len, cfg.window_shift);
  const bool is2d = model.config().mode == FcnMode::Fcn2d;
  const std::size_t rows = is2d ? 1 : rec.n_channels();
  const std::size_t C = is2d ? rec.n_channels() : 1, L = plan.length;
  if (is2d && C != model.config().n_input_channels) {
    throw ShapeError("record has " + std::to_string(C) + " channels, model expects " +
                     std::to_string(model.config().n_input_channels));
  }
  std::vector<std::vector<double>> out(rows, std::vector<double>(plan.count));
  // flat list of (row, window) jobs, batched
  const std::size_t jobs = rows * plan.count;
  for (std::size_t j0 = 0; j0 < jobs; j0 += batch) {
    const std::size_t n = std::min(batch, jobs - j0);
    Tensor<T> x(Shape{n, C, L});
    T* dst = x.data().data();
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t row = (j0 + b) / plan.count, w = (j0 + b) % plan.count;
      for (std::size_t c = 0; c < C; ++c) {
        const auto src = rec.channel(is2d ? c : row).subspan(plan.start(w), L);
        for (std::size_t i = 0; i < L; ++i) dst[(b * C + c) * L + i] = static_cast<T>(src[i]);
      }
    }
    const auto p = model.predict_seizure(x, batch);
    for (std::size_t b = 0; b < n; ++b) {
      out[(j0 + b) / plan.count][(j0 + b) % plan.count] = static_cast<double>(p[b]);
    }
  }
  return out;
}

/// Post-processed per-epoch (window_shift) seizure probability and the
/// matching weak labels for one record.
struct EpochScores {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
};

inline EpochScores score_epochs(const std::vector<std::vector<double>>& rows, const EegRecord& rec,
                                const AnnotationSet& ann, const PreprocessConfig& pre,
                                const PostprocConfig& post) {
  const double period = pre.window_shift;
  const auto trace = postprocess_chain(rows, period, post);
  const auto n_epochs = static_cast<std::size_t>(std::floor(rec.duration() / period + 1e-9));
  EpochScores e;
  e.scores = align_to_epochs(trace, pre.window_len, period, n_epochs);
  e.labels = rasterize(ann, period, n_epochs, rec.n_channels()).weak;
  return e;
}

struct FoldRow {
  std::string subject;
  std::string split;  // split index, or "ensemble"
  std::size_t best_epoch = 0;
  double val_auc = std::numeric_limits<double>::quiet_NaN();
  double test_auc = std::numeric_limits<double>::quiet_NaN();
  double test_auc90 = std::numeric_limits<double>::quiet_NaN();
};

struct FoldResult {
  std::string subject;
  std::vector<FoldRow> rows;
  std::set<std::string> training_subjects;  // every subject a training or validation sample came from
  EpochScores test;                          // post-processed, final model or ensemble
  std::vector<std::vector<double>> raw;      // window probabilities before post-processing
};

struct LooOptions {
  PreprocessConfig pre;
  PostprocConfig post;
  // Annotations used to build training samples; defaults to the evaluation
  // annotations. Lets strong labels be restricted without touching ground truth.
  std::optional<std::vector<AnnotationSet>> train_annotations;
  std::optional<std::filesystem::path> model_dir;  // save one file per trained model
  std::vector<std::size_t> test_subjects;          // empty: every subject
  ProgressFn progress;
};

namespace train_detail {

inline void fill_test_metrics(FoldRow& row, const EpochScores& e) {
  const bool pos = std::find(e.labels.begin(), e.labels.end(), 1) != e.labels.end();
  const bool neg = std::find(e.labels.begin(), e.labels.end(), 0) != e.labels.end();
  if (pos && neg) {
    const auto c = roc_curve(e.scores, e.labels);
    row.test_auc = auc(c);
    row.test_auc90 = auc90(c);
  }
}

template <class T>
void save_model(const LooOptions& opt, FcnModel<T>& m, const std::string& name) {
  if (!opt.model_dir) return;
  std::filesystem::create_directories(*opt.model_dir);
  m.save(*opt.model_dir / (name + ".nsmd"));
}

}  // namespace train_detail

namespace train_detail {

/// Trains on the records `train_idx` of `pool` and scores every record of
/// `test_idx`. Each test subject gets its own FoldResult carrying the rows of
/// the shared training run.
inline std::vector<FoldResult> fit_and_test(const RecordPool& pool,
                                            const std::vector<AnnotationSet>& train_ann,
                                            const std::vector<AnnotationSet>& truth,
                                            const std::vector<std::size_t>& train_idx,
                                            const std::vector<std::size_t>& test_idx,
                                            const FcnConfig& model_cfg, const TrainConfig& train_cfg,
                                            std::uint64_t seed, const LooOptions& opt,
                                            const std::string& tag) {
  const bool is2d = model_cfg.mode == FcnMode::Fcn2d;
  auto say = [&](const std::string& m) {
    if (opt.progress) opt.progress("[" + tag + "] " + m);
  };
  // restrict the pool to the training subjects so test records are unreachable
  auto sub_pool = std::make_shared<std::vector<EegRecord>>();
  std::vector<AnnotationSet> sub_ann;
  for (std::size_t i : train_idx) {
    sub_pool->push_back((*pool)[i]);
    sub_ann.push_back(train_ann[i]);
  }
  const RecordPool train_pool = sub_pool;
  auto require_samples = [&](const SampleSet& s) {
    std::vector<std::size_t> per(sub_pool->size(), 0);
    for (const auto& r : s.refs) ++per[r.record];
    for (std::size_t i = 0; i < per.size(); ++i) {
      if (per[i] == 0) {
        throw TrainingError(tag + ": subject " + (*sub_pool)[i].subject_id +
                            " has no usable samples");
      }
    }
    return s;
  };

  std::vector<FoldResult> results(test_idx.size());
  for (std::size_t t = 0; t < test_idx.size(); ++t) results[t].subject = (*pool)[test_idx[t]].subject_id;
  // member_rows[model][test subject] = per-channel window probabilities
  std::vector<std::vector<std::vector<std::vector<double>>>> member_rows;
  auto run = [&](FcnModel<float>& model, const SampleSet& tr, const SampleSet& va, TrainConfig tc,
                 const std::string& split) {
    std::set<std::string> used;
    for (const SampleSet* s : {&tr, &va}) {
      for (std::size_t i = 0; i < s->size(); ++i) used.insert(s->subject(i));
    }
    say("split " + split + ": " + std::to_string(tr.size()) + " train / " +
        std::to_string(va.size()) + " validation samples");
    const auto tr_res = train_model(model, tr, va, tc, [&](const std::string& m) { say(m); });
    save_model(opt, model, tag + "_split" + split);
    auto& per_test = member_rows.emplace_back();
    for (std::size_t t = 0; t < test_idx.size(); ++t) {
      const std::size_t held = test_idx[t];
      auto rows = predict_record(model, (*pool)[held], opt.pre);
      FoldRow row;
      row.subject = results[t].subject;
      row.split = split;
      row.best_epoch = tr_res.best_epoch;
      row.val_auc = tr_res.best_val_auc;
      fill_test_metrics(row, score_epochs(rows, (*pool)[held], truth[held], opt.pre, opt.post));
      char buf[96];
      std::snprintf(buf, sizeof buf, "split %s: test %s AUC %.2f AUC90 %.2f", split.c_str(),
                    row.subject.c_str(), row.test_auc, row.test_auc90);
      say(buf);
      results[t].rows.push_back(row);
      results[t].training_subjects.insert(used.begin(), used.end());
      per_test.push_back(std::move(rows));
    }
  };

  FcnConfig mc = model_cfg;
  if (!is2d) {
    auto all = cap_per_class(require_samples(make_samples_strong(train_pool, sub_ann, opt.pre)),
                             train_cfg.max_per_class, derive_seed(seed, 11));
    auto [tr, va] = stratified_split(all, train_cfg.validation_fraction, derive_seed(seed, 12));
    mc.seed = derive_seed(seed, 13);
    FcnModel<float> model(mc);
    TrainConfig tc = train_cfg;
    tc.seed = derive_seed(seed, 14);
    run(model, tr, va, tc, "0");
  } else {
    const std::size_t n_train = train_idx.size();
    const std::size_t n_val = std::min(train_cfg.n_validation_subjects, n_train - 1);
    const auto all = require_samples(make_samples_weak(train_pool, sub_ann, opt.pre));
    for (std::size_t split = 0; split < train_cfg.n_splits; ++split) {
      const std::uint64_t split_seed = derive_seed(seed, 100 + split);
      std::vector<std::size_t> order(n_train);
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng rng(split_seed);
      rng.shuffle(std::span(order));
      const std::set<std::size_t> va_set(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
      std::vector<std::size_t> tr_idx, va_idx;
      for (std::size_t i = 0; i < all.size(); ++i) {
        (va_set.count(all.refs[i].record) ? va_idx : tr_idx).push_back(i);
      }
      auto tr = cap_per_class(all.subset(tr_idx), train_cfg.max_per_class, derive_seed(split_seed, 1));
      auto va = cap_per_class(all.subset(va_idx), train_cfg.max_per_class, derive_seed(split_seed, 2));
      if (va.count(0) == 0 || va.count(1) == 0) {
        throw TrainingError(tag + " split " + std::to_string(split) +
                            ": validation subjects lack one class");
      }
      mc.seed = derive_seed(split_seed, 3);
      FcnModel<float> model(mc);
      TrainConfig tc = train_cfg;
      tc.seed = derive_seed(split_seed, 4);
      run(model, tr, va, tc, std::to_string(split));
    }
  }

  for (std::size_t t = 0; t < test_idx.size(); ++t) {
    const std::size_t held = test_idx[t];
    FoldResult& res = results[t];
    if (member_rows.size() == 1) {
      res.raw = member_rows[0][t];
    } else {
      std::vector<std::vector<double>> flat;
      for (const auto& m : member_rows) flat.push_back(m[t][0]);
      res.raw = {ensemble_average(flat)};
    }
    res.test = score_epochs(res.raw, (*pool)[held], truth[held], opt.pre, opt.post);
    if (member_rows.size() > 1) {
      FoldRow row;
      row.subject = res.subject;
      row.split = "ensemble";
      fill_test_metrics(row, res.test);
      res.rows.push_back(row);
    }
  }
  return results;
}

struct Prepared {
  FcnConfig model_cfg;
  RecordPool pool;
  std::vector<AnnotationSet> truth;
  std::vector<AnnotationSet> train_ann;
};

inline Prepared prepare(const std::vector<Subject>& dataset, const FcnConfig& fcn,
                        const TrainConfig& train_cfg, const LooOptions& opt) {
  train_cfg.validate();
  opt.pre.validate();
  Prepared p;
  p.model_cfg = fcn;
  p.model_cfg.n_input_channels =
      fcn.mode == FcnMode::Fcn2d ? dataset.at(0).record.n_channels() : 1;
  p.model_cfg.validate();
  std::vector<EegRecord> raw;
  for (const auto& s : dataset) {
    raw.push_back(s.record);
    p.truth.push_back(s.annotations);
  }
  p.train_ann = opt.train_annotations ? *opt.train_annotations : p.truth;
  if (p.train_ann.size() != dataset.size()) {
    throw std::invalid_argument("training annotations do not match the dataset");
  }
  p.pool = prepare_records(raw, opt.pre);
  return p;
}

}  // namespace train_detail

/// Trains on every subject but one and tests on the held-out subject, for
/// each subject in turn. fcn1d: one model per fold from strong labels with a
/// stratified validation split. fcn2d: `n_splits` models per fold, each
/// validated on `n_validation_subjects` randomly chosen training subjects,
/// averaged into an ensemble.
inline std::vector<FoldResult> loo_harness(const std::vector<Subject>& dataset,
                                           const FcnConfig& fcn, const TrainConfig& train_cfg,
                                           const LooOptions& opt) {
  const std::size_t n = dataset.size();
  if (n < 3) throw TrainingError("leave-one-out needs at least 3 subjects");
  const auto p = train_detail::prepare(dataset, fcn, train_cfg, opt);
  std::vector<std::size_t> tests = opt.test_subjects;
  if (tests.empty()) {
    for (std::size_t i = 0; i < n; ++i) tests.push_back(i);
  }
  std::vector<FoldResult> results(tests.size());
  parallel_for(tests.size(), [&](std::size_t f) {
    const std::size_t held = tests.at(f);
    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < n; ++i) {
      if (i != held) others.push_back(i);
    }
    results[f] = std::move(train_detail::fit_and_test(
        p.pool, p.train_ann, p.truth, others, {held}, p.model_cfg, train_cfg,
        derive_seed(train_cfg.seed, held), opt, "fold_" + (*p.pool)[held].subject_id)[0]);
  });
  return results;
}

/// Trains once on every subject outside `opt.test_subjects` and scores each
/// test subject with the same model or ensemble.
inline std::vector<FoldResult> holdout_harness(const std::vector<Subject>& dataset,
                                               const FcnConfig& fcn, const TrainConfig& train_cfg,
                                               const LooOptions& opt) {
  const std::size_t n = dataset.size();
  const std::set<std::size_t> tests(opt.test_subjects.begin(), opt.test_subjects.end());
  if (tests.empty() || *tests.rbegin() >= n) throw TrainingError("holdout: bad test subjects");
  if (n - tests.size() < 2) throw TrainingError("holdout needs at least 2 training subjects");
  const auto p = train_detail::prepare(dataset, fcn, train_cfg, opt);
  std::vector<std::size_t> train_idx;
  for (std::size_t i = 0; i < n; ++i) {
    if (!tests.count(i)) train_idx.push_back(i);
  }
  return train_detail::fit_and_test(p.pool, p.train_ann, p.truth, train_idx,
                                    {tests.begin(), tests.end()}, p.model_cfg, train_cfg,
                                    train_cfg.seed, opt, "holdout");
}

inline std::string format_fold_csv(const std::vector<FoldResult>& folds) {
  auto num = [](double v) {
    if (std::isnan(v)) return std::string("nan");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return std::string(buf);
  };
  std::string out = "subject,split,best_epoch,val_auc,test_auc,test_auc90\n";
  for (const auto& f : folds) {
    for (const auto& r : f.rows) {
      out += r.subject + "," + r.split + "," + (r.best_epoch ? std::to_string(r.best_epoch) : "") +
             "," + num(r.val_auc) + "," + num(r.test_auc) + "," + num(r.test_auc90) + "\n";
    }
  }
  return out;
}

/// Per-subject scores of the final model or ensemble of each fold.
inline std::vector<SubjectScores> fold_scores(const std::vector<FoldResult>& folds) {
  std::vector<SubjectScores> out;
  for (const auto& f : folds) out.push_back({f.subject, f.test.scores, f.test.labels});
  return out;
}

}  // namespace neoseize
