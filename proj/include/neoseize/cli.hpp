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

// Command-line front end: run configuration, dataset folders and the
// subcommands synth, preprocess, train, eval, loo, sweep, rf and heatmap.

#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "neoseize/eeg_data.hpp"
#include "neoseize/fcn_model.hpp"
#include "neoseize/keyvalue.hpp"
#include "neoseize/metrics.hpp"
#include "neoseize/postproc.hpp"
#include "neoseize/preprocess.hpp"
#include "neoseize/svg.hpp"
#include "neoseize/synth.hpp"
#include "neoseize/trainer.hpp"

namespace neoseize {

/// "3", "1..5" or "1,3,5" -> list of values.
inline std::vector<std::size_t> parse_range(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const auto a = kv::to_u64(key, text.substr(0, dots));
    const auto b = kv::to_u64(key, text.substr(dots + 2));
    if (b < a) throw ConfigError("key '" + key + "': empty range '" + text + "'");
    for (auto v = a; v <= b; ++v) out.push_back(static_cast<std::size_t>(v));
    return out;
  }
  std::size_t start = 0;
  for (;;) {
    const auto comma = text.find(',', start);
    out.push_back(static_cast<std::size_t>(
        kv::to_u64(key, std::string(kv::trim(text.substr(start, comma - start))))));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Every setting of a run. Files and paths are part of it so that the echoed
/// copy reproduces the run on its own.
struct RunConfig {
  SynthConfig synth;
  PreprocessConfig pre;
  FcnConfig model;
  TrainConfig train;
  PostprocConfig post;
  std::string blocks = "3";       // single value, or a range for sweep
  std::string pool_strides = "2";  // likewise
  std::string data;               // dataset folder; empty: synthesise in memory
  std::string model_path;
  std::string record;
  double start = 0.0;            // heatmap window start, seconds
  std::string channel;           // heatmap channel index; empty: max over channels
  std::size_t repeats = 1;       // sweep repeats per grid point
  double strong_fraction = 1.0;  // share of events keeping strong labels for training

  KeyValues to_key_values() const {
    KeyValues out;
    auto merge = [&](const KeyValues& kvs) { out.insert(kvs.begin(), kvs.end()); };
    merge(synth.to_key_values());
    merge(pre.to_key_values());
    merge(train.to_key_values());
    merge(post.to_key_values());
    out["model.mode"] = to_string(model.mode);
    out["model.blocks"] = blocks;
    out["model.pool_stride"] = pool_strides;
    out["model.n_maps"] = std::to_string(model.n_maps);
    out["model.filter_width"] = std::to_string(model.filter_width);
    out["model.seed"] = std::to_string(model.seed);
    out["run.data"] = data;
    out["run.model"] = model_path;
    out["run.record"] = record;
    out["run.start"] = kv::number(start);
    out["run.channel"] = channel;
    out["run.repeats"] = std::to_string(repeats);
    out["run.strong_fraction"] = kv::number(strong_fraction);
    return out;
  }

  static std::set<std::string> known_keys() {
    std::set<std::string> keys;
    for (const auto& [k, v] : RunConfig{}.to_key_values()) keys.insert(k);
    return keys;
  }

  /// Defaults, then `kvs`. Train defaults follow the model mode.
  static RunConfig resolve(const KeyValues& kvs) {
    const auto keys = known_keys();
    for (const auto& [k, v] : kvs) {
      if (!keys.count(k)) throw ConfigError("unknown configuration key '" + k + "'");
    }
    RunConfig c;
    auto get = [&](const char* k) -> const std::string* {
      auto it = kvs.find(k);
      return it == kvs.end() ? nullptr : &it->second;
    };
    if (auto* v = get("model.mode")) c.model.mode = parse_mode(*v);
    c.train = TrainConfig::defaults_for(c.model.mode);
    c.synth.update(kvs);
    c.pre.update(kvs);
    c.train.update(kvs);
    c.post.update(kvs);
    if (auto* v = get("model.blocks")) c.blocks = *v;
    if (auto* v = get("model.pool_stride")) c.pool_strides = *v;
    if (auto* v = get("model.n_maps")) c.model.n_maps = kv::to_u64("model.n_maps", *v);
    if (auto* v = get("model.filter_width")) c.model.filter_width = kv::to_u64("model.filter_width", *v);
    if (auto* v = get("model.seed")) c.model.seed = kv::to_u64("model.seed", *v);
    if (auto* v = get("run.data")) c.data = *v;
    if (auto* v = get("run.model")) c.model_path = *v;
    if (auto* v = get("run.record")) c.record = *v;
    if (auto* v = get("run.start")) c.start = kv::to_double("run.start", *v);
    if (auto* v = get("run.channel")) {
      c.channel = *v;
      if (!v->empty()) (void)kv::to_u64("run.channel", *v);
    }
    if (auto* v = get("run.repeats")) c.repeats = kv::to_u64("run.repeats", *v);
    if (auto* v = get("run.strong_fraction")) {
      c.strong_fraction = kv::to_double("run.strong_fraction", *v);
    }
    c.model.n_blocks = parse_range("model.blocks", c.blocks).front();
    c.model.pool_stride = parse_range("model.pool_stride", c.pool_strides).front();
    c.model.input_len = c.pre.window_samples();
    c.synth.validate();
    c.pre.validate();
    c.train.validate();
    if (c.repeats == 0) throw ConfigError("run.repeats must be positive");
    if (!(c.strong_fraction >= 0.0 && c.strong_fraction <= 1.0)) {
      throw ConfigError("run.strong_fraction must be in [0,1]");
    }
    return c;
  }

  /// Model configuration for a grid point.
  FcnConfig model_for(std::size_t n_blocks, std::size_t stride, std::size_t channels) const {
    FcnConfig f = model;
    f.n_blocks = n_blocks;
    f.pool_stride = stride;
    f.n_input_channels = model.mode == FcnMode::Fcn2d ? channels : 1;
    f.validate();
    return f;
  }
};

/// Records `<stem>.neeg` with annotations `<stem>.csv`, in file-name order.
inline std::vector<Subject> load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("no dataset folder '" + dir.string() + "'");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".neeg") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .neeg records in '" + dir.string() + "'");
  std::vector<Subject> out;
  for (const auto& f : files) {
    Subject s;
    s.record = load_record(f);
    auto ann = f;
    ann.replace_extension(".csv");
    if (!std::filesystem::exists(ann)) {
      throw DataError("missing annotations '" + ann.string() + "' for '" + f.string() + "'");
    }
    s.annotations = load_annotations(ann, s.record.n_channels(), s.record.duration());
    out.push_back(std::move(s));
  }
  return out;
}

inline void write_dataset(const std::vector<Subject>& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& s : data) {
    write_record(s.record, dir / (s.record.subject_id + ".neeg"));
    write_annotations(s.annotations, dir / (s.record.subject_id + ".csv"));
  }
}

namespace cli_detail {

class Io {
 public:
  Io(std::ostream& out, std::ostream& err, bool to_stdout)
      : out_(out), err_(err), to_stdout_(to_stdout) {}

  void log(const std::string& m) {
    std::lock_guard lock(mu_);
    err_ << m << "\n";
  }
  /// Human-readable line: stdout normally, stderr when stdout carries CSV.
  void say(const std::string& m) {
    std::lock_guard lock(mu_);
    (to_stdout_ ? err_ : out_) << m << "\n";
  }
  void csv(const std::string& text) {
    if (!to_stdout_) return;
    std::lock_guard lock(mu_);
    out_ << text;
  }
  bool to_stdout() const { return to_stdout_; }

 private:
  std::ostream& out_;
  std::ostream& err_;
  bool to_stdout_;
  std::mutex mu_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + p.string() + "' for writing");
  os << text;
  if (!os) throw std::runtime_error("write failed for '" + p.string() + "'");
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline std::vector<Subject> dataset_for(const RunConfig& c) {
  return c.data.empty() ? synth_dataset(c.synth) : load_dataset(c.data);
}

inline std::string fixed(double v, int digits = 4) {
  if (std::isnan(v)) return "nan";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::vector<AnnotationSet> training_annotations(const RunConfig& c,
                                                       const std::vector<Subject>& data) {
  std::vector<AnnotationSet> ann;
  for (const auto& s : data) ann.push_back(s.annotations);
  if (c.strong_fraction < 1.0) ann = restrict_strong(ann, c.strong_fraction, derive_seed(c.train.seed, 77));
  return ann;
}

inline Series roc_series(const RocCurve& c, const std::string& label) {
  Series s{label, {}, {}};
  for (std::size_t i = 0; i < c.thresholds.size(); ++i) {
    s.x.push_back(1.0 - c.specificity[i]);
    s.y.push_back(c.sensitivity[i]);
  }
  return s;
}

inline std::size_t single(const std::string& key, const std::string& text) {
  const auto v = parse_range(key, text);
  if (v.size() != 1) throw ConfigError("key '" + key + "': expected one value, got '" + text + "'");
  return v[0];
}

// ---- subcommands --------------------------------------------------------

inline void cmd_synth(const RunConfig& c, const std::filesystem::path& out, Io& io) {
  const auto data = synth_dataset(c.synth);
  write_dataset(data, out);
  std::string csv = "subject,n_channels,n_samples,sample_rate,n_events\n";
  for (const auto& s : data) {
    csv += s.record.subject_id + "," + std::to_string(s.record.n_channels()) + "," +
           std::to_string(s.record.n_samples()) + "," + kv::number(s.record.sample_rate) + "," +
           std::to_string(s.annotations.weak_events().size()) + "\n";
  }
  write_file(out / "subjects.csv", csv);
  io.csv(csv);
  io.say("wrote " + std::to_string(data.size()) + " subjects to " + out.string());
}

inline void cmd_preprocess(const RunConfig& c, const std::filesystem::path& out, Io& io) {
  auto data = dataset_for(c);
  std::string csv = "subject,sample_rate,n_samples\n";
  for (auto& s : data) {
    s.record = preprocess(s.record, c.pre);
    csv += s.record.subject_id + "," + kv::number(s.record.sample_rate) + "," +
           std::to_string(s.record.n_samples()) + "\n";
  }
  write_dataset(data, out);
  io.csv(csv);
  io.say("preprocessed " + std::to_string(data.size()) + " records into " + out.string());
}

inline void cmd_train(const RunConfig& c, const std::filesystem::path& out, Io& io) {
  const auto data = dataset_for(c);
  if (data.size() < 2) throw TrainingError("training needs at least 2 subjects");
  std::vector<EegRecord> recs;
  for (const auto& s : data) recs.push_back(s.record);
  const auto ann = training_annotations(c, data);
  const auto pool = prepare_records(recs, c.pre);
  const auto fcn = c.model_for(single("model.blocks", c.blocks),
                               single("model.pool_stride", c.pool_strides), recs[0].n_channels());
  SampleSet tr, va;
  if (c.model.mode == FcnMode::Fcn1d) {
    auto all = cap_per_class(make_samples_strong(pool, ann, c.pre), c.train.max_per_class,
                             derive_seed(c.train.seed, 11));
    std::tie(tr, va) = stratified_split(all, c.train.validation_fraction, derive_seed(c.train.seed, 12));
  } else {
    const auto all = make_samples_weak(pool, ann, c.pre);
    std::vector<std::size_t> order(recs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(c.train.seed, 100));
    rng.shuffle(std::span(order));
    const std::size_t n_val = std::min(c.train.n_validation_subjects, recs.size() - 1);
    const std::set<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> ti, vi;
    for (std::size_t i = 0; i < all.size(); ++i) (val.count(all.refs[i].record) ? vi : ti).push_back(i);
    tr = cap_per_class(all.subset(ti), c.train.max_per_class, derive_seed(c.train.seed, 1));
    va = cap_per_class(all.subset(vi), c.train.max_per_class, derive_seed(c.train.seed, 2));
  }
  FcnModel<float> model(fcn);
  const auto res = train_model(model, tr, va, c.train, [&](const std::string& m) { io.log(m); });
  model.save(out / "model.nsmd");
  std::string csv = "epoch,train_loss,val_auc\n";
  for (const auto& h : res.history) {
    csv += std::to_string(h.epoch) + "," + fixed(h.train_loss, 6) + "," + fixed(h.val_auc) + "\n";
  }
  write_file(out / "history.csv", csv);
  io.csv(csv);
  io.say("best epoch " + std::to_string(res.best_epoch) + ", validation AUC " +
         fixed(res.best_val_auc, 2) + "; model saved to " + (out / "model.nsmd").string());
}

inline void cmd_eval(const RunConfig& c, const std::filesystem::path& out, Io& io) {
  using clock = std::chrono::steady_clock;
  if (c.model_path.empty()) throw ConfigError("eval needs --model");
  auto model = FcnModel<float>::load(c.model_path);
  const auto data = dataset_for(c);
  std::filesystem::create_directories(out / "traces");
  std::filesystem::create_directories(out / "roc");
  double t_pre = 0, t_inf = 0, t_post = 0, hours = 0;
  std::vector<SubjectScores> scores;
  for (const auto& s : data) {
    auto t0 = clock::now();
    const auto rec = s.record.sample_rate == c.pre.target_rate ? s.record : preprocess(s.record, c.pre);
    auto t1 = clock::now();
    const auto rows = predict_record(model, rec, c.pre);
    auto t2 = clock::now();
    const auto e = score_epochs(rows, rec, s.annotations, c.pre, c.post);
    auto t3 = clock::now();
    t_pre += std::chrono::duration<double>(t1 - t0).count();
    t_inf += std::chrono::duration<double>(t2 - t1).count();
    t_post += std::chrono::duration<double>(t3 - t2).count();
    hours += s.record.duration() / 3600.0;
    write_trace_csv(e.scores, c.pre.window_shift, out / "traces" / (s.record.subject_id + ".csv"));
    scores.push_back({s.record.subject_id, e.scores, e.labels});
    const bool both = std::count(e.labels.begin(), e.labels.end(), 1) > 0 &&
                      std::count(e.labels.begin(), e.labels.end(), 0) > 0;
    if (both) write_roc_csv(roc_curve(e.scores, e.labels), out / "roc" / (s.record.subject_id + ".csv"));
  }
  const auto mean = aggregate(scores, AggregateMode::MeanPerSubject);
  const auto cat = aggregate(scores, AggregateMode::Concatenated);
  std::vector<double> all_s;
  std::vector<std::uint8_t> all_l;
  for (const auto& s : scores) {
    all_s.insert(all_s.end(), s.scores.begin(), s.scores.end());
    all_l.insert(all_l.end(), s.labels.begin(), s.labels.end());
  }
  const auto roc = roc_curve(all_s, all_l);
  write_roc_csv(roc, out / "roc_concatenated.csv");
  write_file(out / "roc.svg", render_svg({roc_series(roc, "concatenated")}, PlotKind::Roc, "ROC"));
  const std::string summary = format_summary_csv(mean);
  write_file(out / "summary.csv", summary);
  write_file(out / "concatenated.csv", format_summary_csv(cat));
  io.csv(summary);
  io.say("AUC " + fixed(mean.mean_auc, 2) + " (std " + fixed(mean.std_auc, 2) + "), AUC90 " +
         fixed(mean.mean_auc90, 2) + "; concatenated AUC " + fixed(cat.mean_auc, 2));
  const double total = t_pre + t_inf + t_post;
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "benchmark: %.2f s per hour of EEG (preprocess %.2f, inference %.2f, "
                "post-process %.2f) over %.2f h",
                total / hours, t_pre / hours, t_inf / hours, t_post / hours, hours);
  io.say(buf);
  write_file(out / "benchmark.txt", std::string(buf) + "\n");
}

struct LooOutcome {
  std::vector<FoldResult> folds;
  Summary mean, concatenated;
};

inline LooOutcome run_loo(const RunConfig& c, const std::vector<Subject>& data, const FcnConfig& fcn,
                          const TrainConfig& train, const std::optional<std::filesystem::path>& models,
                          Io& io) {
  LooOptions opt;
  opt.pre = c.pre;
  opt.post = c.post;
  if (c.strong_fraction < 1.0) opt.train_annotations = training_annotations(c, data);
  opt.model_dir = models;
  opt.progress = [&](const std::string& m) { io.log(m); };
  LooOutcome o;
  o.folds = loo_harness(data, fcn, train, opt);
  const auto scores = fold_scores(o.folds);
  o.mean = aggregate(scores, AggregateMode::MeanPerSubject);
  o.concatenated = aggregate(scores, AggregateMode::Concatenated);
  return o;
}

inline void cmd_loo(const RunConfig& c, const std::filesystem::path& out, Io& io) {
  const auto data = dataset_for(c);
  const auto fcn = c.model_for(single("model.blocks", c.blocks),
                               single("model.pool_stride", c.pool_strides),
                               data.at(0).record.n_channels());
  const auto o = run_loo(c, data, fcn, c.train, out / "models", io);
  const std::string folds = format_fold_csv(o.folds);
  write_file(out / "folds.csv", folds);
  write_file(out / "summary.csv", format_summary_csv(o.mean));
  write_file(out / "concatenated.csv", format_summary_csv(o.concatenated));
  std::filesystem::create_directories(out / "traces");
  std::vector<double> all_s;
  std::vector<std::uint8_t> all_l;
  for (const auto& f : o.folds) {
    write_trace_csv(f.test.scores, c.pre.window_shift, out / "traces" / (f.subject + ".csv"));
    all_s.insert(all_s.end(), f.test.scores.begin(), f.test.scores.end());
    all_l.insert(all_l.end(), f.test.labels.begin(), f.test.labels.end());
  }
  const auto roc = roc_curve(all_s, all_l);
  write_roc_csv(roc, out / "roc_concatenated.csv");
  write_file(out / "roc.svg", render_svg({roc_series(roc, "concatenated")}, PlotKind::Roc,
                                         "Leave-one-out ROC"));
  io.csv(folds);
  io.say("LOO AUC " + fixed(o.mean.mean_auc, 2) + " (std " + fixed(o.mean.std_auc, 2) +
         "), AUC90 " + fixed(o.mean.mean_auc90, 2) + "; concatenated AUC " +
         fixed(o.concatenated.mean_auc, 2));
}

inline void cmd_sweep(const RunConfig& c, const std::filesystem::path& out, Io& io) {
  const auto data = dataset_for(c);
  const auto blocks = parse_range("model.blocks", c.blocks);
  const auto strides = parse_range("model.pool_stride", c.pool_strides);
  const std::size_t channels = data.at(0).record.n_channels();
  std::string csv = "n_blocks,pool_stride,receptive_field,params,mean_auc,std_auc\n";
  std::vector<Series> lines;
  for (std::size_t s : strides) lines.push_back({"pool stride " + std::to_string(s), {}, {}});
  std::string runs = "n_blocks,pool_stride,repeat,mean_auc,mean_auc90,concatenated_auc\n";
  for (std::size_t b : blocks) {
    for (std::size_t si = 0; si < strides.size(); ++si) {
      const std::size_t s = strides[si];
      std::vector<double> aucs;
      for (std::size_t r = 0; r < c.repeats; ++r) {
        FcnConfig fcn = c.model_for(b, s, channels);
        fcn.seed = derive_seed(c.model.seed, r);
        TrainConfig t = c.train;
        t.seed = derive_seed(c.train.seed, r);
        io.log("sweep: blocks " + std::to_string(b) + ", stride " + std::to_string(s) +
               ", repeat " + std::to_string(r + 1) + "/" + std::to_string(c.repeats));
        const auto o = run_loo(c, data, fcn, t, std::nullopt, io);
        aucs.push_back(o.mean.mean_auc);
        runs += std::to_string(b) + "," + std::to_string(s) + "," + std::to_string(r) + "," +
                fixed(o.mean.mean_auc) + "," + fixed(o.mean.mean_auc90) + "," +
                fixed(o.concatenated.mean_auc) + "\n";
      }
      const auto [m, sd] = metrics_detail::mean_std(aucs);
      const FcnConfig shape = c.model_for(b, s, channels);
      csv += std::to_string(b) + "," + std::to_string(s) + "," +
             std::to_string(receptive_field(shape)) + "," + std::to_string(count_params(shape)) +
             "," + fixed(m) + "," + fixed(sd) + "\n";
      lines[si].x.push_back(static_cast<double>(b));
      lines[si].y.push_back(m);
    }
  }
  write_file(out / "sweep.csv", csv);
  write_file(out / "sweep_runs.csv", runs);
  write_file(out / "sweep.svg", render_svg(lines, PlotKind::Sweep, "Architecture sweep"));
  io.csv(csv);
  if (!io.to_stdout()) io.say(csv);
}

inline void cmd_rf(const RunConfig& c, Io& io) {
  std::string csv = "n_blocks,pool_stride,receptive_field,params\n";
  for (std::size_t b : parse_range("model.blocks", c.blocks)) {
    for (std::size_t s : parse_range("model.pool_stride", c.pool_strides)) {
      const auto f = c.model_for(b, s, c.model.mode == FcnMode::Fcn2d ? c.synth.n_channels : 1);
      csv += std::to_string(b) + "," + std::to_string(s) + "," + std::to_string(receptive_field(f)) +
             "," + std::to_string(count_params(f)) + "\n";
      io.say("n_blocks " + std::to_string(b) + ", pool_stride " + std::to_string(s) +
             ": receptive field " + std::to_string(receptive_field(f)) + " samples, " +
             std::to_string(count_params(f)) + " parameters");
    }
  }
  io.csv(csv);
}

inline void cmd_heatmap(const RunConfig& c, const std::filesystem::path& out, Io& io) {
  if (c.model_path.empty()) throw ConfigError("heatmap needs --model");
  auto model = FcnModel<float>::load(c.model_path);
  EegRecord rec = c.record.empty() ? synth_dataset(c.synth).at(0).record : load_record(c.record);
  if (rec.sample_rate != c.pre.target_rate) rec = preprocess(rec, c.pre);
  const std::size_t L = c.pre.window_samples();
  const auto first = static_cast<std::size_t>(std::llround(c.start * rec.sample_rate));
  if (first + L > rec.n_samples()) {
    throw ConfigError("heatmap window [" + kv::number(c.start) + ", " +
                      kv::number(c.start + c.pre.window_len) + ") s lies outside the record");
  }
  const std::size_t C = rec.n_channels();
  auto window_of = [&](std::size_t c0, std::size_t n) {
    Tensor<float> w(Shape{n, L});
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t i = 0; i < L; ++i) w.at(k, i) = static_cast<float>(rec.samples.at(c0 + k, first + i));
    }
    return w;
  };
  std::vector<std::vector<double>> rows(C, std::vector<double>(L));
  if (model.config().mode == FcnMode::Fcn2d) {
    const auto h = model.seizure_heatmap(window_of(0, C));
    for (std::size_t k = 0; k < C; ++k) {
      for (std::size_t i = 0; i < L; ++i) rows[k][i] = h.at(k, i);
    }
  } else {
    for (std::size_t k = 0; k < C; ++k) {
      const auto h = model.seizure_heatmap(window_of(k, 1));
      for (std::size_t i = 0; i < L; ++i) rows[k][i] = h.at(0, i);
    }
  }
  std::vector<double> line;
  if (c.channel.empty()) {
    line = fuse_channels_max(rows);
  } else {
    line = rows.at(kv::to_u64("run.channel", c.channel));
  }
  std::string csv = "time_s,seizureness\n";
  std::vector<Series> series;
  for (std::size_t k = 0; k < C; ++k) series.push_back({rec.channel_names[k], {}, rows[k]});
  for (std::size_t i = 0; i < L; ++i) {
    const double t = c.start + static_cast<double>(i) / rec.sample_rate;
    csv += kv::number(t) + "," + kv::number(line[i]) + "\n";
    for (auto& s : series) s.x.push_back(t);
  }
  write_file(out / "heatmap.csv", csv);
  write_file(out / "heatmap.svg", render_svg(series, PlotKind::Heatmap, "Seizure heatmap"));
  io.csv(csv);
  io.say("heatmap of " + std::to_string(C) + " channels written to " + out.string());
}

}  // namespace cli_detail

/// Entry point; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Neonatal seizure detection with fully convolutional networks", "neoseize"};
  app.require_subcommand(1);
  std::string config_path, out_dir, mode, blocks, strides, data, model_path, record, channel;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<double> start;
  std::optional<std::size_t> repeats;
  bool to_stdout = false;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth", "Generate a synthetic dataset (NEEG records + annotation CSVs)"},
      {"preprocess", "Band-pass and decimate records to the network rate"},
      {"train", "Train one model on a dataset and save it"},
      {"eval", "Score a model on a dataset: traces, ROC, AUC/AUC90, timing"},
      {"loo", "Leave-one-subject-out evaluation"},
      {"sweep", "Grid over n_blocks x pool_stride with repeated LOO runs"},
      {"rf", "Print receptive field and parameter count"},
      {"heatmap", "Per-sample seizure heatmap of one window (CSV + SVG)"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "key=value configuration file");
    sub->add_option("--set", sets, "Override one key (key=value); repeatable");
    sub->add_option("--seed", seed, "Seed for data synthesis, initialisation and training");
    sub->add_option("--out", out_dir, "Output folder");
    sub->add_option("--mode", mode, "fcn1d or fcn2d");
    sub->add_option("--blocks", blocks, "n_blocks (a range such as 1..5 for sweep and rf)");
    sub->add_option("--pool-stride", strides, "pool stride (a range for sweep and rf)");
    sub->add_option("--data", data, "Dataset folder (default: synthesise in memory)");
    sub->add_option("--model", model_path, "Model file");
    sub->add_option("--record", record, "Record file (heatmap)");
    sub->add_option("--start", start, "Heatmap window start in seconds");
    sub->add_option("--channel", channel, "Heatmap channel (default: max over channels)");
    sub->add_option("--repeats", repeats, "Sweep repeats per grid point");
    sub->add_flag("--stdout", to_stdout, "Write the main CSV to standard output");
    for (auto* opt : sub->get_options()) {
      if (opt->get_name() != "--set") opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  const std::string command = app.get_subcommands().front()->get_name();
  cli_detail::Io io(out, err, to_stdout);
  try {
    KeyValues kvs;
    if (!config_path.empty()) kvs = kv::parse(cli_detail::read_file(config_path), config_path);
    for (const auto& s : sets) {
      const auto one = kv::parse(s, "--set");
      if (one.size() != 1) throw ConfigError("--set expects key=value, got '" + s + "'");
      kvs[one.begin()->first] = one.begin()->second;
    }
    if (seed) {
      for (const char* k : {"synth.seed", "train.seed", "model.seed"}) kvs[k] = std::to_string(*seed);
    }
    auto flag = [&](const std::string& v, const char* key) {
      if (!v.empty()) kvs[key] = v;
    };
    flag(mode, "model.mode");
    flag(blocks, "model.blocks");
    flag(strides, "model.pool_stride");
    flag(data, "run.data");
    flag(model_path, "run.model");
    flag(record, "run.record");
    flag(channel, "run.channel");
    if (start) kvs["run.start"] = kv::number(*start);
    if (repeats) kvs["run.repeats"] = std::to_string(*repeats);
    const RunConfig cfg = RunConfig::resolve(kvs);

    if (command == "rf") {
      cli_detail::cmd_rf(cfg, io);
      return 0;
    }
    if (out_dir.empty()) throw ConfigError(command + " needs --out");
    const std::filesystem::path outp(out_dir);
    std::filesystem::create_directories(outp);
    cli_detail::write_file(outp / "run_config.txt",
                           "# neoseize " + command + "\n" + kv::format(cfg.to_key_values()));
    if (command == "synth") cli_detail::cmd_synth(cfg, outp, io);
    else if (command == "preprocess") cli_detail::cmd_preprocess(cfg, outp, io);
    else if (command == "train") cli_detail::cmd_train(cfg, outp, io);
    else if (command == "eval") cli_detail::cmd_eval(cfg, outp, io);
    else if (command == "loo") cli_detail::cmd_loo(cfg, outp, io);
    else if (command == "sweep") cli_detail::cmd_sweep(cfg, outp, io);
    else if (command == "heatmap") cli_detail::cmd_heatmap(cfg, outp, io);
    return 0;
  } catch (const std::exception& e) {
    err << "neoseize " << command << ": error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace neoseize
