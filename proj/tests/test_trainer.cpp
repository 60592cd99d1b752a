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

#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "neoseize/trainer.hpp"

using namespace neoseize;

namespace {

PreprocessConfig pre32() { return PreprocessConfig{}; }

EegRecord flat_record(const std::string& id, std::size_t channels, double seconds,
                      double rate = 32.0) {
  EegRecord r;
  r.subject_id = id;
  r.sample_rate = rate;
  r.channel_names = default_channel_names(channels);
  r.samples = Tensor<double>(Shape{channels, static_cast<std::size_t>(seconds * rate)});
  return r;
}

SeizureEvent weak(double on, double off) { return {on, off, std::nullopt}; }
SeizureEvent strong(double on, double off, std::size_t ch) { return {on, off, ch}; }

AnnotationSet annotations(const std::string& id, std::vector<SeizureEvent> ev) {
  AnnotationSet a{id, std::move(ev), Completeness::WeakOnly};
  a.normalize();
  return a;
}

RecordPool pool_of(std::vector<EegRecord> recs) {
  return std::make_shared<const std::vector<EegRecord>>(std::move(recs));
}

std::size_t count_if_label(const SampleSet& s, int label, std::optional<std::size_t> ch) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.labels[i] == label && (!ch || s.channel(i) == ch)) ++n;
  }
  return n;
}

// Windows of `len` seconds stepped by one second that fit inside [a, b).
std::size_t windows_inside(double a, double b, double len) {
  return b - a < len ? 0 : static_cast<std::size_t>(std::floor(b - a - len)) + 1;
}

}  // namespace

TEST(TrainConfig, DefaultsPerMode) {
  const auto a = TrainConfig::defaults_for(FcnMode::Fcn1d);
  EXPECT_EQ(a.batch_size, 4096u);
  EXPECT_EQ(a.patience, 25u);
  EXPECT_DOUBLE_EQ(a.learning_rate, 0.001);
  EXPECT_DOUBLE_EQ(a.momentum, 0.9);
  const auto b = TrainConfig::defaults_for(FcnMode::Fcn2d);
  EXPECT_EQ(b.batch_size, 300u);
  EXPECT_EQ(b.patience, 8u);
  EXPECT_EQ(b.n_splits, 3u);
  EXPECT_EQ(b.n_validation_subjects, 3u);
}

TEST(TrainConfig, KeyValueRoundTripAndValidation) {
  TrainConfig c;
  c.batch_size = 17;
  c.class_weighting = ClassWeighting::None;
  c.seed = 99;
  TrainConfig d;
  d.update(c.to_key_values());
  EXPECT_EQ(d.to_key_values(), c.to_key_values());
  c.patience = c.max_epochs;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(d.update({{"train.class_weighting", "sometimes"}}), ConfigError);
  EXPECT_THROW(d.update({{"train.batch_size", "many"}}), ConfigError);
}

TEST(Samples, StrongEventYieldsThirteenWindowsOnItsChannel) {
  auto pool = pool_of({flat_record("a", 4, 100)});
  std::vector<AnnotationSet> ann = {annotations("a", {weak(10, 30), strong(10, 30, 2)})};
  const auto s = make_samples_strong(pool, ann, pre32());
  EXPECT_EQ(count_if_label(s, 1, std::nullopt), 13u);
  EXPECT_EQ(count_if_label(s, 1, 2), 13u);
  // background: windows ending by 10 s or starting at 30 s or later, on every channel
  const std::size_t per_channel = windows_inside(0, 10, 8) + windows_inside(30, 100, 8);
  EXPECT_EQ(count_if_label(s, 0, std::nullopt), 4 * per_channel);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_LE(s.refs[i].start + s.window_samples, s.record_of(i).n_samples());
  }
}

TEST(Samples, WeakOnlyOverlapExcludedFromBothClasses) {
  auto pool = pool_of({flat_record("a", 2, 60)});
  std::vector<AnnotationSet> ann = {
      annotations("a", {weak(5, 20), strong(5, 20, 0), weak(35, 50)})};
  const auto s = make_samples_strong(pool, ann, pre32());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double t0 = s.start_time(i), t1 = t0 + 8;
    const bool touches_second = t1 > 35 && t0 < 50;
    EXPECT_FALSE(touches_second) << "window at " << t0;
  }
  EXPECT_EQ(count_if_label(s, 1, 0), windows_inside(5, 20, 8));
  EXPECT_EQ(count_if_label(s, 1, 1), 0u);
}

TEST(Samples, StrongRequiresStrongEvents) {
  auto pool = pool_of({flat_record("a", 2, 60)});
  std::vector<AnnotationSet> ann = {annotations("a", {weak(5, 20)})};
  EXPECT_THROW(make_samples_strong(pool, ann, pre32()), TrainingError);
}

TEST(Samples, WeakEventYieldsThirteenMultichannelWindows) {
  auto pool = pool_of({flat_record("a", 8, 100)});
  std::vector<AnnotationSet> ann = {annotations("a", {weak(10, 30)})};
  const auto s = make_samples_weak(pool, ann, pre32());
  EXPECT_EQ(s.channels_per_sample, 8u);
  EXPECT_EQ(s.count(1), 13u);
  EXPECT_EQ(s.count(0), windows_inside(0, 10, 8) + windows_inside(30, 100, 8));
  const std::size_t one[] = {0};
  EXPECT_EQ(s.batch<float>(one).shape(), (Shape{1, 8, 256}));
}

TEST(Samples, NoEventsGivesBackgroundOnly) {
  auto pool = pool_of({flat_record("a", 3, 40)});
  std::vector<AnnotationSet> ann = {annotations("a", {})};
  const auto s = make_samples_weak(pool, ann, pre32());
  EXPECT_EQ(s.count(1), 0u);
  EXPECT_EQ(s.count(0), windows_inside(0, 40, 8));
}

TEST(Samples, BatchCopiesTheReferencedSamples) {
  EegRecord r = flat_record("a", 3, 20);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < r.n_samples(); ++i) r.samples.at(c, i) = 1000.0 * c + i;
  }
  auto pool = pool_of({r});
  std::vector<AnnotationSet> ann = {annotations("a", {weak(12, 20), strong(12, 20, 1)})};
  const auto s = make_samples_strong(pool, ann, pre32());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto x = s.input<double>(i);
    const std::size_t ch = *s.channel(i);
    for (std::size_t k = 0; k < 256; k += 37) {
      EXPECT_EQ(x.at(0, k), r.samples.at(ch, s.refs[i].start + k));
    }
  }
}

// Closed-form count against a brute-force oracle built from rasterized masks.
TEST(Samples, StrongCountsMatchRasterOracle) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const std::size_t channels = 1 + rng.below(4);
    const double duration = 120 + static_cast<double>(rng.below(120));
    std::vector<SeizureEvent> ev;
    double t = static_cast<double>(rng.below(20));
    while (true) {
      const double d = 5 + static_cast<double>(rng.below(30));
      if (t + d > duration) break;
      ev.push_back(weak(t, t + d));
      for (std::size_t c = 0; c < channels; ++c) {
        if (rng.uniform() < 0.5) ev.push_back(strong(t, t + d, c));
      }
      t += d + static_cast<double>(rng.below(40));
    }
    auto pool = pool_of({flat_record("a", channels, duration)});
    const std::vector<AnnotationSet> ann = {annotations("a", ev)};
    if (ann[0].strong_events().empty()) continue;
    const auto s = make_samples_strong(pool, ann, pre32());

    std::size_t seizure = 0;
    for (const auto& e : ann[0].strong_events()) seizure += windows_inside(e.onset, e.offset, 8);
    const auto n_epochs = static_cast<std::size_t>(duration);
    const auto mask = rasterize(ann[0], 1.0, n_epochs, channels);
    std::size_t background = 0;
    for (std::size_t t0 = 0; t0 + 8 <= n_epochs; ++t0) {
      bool clear = true;
      for (std::size_t k = t0; k < t0 + 8; ++k) clear = clear && mask.weak[k] == 0;
      if (clear) background += channels;
    }
    EXPECT_EQ(s.count(1), seizure) << "seed " << seed;
    EXPECT_EQ(s.count(0), background) << "seed " << seed;
  }
}

TEST(Samples, WeakCountCoversSparseStrongCount) {
  SynthConfig c;
  c.n_subjects = 3;
  c.record_duration = 600;
  c.seizure_rate = 30;
  c.spread_min = c.spread_max = 1;
  c.sample_rate = 32;
  const auto data = synth_dataset(c);
  std::vector<EegRecord> recs;
  std::vector<AnnotationSet> ann;
  for (const auto& s : data) {
    recs.push_back(s.record);
    ann.push_back(s.annotations);
  }
  const auto sparse = restrict_strong(ann, 0.15, 3);
  auto pool = prepare_records(recs, pre32());
  const auto st = make_samples_strong(pool, sparse, pre32());
  const auto wk = make_samples_weak(pool, sparse, pre32());
  EXPECT_GE(wk.count(1), st.count(1));
}

TEST(Samples, CapAndStratifiedSplit) {
  auto pool = pool_of({flat_record("a", 4, 300), flat_record("b", 4, 300)});
  std::vector<AnnotationSet> ann = {
      annotations("a", {weak(10, 60), strong(10, 60, 1)}),
      annotations("b", {weak(100, 130), strong(100, 130, 3), strong(100, 130, 0)})};
  const auto all = make_samples_strong(pool, ann, pre32());
  const auto capped = cap_per_class(all, 50, 7);
  EXPECT_EQ(capped.count(0), 50u);
  EXPECT_EQ(capped.count(1), 50u);
  EXPECT_EQ(cap_per_class(all, 50, 7).refs.size(), capped.refs.size());
  EXPECT_EQ(cap_per_class(all, 0, 7).size(), all.size());

  const auto [tr, va] = stratified_split(all, 0.2, 5);
  EXPECT_EQ(tr.size() + va.size(), all.size());
  std::set<std::tuple<std::uint32_t, std::int32_t, std::uint32_t>> seen;
  for (const auto* s : {&tr, &va}) {
    for (const auto& r : s->refs) EXPECT_TRUE(seen.insert({r.record, r.channel, r.start}).second);
  }
  // each (subject, class) group contributes round(0.2 n) validation samples
  for (std::uint32_t rec = 0; rec < 2; ++rec) {
    for (int label : {0, 1}) {
      std::size_t n = 0, v = 0;
      for (std::size_t i = 0; i < all.size(); ++i) n += all.refs[i].record == rec && all.labels[i] == label;
      for (std::size_t i = 0; i < va.size(); ++i) v += va.refs[i].record == rec && va.labels[i] == label;
      EXPECT_EQ(v, static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n))));
    }
  }
}

TEST(ClassWeights, BalancedGivesUnitWeights) {
  SampleSet s;
  s.labels = {0, 1, 1, 0};
  s.refs.resize(4);
  const auto w = inverse_frequency_weights(s);
  EXPECT_DOUBLE_EQ(w[0], 1.0);
  EXPECT_DOUBLE_EQ(w[1], 1.0);
  s.labels = {0, 0, 0, 1};
  const auto u = inverse_frequency_weights(s);
  EXPECT_DOUBLE_EQ(u[0], 4.0 / 6.0);
  EXPECT_DOUBLE_EQ(u[1], 2.0);
  s.labels = {0, 0, 0, 0};
  EXPECT_THROW(inverse_frequency_weights(s), TrainingError);
}

TEST(ClassWeights, BalancedWeightedLossEqualsUnweighted) {
  Graph<double> g;
  Tensor<double> p(Shape{4, 2}, {0.3, 0.7, 0.6, 0.4, 0.2, 0.8, 0.9, 0.1});
  const int t[] = {1, 0, 0, 1};
  const double w[] = {1.0, 1.0};
  const auto a = cross_entropy(g.input(p), std::span<const int>(t), std::span<const double>(w));
  const auto b = cross_entropy(g.input(p), std::span<const int>(t));
  EXPECT_EQ(a.value()[0], b.value()[0]);
}

TEST(EarlyStopping, StopsAfterPatienceAndKeepsEarliestBest) {
  EarlyStopping es(3);
  const double seq[] = {0.7, 0.8, 0.8, 0.8, 0.8, 0.9};
  std::size_t stopped = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    if (es.update(seq[i])) {
      stopped = i + 1;
      break;
    }
  }
  EXPECT_EQ(stopped, 5u);
  EXPECT_EQ(es.best_epoch(), 2u);
  EXPECT_DOUBLE_EQ(es.best(), 0.8);
}

TEST(EarlyStopping, BestIsNeverBelowAnEarlierEpoch) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    EarlyStopping es(1 + rng.below(6));
    std::vector<double> seen;
    while (true) {
      const double v = std::round(rng.uniform() * 10) / 10;
      seen.push_back(v);
      const bool stop = es.update(v);
      EXPECT_EQ(es.best(), *std::max_element(seen.begin(), seen.end()));
      EXPECT_EQ(seen[es.best_epoch() - 1], es.best());
      for (std::size_t i = 0; i + 1 < es.best_epoch(); ++i) EXPECT_LT(seen[i], es.best());
      if (stop || seen.size() > 100) break;
    }
  }
}

namespace {

// Class 1 windows carry a 4 Hz sinusoid, class 0 windows only noise.
struct Toy {
  SampleSet train, val;
};

Toy toy_problem(std::size_t per_class, std::uint64_t seed, bool poison = false) {
  const std::size_t L = 256;
  EegRecord r = flat_record("toy", 1, static_cast<double>(2 * per_class * L) / 32.0);
  Rng rng(seed);
  std::vector<int> labels;
  for (std::size_t w = 0; w < 2 * per_class; ++w) {
    const int label = static_cast<int>(w % 2);
    const double phase = rng.uniform(0, 6.283);
    for (std::size_t i = 0; i < L; ++i) {
      double v = rng.normal();
      if (label) v += 2.0 * std::sin(2 * 3.14159265358979 * 4.0 * static_cast<double>(i) / 32.0 + phase);
      r.samples.at(0, w * L + i) = v;
    }
    labels.push_back(label);
  }
  if (poison) {
    for (std::size_t w = 0; w < 2 * per_class; ++w) {
      r.samples.at(0, w * L + 3) = std::numeric_limits<double>::quiet_NaN();
    }
  }
  SampleSet all;
  all.records = pool_of({r});
  all.window_samples = L;
  for (std::size_t w = 0; w < labels.size(); ++w) {
    all.refs.push_back({0, 0, static_cast<std::uint32_t>(w * L)});
    all.labels.push_back(labels[w]);
  }
  auto [tr, va] = stratified_split(all, 0.25, seed);
  return {tr, va};
}

FcnConfig toy_model() {
  FcnConfig c;
  c.n_blocks = 1;
  c.n_maps = 8;
  c.seed = 3;
  return c;
}

TrainConfig toy_train() {
  TrainConfig t;
  t.batch_size = 16;
  t.learning_rate = 0.01;
  t.max_epochs = 6;
  t.patience = 5;
  t.seed = 11;
  return t;
}

}  // namespace

TEST(TrainModel, SeparableToyLearns) {
  const auto toy = toy_problem(64, 21);
  FcnModel<float> m(toy_model());
  const auto res = train_model(m, toy.train, toy.val, toy_train());
  ASSERT_GE(res.history.size(), 3u);
  EXPECT_LT(res.history[1].train_loss, res.history[0].train_loss);
  EXPECT_LT(res.history[2].train_loss, res.history[1].train_loss);
  const auto p = predict_samples(m, toy.train);
  EXPECT_GT(auc(roc_curve(p, toy.train.labels)), 99.0);
  EXPECT_EQ(res.best_val_auc,
            std::max_element(res.history.begin(), res.history.end(), [](auto& a, auto& b) {
              return a.val_auc < b.val_auc;
            })->val_auc);
}

TEST(TrainModel, ReturnsBestSnapshotDeterministically) {
  const auto toy = toy_problem(32, 5);
  FcnModel<float> a(toy_model()), b(toy_model());
  const auto ra = train_model(a, toy.train, toy.val, toy_train());
  const auto rb = train_model(b, toy.train, toy.val, toy_train());
  EXPECT_EQ(ra.best_epoch, rb.best_epoch);
  const auto pa = predict_samples(a, toy.val), pb = predict_samples(b, toy.val);
  EXPECT_EQ(pa, pb);
  // the restored snapshot reproduces the recorded best validation AUC
  EXPECT_DOUBLE_EQ(auc(roc_curve(pa, toy.val.labels)), ra.best_val_auc);
}

TEST(TrainModel, RejectsSingleClassAndNonFiniteLoss) {
  auto toy = toy_problem(16, 2);
  FcnModel<float> m(toy_model());
  std::vector<std::size_t> zeros;
  for (std::size_t i = 0; i < toy.train.size(); ++i) {
    if (toy.train.labels[i] == 0) zeros.push_back(i);
  }
  EXPECT_THROW(train_model(m, toy.train.subset(zeros), toy.val, toy_train()), TrainingError);

  const auto bad = toy_problem(16, 2, true);
  FcnModel<float> n(toy_model());
  auto cfg = toy_train();
  cfg.batch_size = 1024;
  try {
    train_model(n, bad.train, bad.val, cfg);
    FAIL() << "expected a non-finite loss error";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1, batch 1"), std::string::npos) << e.what();
  }
}

TEST(Ensemble, AveragesMembers) {
  EXPECT_EQ(ensemble_average({{0.2}, {0.8}}), std::vector<double>{0.5});
  EXPECT_EQ(ensemble_average({{0.1, 0.7}}), (std::vector<double>{0.1, 0.7}));
  EXPECT_THROW(ensemble_average(std::vector<std::vector<double>>{}), std::invalid_argument);
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<double>> m(1 + rng.below(4), std::vector<double>(5));
    for (auto& v : m) {
      for (double& x : v) x = rng.uniform();
    }
    const auto e = ensemble_average(m);
    for (std::size_t i = 0; i < 5; ++i) {
      double lo = 1, hi = 0;
      for (const auto& v : m) {
        lo = std::min(lo, v[i]);
        hi = std::max(hi, v[i]);
      }
      EXPECT_GE(e[i], lo - 1e-15);
      EXPECT_LE(e[i], hi + 1e-15);
    }
  }
}

TEST(Ensemble, ModelsMatchOwnPredictionsAndRejectMismatch) {
  FcnConfig c = toy_model();
  std::vector<FcnModel<float>> one{FcnModel<float>(c)};
  Tensor<float> x(Shape{3, 1, 256});
  Rng rng(1);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.normal());
  const auto own = one[0].predict_seizure(x);
  const auto e = ensemble_average(one, x);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(e[i], static_cast<double>(own[i]));

  FcnConfig c2 = c;
  c2.seed = 77;
  std::vector<FcnModel<float>> seeds{FcnModel<float>(c), FcnModel<float>(c2)};
  EXPECT_NO_THROW(ensemble_average(seeds, x));
  FcnConfig c3 = c;
  c3.n_maps = 4;
  std::vector<FcnModel<float>> mixed{FcnModel<float>(c), FcnModel<float>(c3)};
  EXPECT_THROW(ensemble_average(mixed, x), std::invalid_argument);
}

TEST(PredictRecord, MatchesWindowByWindowPrediction) {
  SynthConfig sc;
  sc.n_subjects = 1;
  sc.record_duration = 40;
  sc.n_channels = 3;
  sc.sample_rate = 32;
  sc.seizure_rate = 0;
  const auto rec = synth_dataset(sc)[0].record;
  FcnConfig c = toy_model();
  FcnModel<double> m(c);
  const auto rows = predict_record(m, rec, pre32(), 7);
  ASSERT_EQ(rows.size(), 3u);
  ASSERT_EQ(rows[0].size(), 33u);
  for (std::size_t ch : {0u, 2u}) {
    for (std::size_t w : {0u, 17u, 32u}) {
      Tensor<double> win(Shape{1, 256});
      for (std::size_t i = 0; i < 256; ++i) win.at(0, i) = rec.samples.at(ch, w * 32 + i);
      EXPECT_NEAR(rows[ch][w], m.predict(win)[1], 1e-12);
    }
  }
}

namespace {

std::vector<Subject> small_dataset(std::size_t n) {
  SynthConfig c;
  c.n_subjects = n;
  c.record_duration = 300;
  c.n_channels = 4;
  c.seizure_rate = 36;
  c.duration_min = 20;
  c.duration_max = 40;
  c.spread_min = 1;
  c.spread_max = 2;
  c.seed = 8;
  return synth_dataset(c);
}

TrainConfig tiny_train(FcnMode mode) {
  TrainConfig t = TrainConfig::defaults_for(mode);
  t.max_epochs = 2;
  t.patience = 1;
  t.batch_size = 64;
  t.max_per_class = 60;
  t.n_validation_subjects = 1;
  t.seed = 4;
  return t;
}

}  // namespace

TEST(LooHarness, OneFoldPerSubjectWithoutLeakage) {
  const auto data = small_dataset(4);
  FcnConfig f = toy_model();
  LooOptions opt;
  const auto folds = loo_harness(data, f, tiny_train(FcnMode::Fcn1d), opt);
  ASSERT_EQ(folds.size(), 4u);
  std::set<std::string> tested;
  for (const auto& fold : folds) {
    tested.insert(fold.subject);
    EXPECT_EQ(fold.training_subjects.count(fold.subject), 0u);
    EXPECT_EQ(fold.training_subjects.size(), 3u);
    ASSERT_EQ(fold.rows.size(), 1u);
    EXPECT_EQ(fold.test.scores.size(), 300u);
    for (double v : fold.test.scores) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_EQ(tested.size(), 4u);
  const auto again = loo_harness(data, f, tiny_train(FcnMode::Fcn1d), opt);
  EXPECT_EQ(format_fold_csv(folds), format_fold_csv(again));
}

TEST(LooHarness, TwoDimensionalFoldsTrainThreeModelsAndEnsemble) {
  const auto data = small_dataset(4);
  FcnConfig f = toy_model();
  f.mode = FcnMode::Fcn2d;
  LooOptions opt;
  opt.test_subjects = {1};
  const auto dir = std::filesystem::temp_directory_path() / "neoseize_loo_models";
  std::filesystem::remove_all(dir);
  opt.model_dir = dir;
  const auto folds = loo_harness(data, f, tiny_train(FcnMode::Fcn2d), opt);
  ASSERT_EQ(folds.size(), 1u);
  ASSERT_EQ(folds[0].rows.size(), 4u);
  EXPECT_EQ(folds[0].rows.back().split, "ensemble");
  EXPECT_EQ(folds[0].training_subjects.count(folds[0].subject), 0u);
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++files;
  EXPECT_EQ(files, 3u);
  std::filesystem::remove_all(dir);
}

TEST(LooHarness, RejectsTooFewSubjects) {
  const auto data = small_dataset(2);
  EXPECT_THROW(loo_harness(data, toy_model(), tiny_train(FcnMode::Fcn1d), {}), TrainingError);
}

TEST(HoldoutHarness, TrainsOnceAndScoresEveryTestSubject) {
  const auto data = small_dataset(4);
  for (auto mode : {FcnMode::Fcn1d, FcnMode::Fcn2d}) {
    FcnConfig f = toy_model();
    f.mode = mode;
    LooOptions opt;
    opt.test_subjects = {3, 1};
    const auto res = holdout_harness(data, f, tiny_train(mode), opt);
    ASSERT_EQ(res.size(), 2u);
    EXPECT_EQ(res[0].subject, data[1].record.subject_id);
    EXPECT_EQ(res[1].subject, data[3].record.subject_id);
    for (const auto& r : res) {
      EXPECT_EQ(r.training_subjects,
                (std::set<std::string>{data[0].record.subject_id, data[2].record.subject_id}));
      EXPECT_EQ(r.test.scores.size(), 300u);
      EXPECT_EQ(r.rows.size(), mode == FcnMode::Fcn1d ? 1u : 4u);
    }
    // one shared training run: identical validation results for both subjects
    for (std::size_t k = 0; k < res[0].rows.size(); ++k) {
      EXPECT_EQ(res[0].rows[k].best_epoch, res[1].rows[k].best_epoch);
      if (!std::isnan(res[0].rows[k].val_auc)) {
        EXPECT_EQ(res[0].rows[k].val_auc, res[1].rows[k].val_auc);
      }
    }
    EXPECT_EQ(format_fold_csv(res), format_fold_csv(holdout_harness(data, f, tiny_train(mode), opt)));
  }
}

TEST(HoldoutHarness, RejectsBadTestSets) {
  const auto data = small_dataset(3);
  LooOptions opt;
  EXPECT_THROW(holdout_harness(data, toy_model(), tiny_train(FcnMode::Fcn1d), opt), TrainingError);
  opt.test_subjects = {5};
  EXPECT_THROW(holdout_harness(data, toy_model(), tiny_train(FcnMode::Fcn1d), opt), TrainingError);
  opt.test_subjects = {0, 1};
  EXPECT_THROW(holdout_harness(data, toy_model(), tiny_train(FcnMode::Fcn1d), opt), TrainingError);
}
