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

// Acceptance runner. `acceptance N...` runs the listed criteria (all when
// none are given) and prints one PASS/FAIL line per criterion. The exit code
// is non-zero when any criterion fails.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "../fcn_oracles.hpp"
#include "bandpower_baseline.hpp"
#include "neoseize/neoseize.hpp"

namespace fs = std::filesystem;
using namespace neoseize;

namespace {

using Clock = std::chrono::steady_clock;
using TensorD = Tensor<double>;
using ParamD = Parameter<double>;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [FAILED]");
  }
};

std::string f2(double v, int d = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", d, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void log(const std::string& m) {
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << m << std::endl;
}

fs::path work_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() /
                 ("neoseize_acceptance_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TensorD random_tensor(Shape s, Rng& rng, double scale = 1.0) {
  TensorD t(std::move(s));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

// sum_i r_i x_i with fixed random r
Var<double> weighted_sum(Var<double> x, std::uint64_t seed = 7) {
  Rng rng(seed);
  std::vector<double> r(x.value().size());
  for (auto& v : r) v = rng.normal();
  double s = 0;
  for (std::size_t i = 0; i < r.size(); ++i) s += r[i] * x.value()[i];
  const std::size_t xi = x.id();
  return x.graph()->record(TensorD(Shape{}, {s}), {x}, [xi, r](Graph<double>& g, std::size_t self) {
    const double up = g.grad(self)[0];
    auto dx = g.grad_buffer(xi);
    for (std::size_t i = 0; i < r.size(); ++i) dx[i] += up * r[i];
  });
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

Outcome criterion_1() {
  constexpr double kTol = 1e-4, kEps = 1e-5;
  constexpr std::size_t kCoords = 200;
  const auto t0 = Clock::now();
  Outcome o;
  double worst = 0.0;
  std::size_t checks = 0;
  auto check = [&](const std::string& name, std::vector<ParamD*> params, auto&& fn) {
    const auto r = grad_check_detailed(fn, std::span<ParamD* const>(params), kEps, kCoords);
    const std::size_t used = r.coordinates - r.skipped;
    ++checks;
    worst = std::max(worst, r.max_relative_error);
    if (r.max_relative_error >= kTol || used < kCoords) {
      o.require(false, name + " rel err " + sci(r.max_relative_error) + " over " +
                           std::to_string(used) + " coords");
    }
  };
  Rng rng(2026);
  {
    ParamD x("x", random_tensor({2, 3, 40}, rng)), w("w", random_tensor({4, 3, 3}, rng)),
        b("b", random_tensor({4}, rng));
    for (auto [stride, pad] : {std::pair{1u, Padding::Same}, std::pair{1u, Padding::Valid},
                               std::pair{2u, Padding::Same}, std::pair{3u, Padding::Valid}}) {
      check("conv1d/s" + std::to_string(stride), {&x, &w, &b}, [&](Graph<double>& g) {
        return weighted_sum(conv1d(g.param(x), g.param(w), g.param(b), stride, pad));
      });
    }
  }
  {
    ParamD x("x", random_tensor({400}, rng));
    check("relu", {&x}, [&](Graph<double>& g) { return weighted_sum(relu(g.param(x))); });
  }
  {
    ParamD x("x", random_tensor({4, 6, 10}, rng, 2.0)), gamma("g", random_tensor({6}, rng)),
        beta("b", random_tensor({6}, rng));
    RunningStats<double> stats;
    for (auto mode : {BnMode::Train, BnMode::Infer}) {
      check(mode == BnMode::Train ? "batch_norm/train" : "batch_norm/infer", {&x, &gamma, &beta},
            [&](Graph<double>& g) {
              return weighted_sum(batch_norm(g.param(x), g.param(gamma), g.param(beta), stats, mode));
            });
    }
  }
  {
    ParamD x("x", random_tensor({2, 4, 30}, rng));
    for (auto kind : {PoolKind::Avg, PoolKind::Max}) {
      for (std::size_t s : {1u, 2u, 3u}) {
        check(std::string(kind == PoolKind::Avg ? "avgpool" : "maxpool") + "/s" + std::to_string(s),
              {&x}, [&](Graph<double>& g) { return weighted_sum(pool1d(g.param(x), kind, s, s)); });
      }
    }
    check("global_avg_pool", {&x}, [&](Graph<double>& g) {
      return weighted_sum(global_avg_pool(g.param(x)));
    });
    check("reshape+sum", {&x}, [&](Graph<double>& g) {
      return sum(reshape(relu(g.param(x)), {8, 30}));
    });
  }
  {
    ParamD z("z", random_tensor({120, 2}, rng));
    std::vector<int> t(120);
    for (auto& v : t) v = static_cast<int>(rng.below(2));
    const std::vector<double> w{0.7, 2.5};
    check("softmax", {&z}, [&](Graph<double>& g) { return weighted_sum(softmax(g.param(z))); });
    check("cross_entropy", {&z}, [&](Graph<double>& g) {
      return cross_entropy(softmax(g.param(z)), std::span<const int>(t), std::span<const double>(w));
    });
    check("binary_cross_entropy", {&z}, [&](Graph<double>& g) {
      return binary_cross_entropy(select_column(softmax(g.param(z)), 1), std::span<const int>(t), 0.7,
                                  2.5);
    });
  }
  {
    ParamD x("x", random_tensor({60, 4}, rng));
    check("max_last_axis", {&x}, [&](Graph<double>& g) {
      return weighted_sum(max_last_axis(g.param(x)));
    });
  }
  for (std::size_t stride : {1u, 2u, 3u}) {
    FcnConfig c;
    c.n_blocks = 1;
    c.pool_stride = stride;
    for (auto mode : {BnMode::Train, BnMode::Infer}) {
      const auto r = oracle::fcn_grad_check(c, 4242 + stride, mode, kCoords, kEps);
      ++checks;
      worst = std::max(worst, r.checked.max_relative_error);
      const std::size_t used = r.checked.coordinates - r.checked.skipped;
      const std::string name = std::string("fcn1d n_blocks=1 s") + std::to_string(stride) +
                               (mode == BnMode::Train ? " train" : " infer");
      if (r.checked.max_relative_error >= kTol || used < kCoords) {
        o.require(false, name + " rel err " + sci(r.checked.max_relative_error));
      }
      // biases feeding train-mode batch norm have an exactly zero gradient
      if (r.shift_invariant && (r.shift_invariant_max_analytic > 1e-12 ||
                                r.shift_invariant_max_numeric > 1e-9)) {
        o.require(false, name + " shift-invariant bias gradient not zero");
      }
    }
  }
  o.require(worst < kTol, std::to_string(checks) + " checks, max relative error " + sci(worst) +
                              " (< 1e-4, eps 1e-5, >= 200 coords each)");
  const double secs = seconds_since(t0);
  o.require(secs < 60.0, "runtime " + f2(secs, 1) + " s (< 60)");
  return o;
}

// ---------------------------------------------------------------------------
// 2. Receptive field

Outcome criterion_2() {
  const auto t0 = Clock::now();
  Outcome o;
  std::size_t agree = 0, max_rf = 0;
  std::string table;
  for (std::size_t b = 1; b <= 5; ++b) {
    for (std::size_t s = 1; s <= 3; ++s) {
      FcnConfig c;
      c.n_blocks = b;
      c.pool_stride = s;
      const auto rf = receptive_field(c), trace = oracle::dependency_trace_rf(c);
      if (rf == trace) ++agree;
      else o.require(false, "(" + std::to_string(b) + "," + std::to_string(s) + ") rf " +
                                std::to_string(rf) + " vs trace " + std::to_string(trace));
      max_rf = std::max(max_rf, rf);
      table += (table.empty() ? "" : " ") + std::to_string(rf);
    }
  }
  FcnConfig deepest;
  deepest.n_blocks = 5;
  deepest.pool_stride = 3;
  o.require(agree == 15, std::to_string(agree) + "/15 configs match the dependency trace [" + table + "]");
  o.require(receptive_field(deepest) == 256 && max_rf == 256,
            "n_blocks=5 pool_stride=3 gives " + std::to_string(receptive_field(deepest)) +
                ", grid max " + std::to_string(max_rf));
  const double secs = seconds_since(t0);
  o.require(secs < 120.0, "runtime " + f2(secs, 1) + " s (< 120)");
  return o;
}

// ---------------------------------------------------------------------------
// 3. Architecture counts

Outcome criterion_3() {
  Outcome o;
  FcnConfig c1, c5;
  c1.n_blocks = 1;
  c5.n_blocks = 5;
  o.require(count_conv_layers(c1) == 4 && count_conv_layers(c5) == 16,
            "conv layers " + std::to_string(count_conv_layers(c1)) + " (n_blocks=1), " +
                std::to_string(count_conv_layers(c5)) + " (n_blocks=5)");
  bool invariant = true, matches_model = true;
  std::string counts;
  for (std::size_t b = 1; b <= 5; ++b) {
    std::size_t first = 0;
    for (std::size_t s = 1; s <= 3; ++s) {
      FcnConfig c;
      c.n_blocks = b;
      c.pool_stride = s;
      const auto n = count_params(c);
      if (s == 1) first = n;
      invariant = invariant && n == first;
      FcnModel<double> m(c);
      std::size_t actual = 0;
      for (auto* p : m.parameters()) actual += p->value.size();
      matches_model = matches_model && actual == n;
      if (m.convs().size() != count_conv_layers(c)) matches_model = false;
    }
    counts += (counts.empty() ? "" : " ") + std::to_string(first);
  }
  o.require(invariant, "count_params invariant to pool_stride [" + counts + "]");
  o.require(matches_model, "counts equal the built models' parameter and conv totals");
  return o;
}

// ---------------------------------------------------------------------------
// 4. Channel-permutation invariance of fcn2d

Outcome criterion_4() {
  Outcome o;
  Rng rng(404);
  std::size_t identical = 0;
  for (int t = 0; t < 100; ++t) {
    FcnConfig c;
    c.mode = FcnMode::Fcn2d;
    c.n_blocks = 1 + rng.below(3);
    c.pool_stride = 1 + rng.below(3);
    c.n_maps = 4 + rng.below(13);
    c.n_input_channels = 2 + rng.below(7);
    c.seed = rng.below(1u << 30);
    FcnModel<float> m(c);
    Tensor<float> w(Shape{c.n_input_channels, c.input_len});
    for (auto& v : w.storage()) v = static_cast<float>(rng.normal());
    std::vector<std::size_t> perm(c.n_input_channels);
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(std::span(perm));
    Tensor<float> pw(w.shape());
    for (std::size_t ch = 0; ch < perm.size(); ++ch) {
      for (std::size_t i = 0; i < c.input_len; ++i) pw.at(ch, i) = w.at(perm[ch], i);
    }
    const auto a = m.predict(w), b = m.predict(pw);
    if (a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(a[0])) == 0) {
      ++identical;
    }
  }
  o.require(identical == 100, std::to_string(identical) + "/100 permuted outputs bit-identical");
  return o;
}

// ---------------------------------------------------------------------------
// 5. Metrics

double pair_counting_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return 100.0 * wins / pairs;
}

Outcome criterion_5() {
  Outcome o;
  Rng rng(505);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + rng.below(300);
    const std::size_t levels = 1 + rng.below(20);  // few levels force ties
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(levels)) / static_cast<double>(levels);
      y[i] = static_cast<int>(rng.below(2));
    }
    y[0] = 0;
    y[1] = 1;
    worst = std::max(worst, std::abs(auc(roc_curve(s, y)) - pair_counting_auc(s, y)));
  }
  o.require(worst <= 1e-9, "trapezoid vs pair counting max diff " + sci(worst) + " over 1000 sets");

  std::vector<double> s(10000);
  std::vector<int> y(10000);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = rng.uniform();
    y[i] = static_cast<int>(rng.below(2));
  }
  const auto chance = roc_curve(s, y);
  o.require(std::abs(auc(chance) - 50.0) <= 2.0, "chance AUC " + f2(auc(chance)));
  RocCurve diagonal;
  diagonal.thresholds = {INFINITY, 0.0};
  diagonal.sensitivity = {0.0, 1.0};
  diagonal.specificity = {1.0, 0.0};
  diagonal.positives = diagonal.negatives = 1;
  o.require(std::abs(auc90(diagonal) - 5.0) <= 0.2, "AUC90 of the diagonal " + f2(auc90(diagonal), 4));
  o.require(std::abs(auc90(chance) - 5.0) <= 0.2, "AUC90 of chance scores " + f2(auc90(chance), 3));
  const double ri = relative_improvement(98.5, 96.6);
  o.require(std::abs(ri - 55.9) <= 0.05 && std::lround(ri) == 56,
            "relative improvement " + f2(ri, 3) + " rounds to " + std::to_string(std::lround(ri)));
  return o;
}

// ---------------------------------------------------------------------------
// 6. Post-processing identities

Outcome criterion_6() {
  Outcome o;
  Rng rng(606);
  auto random_trace = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.below(5) == 0 ? static_cast<double>(rng.below(2)) : rng.uniform();
    return v;
  };
  std::size_t mismatches = 0;
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 50 + rng.below(250);
    const auto v = random_trace(n);
    const double cs = static_cast<double>(rng.below(40));
    const auto r = static_cast<std::ptrdiff_t>(cs);
    const auto c = collar(v, cs, 1.0);
    for (int k = 0; k < 20; ++k) {
      const double th = rng.below(4) == 0 ? v[rng.below(n)] : rng.uniform();
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        bool dilated = false;
        for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, i - r);
             j <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1, i + r); ++j) {
          dilated = dilated || v[static_cast<std::size_t>(j)] >= th;
        }
        if ((c[static_cast<std::size_t>(i)] >= th) != dilated) ++mismatches;
      }
    }
  }
  o.require(mismatches == 0, "collar vs thresholded dilation: " + std::to_string(mismatches) +
                                 " mismatches over 500 traces x 20 thresholds");
  std::size_t const_fail = 0;
  for (int t = 0; t < 500; ++t) {
    const double k = rng.below(3) == 0 ? static_cast<double>(rng.below(2)) : rng.uniform();
    const std::vector<double> v(1 + rng.below(500), k);
    if (moving_average(v, static_cast<double>(1 + rng.below(120))) != v) ++const_fail;
  }
  o.require(const_fail == 0, "moving average reproduced 500 constant traces exactly");
  std::size_t range_fail = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.below(400);
    std::vector<std::vector<double>> rows(1 + rng.below(8));
    for (auto& r : rows) r = random_trace(n);
    PostprocConfig cfg;
    cfg.adapt = rng.below(2) == 1;
    cfg.ma_window = static_cast<double>(1 + rng.below(120));
    cfg.collar_s = static_cast<double>(rng.below(60));
    cfg.adapt_tau = 1.0 + rng.uniform() * 1000;
    cfg.adapt_beta = rng.uniform() * 2;
    const auto fused = fuse_channels_max(rows);
    for (const auto& s : {fused, moving_average(fused, cfg.ma_window),
                          background_adapt(fused, 1.0, cfg.adapt_tau, cfg.adapt_beta),
                          collar(fused, cfg.collar_s), postprocess_chain(rows, 1.0, cfg)}) {
      for (double x : s) {
        if (!(x >= 0.0 && x <= 1.0)) ++range_fail;
      }
    }
  }
  o.require(range_fail == 0, "every stage and the chain kept 1000 random inputs in [0,1]");
  return o;
}

// ---------------------------------------------------------------------------
// Desk-scale training settings shared by the end-to-end criteria.

TrainConfig desk_train(FcnMode mode) {
  TrainConfig t = TrainConfig::defaults_for(mode);
  t.batch_size = 32;
  t.max_epochs = 15;
  t.patience = 5;
  t.max_per_class = mode == FcnMode::Fcn1d ? 1500 : 300;
  return t;
}

double concatenated_auc(const std::vector<FoldResult>& folds) {
  return aggregate(fold_scores(folds), AggregateMode::Concatenated).mean_auc;
}

// ---------------------------------------------------------------------------
// 7. Synthetic end-to-end with strong labels

Outcome criterion_7() {
  Outcome o;
  const auto t0 = Clock::now();
  SynthConfig sc;  // 9 subjects, 1 h, 8 channels, seed 1
  const auto data = synth_dataset(sc);
  LooOptions opt;
  const auto base = baseline::bandpower_loo(data, opt.pre, opt.post, 1500, 7);
  std::string per;
  for (const auto& s : base.subjects) per += " " + f2(s.auc, 1);
  o.require(base.mean_auc >= 90.0, "bandpower logistic baseline mean AUC " + f2(base.mean_auc) +
                                       " (>= 90) [" + per.substr(1) + "]");
  FcnConfig fcn;
  fcn.n_blocks = 3;
  fcn.pool_stride = 2;
  opt.progress = log;
  const auto folds = loo_harness(data, fcn, desk_train(FcnMode::Fcn1d), opt);
  const auto sum = aggregate(fold_scores(folds), AggregateMode::MeanPerSubject);
  per.clear();
  for (const auto& s : sum.subjects) per += " " + f2(s.auc, 1);
  o.require(sum.mean_auc >= 95.0, "fcn1d LOO mean post-processed AUC " + f2(sum.mean_auc) + " (std " +
                                      f2(sum.std_auc) + ", AUC90 " + f2(sum.mean_auc90) + ") [" +
                                      per.substr(1) + "]");
  const double secs = seconds_since(t0);
  o.require(secs <= 1800.0, "runtime " + f2(secs, 0) + " s (<= 1800)");
  return o;
}

// ---------------------------------------------------------------------------
// 8. Weak labels against a strong subset

Outcome criterion_8() {
  Outcome o;
  const auto t0 = Clock::now();
  SynthConfig sc;
  sc.spread_min = sc.spread_max = 1;
  sc.seed = 8;
  const auto data = synth_dataset(sc);
  std::vector<AnnotationSet> truth;
  for (const auto& s : data) truth.push_back(s.annotations);
  double sum1 = 0, sum2 = 0;
  std::string per;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    LooOptions opt;
    opt.test_subjects = {6, 7, 8};
    opt.progress = [seed](const std::string& m) { log("[seed " + std::to_string(seed) + "] " + m); };
    FcnConfig fcn;
    fcn.n_blocks = 3;
    fcn.pool_stride = 2;
    fcn.mode = FcnMode::Fcn1d;
    auto t1 = desk_train(FcnMode::Fcn1d);
    t1.seed = seed;
    opt.train_annotations = restrict_strong(truth, 0.15, derive_seed(seed, 15));
    std::size_t strong = 0;
    for (std::size_t i = 0; i < 6; ++i) strong += (*opt.train_annotations)[i].strong_events().size();
    const double a1 = concatenated_auc(holdout_harness(data, fcn, t1, opt));
    opt.train_annotations.reset();
    fcn.mode = FcnMode::Fcn2d;
    auto t2 = desk_train(FcnMode::Fcn2d);
    t2.seed = seed;
    t2.n_validation_subjects = 2;
    const double a2 = concatenated_auc(holdout_harness(data, fcn, t2, opt));
    sum1 += a1;
    sum2 += a2;
    per += " seed " + std::to_string(seed) + ": 2d " + f2(a2) + " / 1d " + f2(a1) + " (" +
           std::to_string(strong) + " strong training events);";
  }
  const double m1 = sum1 / 3, m2 = sum2 / 3;
  o.require(m2 >= m1 - 1.0, "mean concatenated AUC fcn2d " + f2(m2) + " vs fcn1d " + f2(m1) +
                                " (need 2d >= 1d - 1)" + per.substr(0, per.size() - 1));
  const double secs = seconds_since(t0);
  o.require(secs <= 5400.0, "runtime " + f2(secs, 0) + " s (<= 5400)");
  return o;
}

// ---------------------------------------------------------------------------
// 9. Determinism of loo and sweep reruns

int invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "neoseize");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) log(err.str());
  return code;
}

std::map<std::string, std::string> csv_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.path().extension() != ".csv" && e.path().filename() != "run_config.txt") continue;
    std::ifstream is(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    out[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return out;
}

Outcome criterion_9() {
  Outcome o;
  const auto dir = work_dir("c9");
  const std::vector<std::string> common = {
      "--set", "synth.n_subjects=3",   "--set", "synth.record_duration=600",
      "--set", "synth.n_channels=4",   "--set", "synth.seizure_rate=24",
      "--set", "train.max_epochs=3",   "--set", "train.patience=2",
      "--set", "train.batch_size=32",  "--set", "train.max_per_class=150",
      "--set", "model.n_maps=8",       "--seed", "9"};
  struct Job {
    std::string name;
    std::vector<std::string> args;
  };
  const std::vector<Job> jobs = {
      {"loo_fcn1d", {"loo", "--mode", "fcn1d", "--blocks", "2"}},
      {"loo_fcn2d", {"loo", "--mode", "fcn2d", "--blocks", "2", "--set", "train.n_splits=2",
                     "--set", "train.n_validation_subjects=1", "--set", "train.patience=2"}},
      {"sweep", {"sweep", "--blocks", "1..2", "--pool-stride", "1..2", "--repeats", "2"}}};
  for (const auto& job : jobs) {
    auto args = job.args;
    args.insert(args.end(), common.begin(), common.end());
    args.insert(args.end(), {"--out", (dir / job.name / "first").string()});
    if (invoke(args) != 0) {
      o.require(false, job.name + " run failed");
      continue;
    }
    const auto echoed = (dir / job.name / "first" / "run_config.txt").string();
    if (invoke({job.args[0], "--config", echoed, "--out", (dir / job.name / "rerun").string()}) != 0) {
      o.require(false, job.name + " rerun failed");
      continue;
    }
    const auto a = csv_files(dir / job.name / "first"), b = csv_files(dir / job.name / "rerun");
    std::size_t same = 0;
    for (const auto& [k, v] : a) {
      auto it = b.find(k);
      if (it != b.end() && it->second == v) ++same;
    }
    o.require(same == a.size() && a.size() == b.size() && a.size() > 1,
              job.name + ": " + std::to_string(same) + "/" + std::to_string(a.size()) +
                  " files byte-identical");
  }
  fs::remove_all(dir);
  return o;
}

// ---------------------------------------------------------------------------
// 10. Throughput of eval

Outcome criterion_10() {
  Outcome o;
  const auto dir = work_dir("c10");
  SynthConfig sc;
  sc.n_subjects = 1;
  sc.seed = 10;
  write_dataset(synth_dataset(sc), dir / "data");
  {
    // a briefly trained model; throughput does not depend on the weights
    SynthConfig tc = sc;
    tc.n_subjects = 2;
    tc.record_duration = 600;
    tc.seizure_rate = 24;
    tc.seed = 11;
    write_dataset(synth_dataset(tc), dir / "train_data");
  }
  if (invoke({"train", "--data", (dir / "train_data").string(), "--out", (dir / "model").string(),
              "--blocks", "3", "--pool-stride", "2", "--set", "train.max_epochs=2", "--set",
              "train.patience=1", "--set", "train.batch_size=32", "--set",
              "train.max_per_class=100"}) != 0) {
    o.require(false, "training the model failed");
    return o;
  }
  const auto t0 = Clock::now();
  const int code = invoke({"eval", "--data", (dir / "data").string(), "--model",
                           (dir / "model" / "model.nsmd").string(), "--out",
                           (dir / "eval").string()});
  const double secs = seconds_since(t0);
  std::string bench;
  {
    std::ifstream is(dir / "eval" / "benchmark.txt");
    std::getline(is, bench);
  }
  o.require(code == 0, "eval exit code " + std::to_string(code));
  o.require(secs <= 60.0, "eval of 1 h x 8 channels took " + f2(secs) + " s (<= 60); " + bench);
  fs::remove_all(dir);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria = {
      {1, {"gradient correctness", criterion_1}},
      {2, {"receptive-field oracle", criterion_2}},
      {3, {"architecture counts", criterion_3}},
      {4, {"fcn2d channel-permutation invariance", criterion_4}},
      {5, {"metrics oracle", criterion_5}},
      {6, {"post-processing identities", criterion_6}},
      {7, {"synthetic end-to-end, strong labels", criterion_7}},
      {8, {"weak-label regime", criterion_8}},
      {9, {"determinism", criterion_9}},
      {10, {"eval throughput", criterion_10}}};
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (!criteria.count(k)) {
      std::cerr << "usage: acceptance [1-10 ...]\n";
      return 2;
    }
    selected.push_back(k);
  }
  if (selected.empty()) {
    for (const auto& [k, v] : criteria) selected.push_back(k);
  }
  bool all = true;
  for (int k : selected) {
    const auto& [name, fn] = criteria.at(k);
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    all = all && o.pass;
    std::cout << "criterion " << k << " (" << name << "): " << (o.pass ? "PASS" : "FAIL") << "  "
              << o.detail << "  [" << f2(seconds_since(t0), 1) << " s]" << std::endl;
  }
  return all ? 0 : 1;
}
