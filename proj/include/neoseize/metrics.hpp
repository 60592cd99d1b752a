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

// Epoch-based ROC analysis. A score at or above the threshold counts as a
// seizure decision.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "neoseize/keyvalue.hpp"

namespace neoseize {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RocCurve {
  std::vector<double> thresholds;  // descending, starting at +inf
  std::vector<double> sensitivity;
  std::vector<double> specificity;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

template <class Label>
RocCurve roc_curve(const std::vector<double>& scores, const std::vector<Label>& labels) {
  if (scores.size() != labels.size()) throw MetricError("roc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  RocCurve c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw MetricError("roc: non-finite score");
    (labels[i] ? c.positives : c.negatives) += 1;
  }
  if (c.positives == 0 || c.negatives == 0) {
    throw MetricError("roc: labels contain a single class, AUC undefined");
  }
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const double P = static_cast<double>(c.positives), N = static_cast<double>(c.negatives);
  c.thresholds.push_back(std::numeric_limits<double>::infinity());
  c.sensitivity.push_back(0.0);
  c.specificity.push_back(1.0);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == t; ++i) {
      (labels[order[i]] ? tp : fp) += 1;
    }
    c.thresholds.push_back(t);
    c.sensitivity.push_back(static_cast<double>(tp) / P);
    c.specificity.push_back(1.0 - static_cast<double>(fp) / N);
  }
  return c;
}

/// Trapezoidal area under sensitivity against 1 - specificity, in percent.
inline double auc(const RocCurve& c) {
  double area = 0.0;
  for (std::size_t i = 1; i < c.thresholds.size(); ++i) {
    const double dx = c.specificity[i - 1] - c.specificity[i];
    area += dx * 0.5 * (c.sensitivity[i] + c.sensitivity[i - 1]);
  }
  return 100.0 * area;
}

/// Mean sensitivity over specificity in [0.9, 1], in percent.
inline double auc90(const RocCurve& c) {
  constexpr double kSpan = 0.1;
  double area = 0.0;
  for (std::size_t i = 1; i < c.thresholds.size(); ++i) {
    const double x0 = 1.0 - c.specificity[i - 1], x1 = 1.0 - c.specificity[i];
    if (x0 >= kSpan) break;
    const double y0 = c.sensitivity[i - 1], y1 = c.sensitivity[i];
    if (x1 <= kSpan) {
      area += (x1 - x0) * 0.5 * (y0 + y1);
    } else {
      const double yb = y0 + (y1 - y0) * (kSpan - x0) / (x1 - x0);
      area += (kSpan - x0) * 0.5 * (y0 + yb);
    }
  }
  return 100.0 * area / kSpan;
}

inline double relative_improvement(double new_auc, double base_auc) {
  if (base_auc >= 100.0) throw MetricError("relative_improvement: base AUC is 100");
  return 100.0 * (new_auc - base_auc) / (100.0 - base_auc);
}

struct SubjectScores {
  std::string subject;
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
};

enum class AggregateMode { MeanPerSubject, Concatenated };

struct SubjectResult {
  std::string subject;
  double auc = 0.0;
  double auc90 = 0.0;
};

struct Summary {
  AggregateMode mode = AggregateMode::MeanPerSubject;
  std::vector<SubjectResult> subjects;
  std::vector<std::string> excluded;  // single-class subjects (mean mode)
  double mean_auc = 0.0, std_auc = 0.0;
  double mean_auc90 = 0.0, std_auc90 = 0.0;
};

namespace metrics_detail {

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double m = 0.0;
  for (double x : v) m += x;
  m /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / n)};
}

}  // namespace metrics_detail

/// Mean/std (population) of per-subject AUCs, or one AUC over pooled epochs.
inline Summary aggregate(const std::vector<SubjectScores>& subjects, AggregateMode mode) {
  if (subjects.empty()) throw MetricError("aggregate: no subjects");
  Summary s;
  s.mode = mode;
  if (mode == AggregateMode::Concatenated) {
    SubjectScores all;
    all.subject = "concatenated";
    for (const auto& x : subjects) {
      all.scores.insert(all.scores.end(), x.scores.begin(), x.scores.end());
      all.labels.insert(all.labels.end(), x.labels.begin(), x.labels.end());
    }
    const auto c = roc_curve(all.scores, all.labels);
    s.subjects.push_back({all.subject, auc(c), auc90(c)});
    s.mean_auc = s.subjects[0].auc;
    s.mean_auc90 = s.subjects[0].auc90;
    return s;
  }
  std::vector<double> a, a90;
  for (const auto& x : subjects) {
    const bool pos = std::any_of(x.labels.begin(), x.labels.end(), [](auto l) { return l != 0; });
    const bool neg = std::any_of(x.labels.begin(), x.labels.end(), [](auto l) { return l == 0; });
    if (!pos || !neg) {
      s.excluded.push_back(x.subject);
      continue;
    }
    const auto c = roc_curve(x.scores, x.labels);
    s.subjects.push_back({x.subject, auc(c), auc90(c)});
    a.push_back(s.subjects.back().auc);
    a90.push_back(s.subjects.back().auc90);
  }
  if (a.empty()) throw MetricError("aggregate: no subject has both classes");
  std::tie(s.mean_auc, s.std_auc) = metrics_detail::mean_std(a);
  std::tie(s.mean_auc90, s.std_auc90) = metrics_detail::mean_std(a90);
  return s;
}

inline void write_roc_csv(const RocCurve& c, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << "threshold,sensitivity,specificity\n";
  for (std::size_t i = 0; i < c.thresholds.size(); ++i) {
    os << (std::isinf(c.thresholds[i]) ? std::string("inf") : kv::number(c.thresholds[i])) << ","
       << kv::number(c.sensitivity[i]) << "," << kv::number(c.specificity[i]) << "\n";
  }
}

/// Per-subject rows followed by mean and std rows.
inline std::string format_summary_csv(const Summary& s) {
  auto fixed = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  std::string out = "subject,auc,auc90\n";
  for (const auto& r : s.subjects) out += r.subject + "," + fixed(r.auc) + "," + fixed(r.auc90) + "\n";
  if (s.mode == AggregateMode::MeanPerSubject) {
    out += "mean," + fixed(s.mean_auc) + "," + fixed(s.mean_auc90) + "\n";
    out += "std," + fixed(s.std_auc) + "," + fixed(s.std_auc90) + "\n";
  }
  for (const auto& e : s.excluded) out += e + ",excluded,excluded\n";
  return out;
}

}  // namespace neoseize
