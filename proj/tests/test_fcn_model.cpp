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
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <gtest/gtest.h>

#include "neoseize/fcn_model.hpp"
#include "neoseize/gradcheck.hpp"
#include "fcn_oracles.hpp"

using namespace neoseize;

namespace {

FcnConfig config1d(std::size_t blocks, std::size_t stride) {
  FcnConfig c;
  c.n_blocks = blocks;
  c.pool_stride = stride;
  return c;
}

Tensor<double> random_window(std::size_t ch, std::size_t len, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> t(Shape{ch, len});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
  return t;
}

}  // namespace

TEST(FcnConfig, ConvLayerCounts) {
  EXPECT_EQ(count_conv_layers(config1d(1, 1)), 4u);
  EXPECT_EQ(count_conv_layers(config1d(5, 3)), 16u);
  for (std::size_t b = 1; b <= 5; ++b) {
    EXPECT_EQ(count_conv_layers(config1d(b, 2)), 3 * b + 1);
    EXPECT_EQ(FcnModel<double>(config1d(b, 2)).convs().size(), 3 * b + 1);
  }
}

TEST(FcnConfig, ValidationRejectsBadRanges) {
  EXPECT_THROW(FcnModel<double>(config1d(0, 1)), ConfigError);
  EXPECT_THROW(FcnModel<double>(config1d(6, 1)), ConfigError);
  EXPECT_THROW(FcnModel<double>(config1d(1, 4)), ConfigError);
  FcnConfig c = config1d(1, 1);
  c.filter_width = 4;
  EXPECT_THROW(FcnModel<double>{c}, ConfigError);
  c = config1d(1, 1);
  c.mode = FcnMode::Fcn2d;
  EXPECT_THROW(FcnModel<double>{c}, ConfigError);
}

TEST(FcnConfig, ManifestRoundTrip) {
  FcnConfig c = config1d(4, 3);
  c.mode = FcnMode::Fcn2d;
  c.n_input_channels = 8;
  c.seed = 0xfeedfacecafebeefULL;
  EXPECT_EQ(FcnConfig::from_key_values(kv::parse(kv::format(c.to_key_values()))), c);
}

TEST(ReceptiveField, Examples) {
  EXPECT_EQ(receptive_field(config1d(0, 1)), 3u);
  EXPECT_EQ(receptive_field(config1d(1, 1)), 9u);
  EXPECT_EQ(receptive_field_uncapped(config1d(5, 3)), 1455u);
  EXPECT_EQ(receptive_field(config1d(5, 3)), 256u);
}

TEST(ReceptiveField, MatchesDependencyTraceForAllGridPoints) {
  for (std::size_t blocks = 1; blocks <= 5; ++blocks) {
    for (std::size_t stride = 1; stride <= 3; ++stride) {
      const FcnConfig c = config1d(blocks, stride);
      EXPECT_EQ(receptive_field(c), oracle::dependency_trace_rf(c))
          << "blocks " << blocks << " stride " << stride;
    }
  }
}

TEST(CountParams, ClosedFormPieces) {
  // first conv 1 -> 32 maps, width 3 ; classification conv 32 -> 2
  EXPECT_EQ(1u * 3 * 32 + 32, 128u);
  EXPECT_EQ(32u * 3 * 2 + 2, 194u);
  // one block: 128 + 2 * (32*3*32 + 32) + 194 + 3 BN layers * 64
  EXPECT_EQ(count_params(config1d(1, 1)), 128u + 2 * 3104 + 194 + 3 * 64);
}

TEST(CountParams, InvariantToPoolStrideAndIncreasingInDepth) {
  std::size_t prev = 0;
  for (std::size_t b = 1; b <= 5; ++b) {
    const std::size_t n = count_params(config1d(b, 1));
    EXPECT_EQ(n, count_params(config1d(b, 2)));
    EXPECT_EQ(n, count_params(config1d(b, 3)));
    EXPECT_EQ(n, FcnModel<double>(config1d(b, 3)).parameter_count());
    EXPECT_GT(n, prev);
    prev = n;
  }
}

TEST(BuildFcn, SameSeedIsBitIdentical) {
  FcnConfig c = config1d(2, 2);
  c.seed = 42;
  auto a = FcnModel<double>(c), b = FcnModel<double>(c);
  c.seed = 43;
  auto d = FcnModel<double>(c);
  EXPECT_EQ(a.convs()[3].weight.value, b.convs()[3].weight.value);
  EXPECT_NE(a.convs()[3].weight.value, d.convs()[3].weight.value);
}

TEST(Forward, OneDimensionalOutputsSumToOne) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    FcnConfig c = config1d(1 + s % 5, 1 + s % 3);
    c.seed = s;
    FcnModel<double> m(c);
    auto p = m.predict(random_window(1, 256, s));
    ASSERT_EQ(p.size(), 2u);
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
  }
}

TEST(Forward, ZeroWindowGivesHalf) {
  for (auto mode : {FcnMode::Fcn1d, FcnMode::Fcn2d}) {
    FcnConfig c = config1d(3, 2);
    c.mode = mode;
    c.n_input_channels = mode == FcnMode::Fcn1d ? 1 : 4;
    FcnModel<double> m(c);
    auto p = m.predict(Tensor<double>(Shape{c.n_input_channels, 256}));
    EXPECT_DOUBLE_EQ(p.back(), 0.5);
  }
}

TEST(Forward, TwoDimensionalChannelPermutationInvariance) {
  FcnConfig c = config1d(2, 3);
  c.mode = FcnMode::Fcn2d;
  c.n_input_channels = 5;
  c.seed = 9;
  FcnModel<double> m(c);
  Tensor<double> w = random_window(5, 256, 77);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  Tensor<double> pw(w.shape());
  for (std::size_t ch = 0; ch < 5; ++ch) {
    for (std::size_t i = 0; i < 256; ++i) pw.at(ch, i) = w.at(perm[ch], i);
  }
  const double a = m.predict(w)[0], b = m.predict(pw)[0];
  EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
  EXPECT_GE(a, 0.0);
  EXPECT_LE(a, 1.0);
}

TEST(Forward, TwoDimensionalIsMaxOfSingleChannelProbabilities) {
  FcnConfig c2 = config1d(2, 2);
  c2.mode = FcnMode::Fcn2d;
  c2.n_input_channels = 3;
  FcnModel<double> m2(c2);
  FcnConfig c1 = config1d(2, 2);
  FcnModel<double> m1(c1);
  m1.copy_state_from(FcnModel<double>(c1));
  for (std::size_t i = 0; i < m1.convs().size(); ++i) {
    m1.convs()[i].weight.value = m2.convs()[i].weight.value;
  }
  Tensor<double> w = random_window(3, 256, 5);
  double best = 0;
  for (std::size_t ch = 0; ch < 3; ++ch) {
    Tensor<double> one(Shape{1, 256});
    for (std::size_t i = 0; i < 256; ++i) one[i] = w.at(ch, i);
    best = std::max(best, m1.predict(one)[1]);
  }
  EXPECT_NEAR(m2.predict(w)[0], best, 1e-14);
}

TEST(Forward, ShapeMismatchThrows) {
  FcnModel<double> m(config1d(1, 1));
  EXPECT_THROW(m.predict(Tensor<double>(Shape{2, 256})), ShapeError);
}

TEST(Forward, AcceptsAnyInputLength) {
  FcnModel<double> m(config1d(2, 2));
  EXPECT_EQ(m.predict(random_window(1, 512, 3)).size(), 2u);
  EXPECT_EQ(m.predict(random_window(1, 100, 3)).size(), 2u);
}

TEST(Forward, InteriorShiftCovarianceOfFeatureMaps) {
  for (std::size_t stride : {1u, 2u, 3u}) {
    FcnConfig c = config1d(2, stride);
    FcnModel<double> m(c);
    const std::size_t s = c.downsampling();
    Tensor<double> base = random_window(1, 256 + s, 21);
    Tensor<double> a(Shape{1, 1, 256}), b(Shape{1, 1, 256});
    for (std::size_t i = 0; i < 256; ++i) {
      a[i] = base[i];
      b[i] = base[i + s];
    }
    Graph<double> g(false);
    auto fa = m.features(g, g.input(a), BnMode::Infer);
    auto fb = m.features(g, g.input(b), BnMode::Infer);
    const std::size_t len = fa.shape()[2];
    const std::size_t margin = (receptive_field(c) + s - 1) / s + 1;
    ASSERT_GT(len, 2 * margin);
    for (std::size_t k = 0; k < c.n_maps; ++k) {
      for (std::size_t p = margin; p + 1 + margin < len; ++p) {
        EXPECT_NEAR(fb.value().at(0, k, p), fa.value().at(0, k, p + 1), 1e-12);
      }
    }
  }
}

TEST(Heatmap, LengthAndRangeForEveryConfig) {
  for (std::size_t b = 1; b <= 5; ++b) {
    for (std::size_t s = 1; s <= 3; ++s) {
      FcnModel<double> m(config1d(b, s));
      auto h = m.seizure_heatmap(random_window(1, 256, b * 10 + s));
      ASSERT_EQ(h.shape(), (Shape{1, 256}));
      for (double v : h.data()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
  }
}

TEST(Heatmap, IdenticalClassMapsGiveHalf) {
  FcnModel<double> m(config1d(2, 2));
  auto& cls = m.convs().back();
  const std::size_t per = cls.weight.value.size() / 2;
  for (std::size_t i = 0; i < per; ++i) cls.weight.value[per + i] = cls.weight.value[i];
  auto h = m.seizure_heatmap(random_window(1, 256, 4));
  for (double v : h.data()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Heatmap, PairsWithBackgroundToOne) {
  FcnConfig c = config1d(2, 3);
  FcnModel<double> m(c);
  Tensor<double> w = random_window(1, 256, 8);
  auto h = m.seizure_heatmap(w);
  Graph<double> g(false);
  auto maps = m.class_maps(g, g.input(w.reshaped({1, 1, 256})), BnMode::Infer);
  const std::size_t p = maps.shape()[2];
  for (std::size_t i = 0; i < 256; ++i) {
    const std::size_t pos = std::min(i / c.downsampling(), p - 1);
    const double bg = 1.0 / (1.0 + std::exp(maps.value().at(0, 1, pos) -
                                            maps.value().at(0, 0, pos)));
    EXPECT_NEAR(h[i] + bg, 1.0, 1e-12);
  }
}

TEST(Heatmap, PerChannelInTwoDimensionalMode) {
  FcnConfig c = config1d(1, 2);
  c.mode = FcnMode::Fcn2d;
  c.n_input_channels = 4;
  FcnModel<double> m(c);
  EXPECT_EQ(m.seizure_heatmap(random_window(4, 256, 1)).shape(), (Shape{4, 256}));
}

TEST(ModelFile, RoundTripPreservesPredictions) {
  FcnConfig c = config1d(2, 3);
  c.seed = 5;
  FcnModel<float> m(c);
  m.norms()[1].stats.mean[3] = 0.25f;
  const auto path = std::filesystem::temp_directory_path() / "neoseize_model_rt.nsm";
  m.save(path);
  auto back = FcnModel<float>::load(path);
  EXPECT_EQ(back.config(), c);
  const auto a = m.named_tensors(), b = back.named_tensors();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_EQ(*a[i].second, *b[i].second);
  }
  std::filesystem::remove(path);
}

TEST(ModelFile, RejectsCorruptFiles) {
  const auto path = std::filesystem::temp_directory_path() / "neoseize_model_bad.nsm";
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE";
  }
  EXPECT_THROW(FcnModel<float>::load(path), FormatError);
  FcnModel<float>(config1d(1, 1)).save(path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 10);
  EXPECT_THROW(FcnModel<float>::load(path), FormatError);
  std::filesystem::remove(path);
}

class FullGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(FullGradient, TrainModeMatchesFiniteDifferences) {
  const auto r = oracle::fcn_grad_check(config1d(1, GetParam()), 4242);
  EXPECT_GE(r.checked.coordinates, 200u);
  EXPECT_EQ(r.checked.skipped, 0u);
  EXPECT_LT(r.checked.max_relative_error, 1e-4);
  // Three conv layers of 32 maps, each followed by batch norm.
  EXPECT_EQ(r.shift_invariant, 96u);
  EXPECT_LT(r.shift_invariant_max_analytic, 1e-12);
  EXPECT_LT(r.shift_invariant_max_numeric, 1e-9);
}

TEST_P(FullGradient, InferModeMatchesFiniteDifferences) {
  const auto r =
      oracle::fcn_grad_check(config1d(1, GetParam()), 17, BnMode::Infer);
  EXPECT_EQ(r.shift_invariant, 0u);
  EXPECT_EQ(r.checked.skipped, 0u);
  EXPECT_LT(r.checked.max_relative_error, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(PoolStrides, FullGradient, ::testing::Values(1, 2, 3));
