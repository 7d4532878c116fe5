#include <gtest/gtest.h>

#include <cmath>

#include "dfnet/errors.hpp"
#include "dfnet/init.hpp"
#include "dfnet/ops.hpp"
#include "dfnet/rfb.hpp"
#include "support/testing.hpp"

namespace dfnet {
namespace {

using testing::random_tensor;

Tensor ones(Shape s) { return Tensor::full(s, 1.0); }

TEST(Conv2dTest, AllOnesKernelCountsNeighbours) {
  const ConvSpec spec{1, 1, 3, 1, 1, 1};
  Tensor y = conv2d(ones({1, 1, 3, 3}), ones({1, 1, 3, 3}), Tensor::full({1, 1, 1, 1}, 0.0), spec);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  EXPECT_EQ(y.at(0, 0, 1, 1), 9.0);
  EXPECT_EQ(y.at(0, 0, 0, 0), 4.0);
  EXPECT_EQ(y.at(0, 0, 0, 2), 4.0);
  EXPECT_EQ(y.at(0, 0, 2, 0), 4.0);
  EXPECT_EQ(y.at(0, 0, 2, 2), 4.0);
  EXPECT_EQ(y.at(0, 0, 0, 1), 6.0);
}

TEST(Conv2dTest, IdentityKernelIsIdentity) {
  auto rng = seeded_rng(1);
  Tensor x = random_tensor({2, 3, 5, 7}, rng);
  std::vector<double> k(3 * 3 * 9, 0.0);
  for (std::size_t c = 0; c < 3; ++c) k[(c * 3 + c) * 9 + 4] = 1.0;
  Tensor y = conv2d(x, Tensor({3, 3, 3, 3}, k), Tensor(), {3, 3, 3, 1, 1, 1});
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Conv2dTest, DilatedCentreSumsSpreadTaps) {
  auto rng = seeded_rng(2);
  Tensor x = random_tensor({1, 1, 5, 5}, rng);
  Tensor y = conv2d(x, ones({1, 1, 3, 3}), Tensor(), {1, 1, 3, 2, 2, 1});
  ASSERT_EQ(y.shape(), (Shape{1, 1, 5, 5}));
  double expect = 0.0;
  for (int dy : {-2, 0, 2})
    for (int dx : {-2, 0, 2}) expect += x.at(0, 0, 2 + dy, 2 + dx);
  EXPECT_NEAR(y.at(0, 0, 2, 2), expect, 1e-14);
}

TEST(Conv2dTest, MatchesDirectLoopsOverSpecs) {
  auto rng = seeded_rng(3);
  for (const auto& [k, d, p, s] : std::vector<std::array<std::size_t, 4>>{
           {3, 1, 1, 1}, {3, 2, 2, 1}, {1, 1, 0, 1}, {3, 1, 1, 2}, {3, 2, 0, 2}, {2, 1, 1, 3}, {5, 1, 2, 1}}) {
    const ConvSpec spec{3, 4, k, d, p, s};
    Tensor x = random_tensor({2, 3, 9, 11}, rng);
    Tensor w = random_tensor({4, 3, k, k}, rng);
    Tensor b = random_tensor({1, 4, 1, 1}, rng);
    Tensor y = conv2d(x, w, b, spec);
    const auto expect = testing::reference_conv(x, w, {b.data().begin(), b.data().end()}, spec);
    ASSERT_EQ(y.shape(), (Shape{2, 4, spec.output_extent(9), spec.output_extent(11)}));
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(y.data()[i], expect[i], 1e-12);
  }
}

TEST(Conv2dTest, LinearInInput) {
  auto rng = seeded_rng(4);
  const ConvSpec spec{2, 3, 3, 2, 2, 1};
  Tensor x = random_tensor({1, 2, 6, 6}, rng), z = random_tensor({1, 2, 6, 6}, rng);
  Tensor w = random_tensor({3, 2, 3, 3}, rng);
  const double a = 0.7, b = -1.3;
  Tensor lhs = conv2d(add(scale(x, a), scale(z, b)), w, Tensor(), spec);
  Tensor rhs = add(scale(conv2d(x, w, Tensor(), spec), a), scale(conv2d(z, w, Tensor(), spec), b));
  for (std::size_t i = 0; i < lhs.numel(); ++i) EXPECT_NEAR(lhs.data()[i], rhs.data()[i], 1e-10);
}

TEST(Conv2dTest, OutputExtentFormulaForBlockLayers) {
  // Every layer used by the refinement block structures keeps the extent.
  for (std::size_t h : {3u, 17u, 96u}) {
    EXPECT_EQ((ConvSpec{1, 1, 3, 1, 1, 1}.output_extent(h)), h);
    EXPECT_EQ((ConvSpec{1, 1, 3, 2, 2, 1}.output_extent(h)), h);
    EXPECT_EQ((PoolSpec{3, 1, 1}.output_extent(h)), h);
  }
  EXPECT_EQ((ConvSpec{1, 1, 3, 1, 1, 2}.output_extent(8)), 4u);
  EXPECT_EQ((ConvSpec{1, 1, 3, 2, 0, 1}.output_extent(7)), 3u);
}

TEST(Conv2dTest, RejectsBadSpecs) {
  EXPECT_THROW((ConvSpec{1, 1, 5, 1, 0, 1}.output_extent(3)), ConfigError);
  EXPECT_THROW((ConvSpec{0, 1, 3, 1, 1, 1}.validate()), ConfigError);
  EXPECT_THROW((ConvSpec{1, 1, 3, 0, 1, 1}.validate()), ConfigError);
  EXPECT_THROW(conv2d(ones({1, 2, 4, 4}), ones({1, 1, 3, 3}), Tensor(), {1, 1, 3, 1, 1, 1}), ConfigError);
  EXPECT_THROW(conv2d(ones({1, 1, 4, 4}), ones({1, 1, 3, 3}), ones({1, 2, 1, 1}), {1, 1, 3, 1, 1, 1}),
               ConfigError);
}

TEST(AvgPoolTest, ConstantStaysConstantWithoutPadding) {
  Tensor y = avg_pool2d(Tensor::full({1, 2, 6, 6}, 0.3), {3, 0, 1});
  for (double v : y.data()) EXPECT_NEAR(v, 0.3, 1e-15);
}

TEST(AvgPoolTest, TwoByTwoMean) {
  Tensor y = avg_pool2d(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}), {2, 0, 1});
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.item(), 2.5);
}

TEST(AvgPoolTest, PaddingCountsInDivisor) {
  Tensor y = avg_pool2d(ones({1, 1, 3, 3}), {3, 1, 1});
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 0), 4.0 / 9.0);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 1), 6.0 / 9.0);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 1, 1), 1.0);
}

TEST(AvgPoolTest, RejectsOversizedWindow) { EXPECT_THROW(avg_pool2d(ones({1, 1, 2, 2}), {3, 0, 1}), ConfigError); }

TEST(AdaptivePoolTest, BinMeans) {
  std::vector<double> v;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) v.push_back(c);
  Tensor y = adaptive_avg_pool(Tensor({1, 1, 4, 4}, v), 1, 2);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 2}));
  EXPECT_DOUBLE_EQ(y.data()[0], 0.5);
  EXPECT_DOUBLE_EQ(y.data()[1], 2.5);
}

TEST(AdaptivePoolTest, FullBinsIsIdentityAndOneBinIsMean) {
  auto rng = seeded_rng(5);
  Tensor x = random_tensor({2, 3, 5, 4}, rng);
  Tensor same = adaptive_avg_pool(x, 5, 4);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(same.data()[i], x.data()[i]);
  Tensor g = adaptive_avg_pool(x, 1, 1);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0.0;
      for (std::size_t h = 0; h < 5; ++h)
        for (std::size_t w = 0; w < 4; ++w) m += x.at(n, c, h, w);
      EXPECT_NEAR(g.at(n, c, 0, 0), m / 20.0, 1e-14);
    }
  EXPECT_THROW(adaptive_avg_pool(x, 6, 1), ConfigError);
}

TEST(AdaptivePoolTest, OverlappingBinsUseFloorAndCeil) {
  // 5 rows into 3 bins: [0,2), [1,4), [3,5).
  Tensor x({1, 1, 5, 1}, {1, 2, 3, 4, 5});
  Tensor y = adaptive_avg_pool(x, 3, 1);
  EXPECT_DOUBLE_EQ(y.data()[0], 1.5);
  EXPECT_DOUBLE_EQ(y.data()[1], 3.0);
  EXPECT_DOUBLE_EQ(y.data()[2], 4.5);
}

TEST(UpsampleTest, AlignCornersRamp) {
  Tensor y = bilinear_upsample(Tensor({1, 1, 1, 2}, {0.0, 1.0}), 1, 4);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 4}));
  EXPECT_EQ(y.data()[0], 0.0);
  EXPECT_NEAR(y.data()[1], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(y.data()[2], 2.0 / 3.0, 1e-15);
  EXPECT_EQ(y.data()[3], 1.0);
}

TEST(UpsampleTest, ConstantAndIdentity) {
  Tensor y = bilinear_upsample(Tensor::full({1, 2, 3, 2}, 0.25), 11, 7);
  for (double v : y.data()) EXPECT_NEAR(v, 0.25, 1e-15);
  auto rng = seeded_rng(6);
  Tensor x = random_tensor({1, 2, 4, 5}, rng);
  Tensor same = bilinear_upsample(x, 4, 5);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(same.data()[i], x.data()[i]);
  EXPECT_THROW(bilinear_upsample(x, 3, 5), ConfigError);
}

TEST(FuseTest, ScalarExamples) {
  Tensor a = Tensor::scalar(0.4), b = Tensor::scalar(0.6);
  EXPECT_DOUBLE_EQ(fuse(a, b, FusionMode::average).item(), 0.5);
  EXPECT_DOUBLE_EQ(fuse(a, b, FusionMode::multiply).item(), 0.24);
}

TEST(FuseTest, SelfFusionAndSymmetry) {
  auto rng = seeded_rng(7);
  Tensor m = random_tensor({2, 3, 4, 4}, rng, 0.0, 1.0);
  Tensor n = random_tensor({2, 3, 4, 4}, rng, 0.0, 1.0);
  Tensor sq = fuse(m, m, FusionMode::multiply);
  Tensor avg = fuse(m, m, FusionMode::average);
  Tensor mn = fuse(m, n, FusionMode::multiply), nm = fuse(n, m, FusionMode::multiply);
  Tensor am = fuse(m, n, FusionMode::average), an = fuse(n, m, FusionMode::average);
  for (std::size_t i = 0; i < m.numel(); ++i) {
    EXPECT_EQ(sq.data()[i], m.data()[i] * m.data()[i]);
    EXPECT_EQ(avg.data()[i], m.data()[i]);
    EXPECT_EQ(mn.data()[i], nm.data()[i]);
    EXPECT_EQ(am.data()[i], an.data()[i]);
    for (double v : {mn.data()[i], am.data()[i]}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_THROW(fuse(m, Tensor::full({1, 3, 4, 4}, 0.0), FusionMode::average), ConfigError);
}

TEST(ConcatTest, ShapesAndGradientRouting) {
  Tensor a = Tensor::full({1, 2, 3, 3}, 1.0, true), b = Tensor::full({1, 3, 3, 3}, 2.0, true);
  std::vector<Tensor> parts{a, b};
  Tensor y = concat_channels(parts);
  ASSERT_EQ(y.shape(), (Shape{1, 5, 3, 3}));
  EXPECT_EQ(y.at(0, 1, 2, 2), 1.0);
  EXPECT_EQ(y.at(0, 2, 0, 0), 2.0);
  sum(y).backward();
  ASSERT_EQ(a.grad().size(), a.numel());
  ASSERT_EQ(b.grad().size(), b.numel());
  for (double g : a.grad()) EXPECT_EQ(g, 1.0);
  for (double g : b.grad()) EXPECT_EQ(g, 1.0);

  std::vector<Tensor> single{a};
  Tensor one = concat_channels(single);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(one.data()[i], a.data()[i]);
  std::vector<Tensor> bad{a, Tensor::full({1, 1, 2, 3}, 0.0)};
  EXPECT_THROW(concat_channels(bad), ConfigError);
}

TEST(ActivationTest, ReluValues) {
  Tensor y = relu(Tensor({1, 1, 1, 2}, {-1.0, 2.0}));
  EXPECT_EQ(y.data()[0], 0.0);
  EXPECT_EQ(y.data()[1], 2.0);
  // A NaN must survive so the training loop can notice it.
  EXPECT_TRUE(std::isnan(relu(Tensor::full({1, 1, 1, 1}, std::nan(""))).item()));
}

TEST(ActivationTest, ClampAndLogFloor) {
  Tensor y = clamp01(Tensor({1, 1, 1, 3}, {-0.5, 0.25, 1.5}));
  EXPECT_EQ(y.data()[0], 0.0);
  EXPECT_EQ(y.data()[1], 0.25);
  EXPECT_EQ(y.data()[2], 1.0);
  Tensor l = log_floor(Tensor({1, 1, 1, 2}, {0.0, std::exp(-2.0)}));
  EXPECT_DOUBLE_EQ(l.data()[0], std::log(1e-12));
  EXPECT_DOUBLE_EQ(l.data()[1], -2.0);
}

TEST(SoftmaxTest, EqualLogitsGiveUniform) {
  Tensor y = softmax_channels(Tensor::full({2, 6, 3, 3}, 1.7));
  for (double v : y.data()) EXPECT_NEAR(v, 1.0 / 6.0, 1e-15);
}

TEST(SoftmaxTest, SumsToOneAndIgnoresPerPixelShift) {
  auto rng = seeded_rng(8);
  const Shape s{3, 5, 4, 6};
  Tensor x = random_tensor(s, rng, -20.0, 20.0);
  Tensor shift = random_tensor({s.n, 1, s.h, s.w}, rng, -50.0, 50.0);
  std::vector<double> shifted(x.data().begin(), x.data().end());
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t h = 0; h < s.h; ++h)
        for (std::size_t w = 0; w < s.w; ++w) shifted[s.index(n, c, h, w)] += shift.at(n, 0, h, w);
  Tensor p = softmax_channels(x), q = softmax_channels(Tensor(s, shifted));
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t h = 0; h < s.h; ++h)
      for (std::size_t w = 0; w < s.w; ++w) {
        double total = 0.0;
        for (std::size_t c = 0; c < s.c; ++c) {
          total += p.at(n, c, h, w);
          EXPECT_NEAR(p.at(n, c, h, w), q.at(n, c, h, w), 1e-10);
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
      }
}

TEST(RenormalizeTest, ChannelSumsBecomeOne) {
  auto rng = seeded_rng(9);
  Tensor x = random_tensor({2, 4, 3, 3}, rng, 0.01, 1.0);
  Tensor y = renormalize_channels(x);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t h = 0; h < 3; ++h)
      for (std::size_t w = 0; w < 3; ++w) {
        double total = 0.0;
        for (std::size_t c = 0; c < 4; ++c) total += y.at(n, c, h, w);
        EXPECT_NEAR(total, 1.0, 1e-14);
      }
  Tensor flat = Tensor::full({1, 4, 1, 1}, 0.0, true);
  Tensor zero = renormalize_channels(flat);
  for (double v : zero.data()) EXPECT_EQ(v, 0.25);
  sum(mul(zero, Tensor({1, 4, 1, 1}, {1, 2, 3, 4}))).backward();
  for (double g : flat.grad()) EXPECT_EQ(g, 0.0);
  const Tensor tiny = renormalize_channels(Tensor::full({1, 2, 1, 1}, 1e-13));
  for (double v : tiny.data()) EXPECT_EQ(v, 0.5);
}

TEST(ReductionTest, TransposeSumMean) {
  Tensor x({1, 1, 2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor t = transpose_hw(x);
  ASSERT_EQ(t.shape(), (Shape{1, 1, 3, 2}));
  EXPECT_EQ(t.at(0, 0, 2, 1), 6.0);
  EXPECT_EQ(t.at(0, 0, 0, 1), 4.0);
  EXPECT_EQ(sum(x).item(), 21.0);
  EXPECT_EQ(mean(x).item(), 3.5);
}

}  // namespace
}  // namespace dfnet
