#include <gtest/gtest.h>

#include <cmath>

#include "selfens/augment.hpp"
#include "selfens/rng.hpp"
#include "test_support.hpp"

using namespace selfens;
using selfens::testing::random_tensor;

TEST(Translate, ShiftsAndZeroFills) {
  // One 1x3x4 image with values 1..12.
  std::vector<float> v(12);
  for (std::size_t k = 0; k < 12; ++k) v[k] = static_cast<float>(k + 1);
  std::vector<float> out(12);
  translate_image<float>(v, out, {1, 3, 4}, 1, 0);
  EXPECT_EQ(out, (std::vector<float>{0, 1, 2, 3, 0, 5, 6, 7, 0, 9, 10, 11}));
  translate_image<float>(v, out, {1, 3, 4}, 0, -1);
  EXPECT_EQ(out, (std::vector<float>{5, 6, 7, 8, 9, 10, 11, 12, 0, 0, 0, 0}));
  translate_image<float>(v, out, {1, 3, 4}, 0, 0);
  EXPECT_EQ(out, v);
}

TEST(Flip, MirrorsEachRowAndIsInvolution) {
  std::vector<float> v{1, 2, 3, 4, 5, 6};
  flip_image<float>(v, {2, 1, 3});
  EXPECT_EQ(v, (std::vector<float>{3, 2, 1, 6, 5, 4}));
  flip_image<float>(v, {2, 1, 3});
  EXPECT_EQ(v, (std::vector<float>{1, 2, 3, 4, 5, 6}));
}

TEST(Apply, IdentityPolicyCopies) {
  const Tensor<float> x = random_tensor<float>({4, 3, 8, 8}, 1);
  EXPECT_EQ(apply(AugmentPolicy{}, x, 5), x);
  const auto [a, b] = apply_pair(AugmentPolicy{}, x, 5);
  EXPECT_EQ(a, x);
  EXPECT_EQ(b, x);
}

TEST(Apply, TranslationKeepsPixelsFromTheOriginal) {
  AugmentPolicy p;
  p.max_translation = 2;
  const Tensor<float> x = random_tensor<float>({8, 1, 6, 6}, 2, 1, 2);  // no zeros in the source
  const Tensor<float> y = apply(p, x, 9);
  for (std::size_t i = 0; i < 8; ++i) {
    // Every output is either zero-filled or equal to a shifted source pixel;
    // try all shifts and require one to match exactly.
    bool matched = false;
    for (int dx = -2; dx <= 2 && !matched; ++dx) {
      for (int dy = -2; dy <= 2 && !matched; ++dy) {
        std::vector<float> out(36);
        translate_image<float>(x.item(i), out, {1, 6, 6}, dx, dy);
        matched = std::equal(out.begin(), out.end(), y.item(i).begin());
      }
    }
    EXPECT_TRUE(matched) << "item " << i;
  }
  EXPECT_EQ(apply(p, x, 9), y);
}

TEST(Apply, NoiseStatisticsAndFlatItems) {
  AugmentPolicy p;
  p.noise_sigma = 0.2;
  const Tensor<double> x(Shape{200, 10}, 1.0);
  const Tensor<double> y = apply(p, x, 4);
  double m = 0, s = 0;
  for (double v : y.data()) m += v - 1;
  m /= 2000;
  for (double v : y.data()) s += (v - 1 - m) * (v - 1 - m);
  EXPECT_NEAR(std::sqrt(s / 1999), 0.2, 0.015);
  AugmentPolicy flip;
  flip.flip = true;
  EXPECT_THROW(apply(flip, x, 1), ConfigError);
}

TEST(Apply, RejectsOversizedTranslation) {
  AugmentPolicy p;
  p.max_translation = 8;
  EXPECT_THROW(apply(p, Tensor<float>(Shape{1, 1, 8, 8}), 1), ConfigError);
  p.max_translation = -1;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(ApplyPair, FirstBranchEqualsSingleApply) {
  AugmentPolicy p;
  p.max_translation = 2;
  p.flip = true;
  p.noise_sigma = 0.1;
  const Tensor<float> x = random_tensor<float>({6, 3, 8, 8}, 3);
  for (Pairing pairing : {Pairing::kIndependent, Pairing::kSharedPerPair}) {
    p.pairing = pairing;
    const auto [a, b] = apply_pair(p, x, 21);
    EXPECT_EQ(a, apply(p, x, derive_seed(21, {0})));
    EXPECT_NE(a, b);
  }
}

TEST(ApplyPair, SharedPairingPinsTheFlip) {
  AugmentPolicy p;
  p.flip = true;
  p.pairing = Pairing::kSharedPerPair;
  const Tensor<float> x = random_tensor<float>({64, 1, 4, 4}, 5);
  const auto [a, b] = apply_pair(p, x, 2);
  EXPECT_EQ(a, b);  // flips are the only transformation and they are shared
  p.pairing = Pairing::kIndependent;
  const auto [c, d] = apply_pair(p, x, 2);
  EXPECT_NE(c, d);
  EXPECT_EQ(parse_pairing("shared_per_pair"), Pairing::kSharedPerPair);
  EXPECT_EQ(pairing_name(Pairing::kIndependent), "independent");
  EXPECT_THROW(parse_pairing("pinned"), ConfigError);
}

TEST(Zca, WhitenedCovarianceIsNearIdentity) {
  // Correlated 3-d data: x = A u with u ~ uniform.
  const std::size_t n = 4000;
  const Tensor<double> u = random_tensor<double>({n, 3}, 8);
  Tensor<float> x(Shape{n, 3});
  const double a[3][3] = {{2, 0, 0}, {1, 1, 0}, {0.5, -1, 0.3}};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 5.0 * static_cast<double>(r);
      for (std::size_t c = 0; c < 3; ++c) s += a[r][c] * u[i * 3 + c];
      x[i * 3 + r] = static_cast<float>(s);
    }
  const ZcaTransform t = zca_fit(x, 0.0);
  const Tensor<float> y = zca_apply(t, x);
  double mean[3] = {0, 0, 0};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < 3; ++r) mean[r] += y[i * 3 + r] / static_cast<double>(n);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_NEAR(mean[r], 0.0, 1e-4);
    for (std::size_t c = 0; c < 3; ++c) {
      double cov = 0;
      for (std::size_t i = 0; i < n; ++i) cov += (y[i * 3 + r] - mean[r]) * (y[i * 3 + c] - mean[c]);
      EXPECT_NEAR(cov / static_cast<double>(n), r == c ? 1.0 : 0.0, 1e-3) << r << "," << c;
    }
  }
  // Whitening matrix is symmetric.
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(t.whitening[r * 3 + c], t.whitening[c * 3 + r], 1e-12);
}

TEST(Zca, SingularCovarianceNeedsEpsilon) {
  Tensor<float> x(Shape{50, 2});
  for (std::size_t i = 0; i < 50; ++i) x[2 * i] = x[2 * i + 1] = static_cast<float>(i);
  EXPECT_THROW(zca_fit(x, 0.0), DataError);
  const ZcaTransform t = zca_fit(x, 1e-2);
  EXPECT_TRUE(zca_apply(t, x).all_finite());
  EXPECT_THROW(zca_apply(t, Tensor<float>(Shape{2, 3})), ConfigError);
}

TEST(Zca, RecordsRoundTrip) {
  const ZcaTransform t = zca_fit(random_tensor<float>({100, 4}, 1), 1e-5);
  const ZcaTransform back = zca_from_records(zca_records(t));
  ASSERT_EQ(back.mean.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(back.mean[k], t.mean[k], 1e-6);
  for (std::size_t k = 0; k < 16; ++k) EXPECT_NEAR(back.whitening[k], t.whitening[k], 1e-5);
  EXPECT_NEAR(back.epsilon, 1e-5, 1e-12);
}

TEST(Standardize, ZeroMeanUnitVariancePerItem) {
  const Tensor<float> x = random_tensor<float>({5, 3, 4, 4}, 6, -3, 10);
  const Tensor<float> y = standardize_per_image(x);
  for (std::size_t i = 0; i < 5; ++i) {
    double m = 0, s = 0;
    for (float v : y.item(i)) m += v;
    m /= 48;
    for (float v : y.item(i)) s += (v - m) * (v - m);
    EXPECT_NEAR(m, 0.0, 1e-5);
    EXPECT_NEAR(s / 48, 1.0, 1e-4);
  }
  const Tensor<float> flat(Shape{1, 4}, 2.0f);
  EXPECT_EQ(standardize_per_image(flat), Tensor<float>(Shape{1, 4}, 0.0f));
}
