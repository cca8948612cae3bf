#include <gtest/gtest.h>

#include <cmath>

#include "selfens/gradcheck.hpp"
#include "selfens/network.hpp"
#include "selfens/rng.hpp"
#include "test_support.hpp"

using namespace selfens;
using selfens::testing::random_tensor;

namespace {

// Plain cross-correlation with zero padding, written independently of the
// im2col path.
Tensor<double> direct_conv(const Tensor<double>& x, const Tensor<double>& w, const std::vector<double>& bias,
                           std::size_t pad) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  const std::size_t ho = h + 2 * pad - k + 1, wo = wd + 2 * pad - k + 1;
  Tensor<double> y(Shape{n, cout, ho, wo});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double s = bias[o];
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(oy + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
                s += w[((o * cin + c) * k + ky) * k + kx] * x[((b * cin + c) * h + iy) * wd + ix];
              }
          y[((b * cout + o) * ho + oy) * wo + ox] = s;
        }
  return y;
}

void set_param(NetworkParams<double>& p, const std::string& name, const Tensor<double>& value) {
  ParamTensor<double>* t = p.find(name);
  ASSERT_NE(t, nullptr) << name;
  ASSERT_EQ(t->value.shape(), value.shape()) << name;
  t->value = value;
}

}  // namespace

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor<float>(Shape{2, 3}, std::vector<float>(5)), ConfigError);
  EXPECT_THROW(Tensor<float>(Shape{2, 3}).reshaped({4, 2}), ConfigError);
}

TEST(Tensor, ItemsAndGather) {
  Tensor<int> t(Shape{3, 2}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.item_size(), 2u);
  EXPECT_EQ(t.item(1)[1], 4);
  const std::vector<std::size_t> idx{2, 0};
  const Tensor<int> g = gather_items(t, std::span<const std::size_t>(idx));
  EXPECT_EQ(g, (Tensor<int>(Shape{2, 2}, {5, 6, 1, 2})));
}

TEST(Rng, Mix64MatchesSplitmixReference) {
  // First output of splitmix64 seeded with 0.
  EXPECT_EQ(mix64(0), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(derive_seed(42, {3, 9}), mix64(mix64(mix64(42) ^ 3) ^ 9));
  EXPECT_NE(stream_seed(1, Stream::kAugment), stream_seed(1, Stream::kDropout));
}

TEST(Network, DenseWeightNormMatchesManualOracle) {
  const LayerSpecList layers{LayerSpec::dense(3, true, false), LayerSpec::softmax()};
  Network<double> net(layers, {4});
  NetworkParams<double> p = net.init_params(5);
  const Tensor<double> v = random_tensor<double>({3, 4}, 1);
  const Tensor<double> g(Shape{3}, {0.5, 2.0, -1.5});
  const Tensor<double> b(Shape{3}, {0.1, -0.2, 0.3});
  set_param(p, "0.dense.weight", v);
  set_param(p, "0.dense.gain", g);
  set_param(p, "0.dense.bias", b);
  const Tensor<double> x = random_tensor<double>({5, 4}, 2);
  const Tensor<double> out = net.forward(p, x, StochasticEvalContext<double>::eval()).output;
  for (std::size_t n = 0; n < 5; ++n) {
    double logits[3];
    for (std::size_t o = 0; o < 3; ++o) {
      double norm = 0, dot = 0;
      for (std::size_t j = 0; j < 4; ++j) {
        norm += v[o * 4 + j] * v[o * 4 + j];
        dot += v[o * 4 + j] * x[n * 4 + j];
      }
      logits[o] = g[o] * dot / std::sqrt(norm) + b[o];
    }
    const double mx = std::max({logits[0], logits[1], logits[2]});
    double z = 0;
    for (double l : logits) z += std::exp(l - mx);
    for (std::size_t o = 0; o < 3; ++o) EXPECT_NEAR(out[n * 3 + o], std::exp(logits[o] - mx) / z, 1e-14);
  }
}

TEST(Network, ConvMatchesDirectConvolution) {
  for (Padding pad : {Padding::kSame, Padding::kValid}) {
    const LayerSpecList layers{LayerSpec::conv(3, 4, pad, false, false)};
    Network<double> net(layers, {2, 6, 5});
    NetworkParams<double> p = net.init_params(3);
    const Tensor<double> w = random_tensor<double>({4, 2, 3, 3}, 7);
    const std::vector<double> bias{0.1, 0.2, -0.3, 0.0};
    set_param(p, "0.conv.weight", w);
    set_param(p, "0.conv.bias", Tensor<double>(Shape{4}, bias));
    const Tensor<double> x = random_tensor<double>({3, 2, 6, 5}, 8);
    const Tensor<double> y = net.forward(p, x, StochasticEvalContext<double>::eval()).output;
    const Tensor<double> ref = direct_conv(x, w, bias, pad == Padding::kSame ? 1 : 0);
    ASSERT_EQ(y.shape(), ref.shape());
    for (std::size_t k = 0; k < y.size(); ++k) EXPECT_NEAR(y[k], ref[k], 1e-12);
  }
}

TEST(Network, MaxPoolAndGlobalAveragePool) {
  Network<double> pool({LayerSpec::max_pool(2, 2)}, {1, 4, 4});
  std::vector<double> v(16);
  for (std::size_t k = 0; k < 16; ++k) v[k] = static_cast<double>((k * 7) % 16);
  const Tensor<double> x(Shape{1, 1, 4, 4}, v);
  const Tensor<double> y = pool.forward(pool.init_params(0), x, StochasticEvalContext<double>::eval()).output;
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  // Rows of x: [0 7 14 5] [12 3 10 1] [8 15 6 13] [4 11 2 9]
  EXPECT_EQ(y.values(), (std::vector<double>{12, 14, 15, 13}));

  Network<double> gap({LayerSpec::global_avg_pool()}, {1, 4, 4});
  const Tensor<double> a = gap.forward(gap.init_params(0), x, StochasticEvalContext<double>::eval()).output;
  EXPECT_DOUBLE_EQ(a[0], 7.5);
}

TEST(Network, LeakyReluSlope) {
  Network<double> net({LayerSpec::leaky_relu(0.1)}, {4});
  const Tensor<double> x(Shape{1, 4}, {-2.0, -0.5, 0.0, 3.0});
  const Tensor<double> y = net.forward(net.init_params(0), x, StochasticEvalContext<double>::eval()).output;
  EXPECT_EQ(y.values(), (std::vector<double>{-0.2, -0.05, 0.0, 3.0}));
}

TEST(Network, MeanOnlyBatchNormTrainAndEval) {
  const LayerSpecList layers{LayerSpec::dense(3, false, true)};
  Network<double> net(layers, {4});
  NetworkParams<double> p = net.init_params(9);
  const Tensor<double> x = random_tensor<double>({16, 4}, 10, -2, 3);
  const ForwardResult<double> f = net.forward(p, x, StochasticEvalContext<double>::train(1));
  const Tensor<double>& bias = p.find("0.dense.bias")->value;
  for (std::size_t o = 0; o < 3; ++o) {
    double mean = 0;
    for (std::size_t n = 0; n < 16; ++n) mean += f.output[n * 3 + o];
    EXPECT_NEAR(mean / 16, bias[o], 1e-12);
  }
  // After one update the bias-corrected running mean equals that batch mean,
  // so eval mode reproduces the train-mode output exactly.
  net.update_running_stats(p, f.tape);
  EXPECT_EQ(p.find("0.dense.running_steps")->value[0], 1.0);
  const Tensor<double> e = net.forward(p, x, StochasticEvalContext<double>::eval()).output;
  for (std::size_t k = 0; k < e.size(); ++k) EXPECT_NEAR(e[k], f.output[k], 1e-12);
}

TEST(Network, RunningMeanIsBiasCorrectedEma) {
  LayerSpec dense = LayerSpec::dense(2, false, true);
  dense.bn_momentum = 0.9;
  Network<double> net({dense}, {2});
  NetworkParams<double> p = net.init_params(4);
  std::vector<double> means;
  double rm = 0;
  for (int step = 0; step < 3; ++step) {
    const Tensor<double> x = random_tensor<double>({8, 2}, 20 + step);
    const ForwardResult<double> f = net.forward(p, x, StochasticEvalContext<double>::train(step));
    net.update_running_stats(p, f.tape);
    rm = 0.9 * rm + 0.1 * f.tape.records[0].batch_mean[0];
  }
  EXPECT_NEAR(p.find("0.dense.running_mean")->value[0], rm, 1e-14);
  EXPECT_EQ(p.find("0.dense.running_steps")->value[0], 3.0);
}

TEST(Network, DropoutIsInvertedAndIdentityAtEval) {
  Network<double> net({LayerSpec::dropout(0.25)}, {1000});
  const Tensor<double> x(Shape{4, 1000}, 2.0);
  const NetworkParams<double> p = net.init_params(0);
  const ForwardResult<double> f = net.forward(p, x, StochasticEvalContext<double>::train(11));
  double sum = 0;
  for (double v : f.output.data()) {
    EXPECT_TRUE(v == 0.0 || std::abs(v - 2.0 / 0.75) < 1e-12);
    sum += v;
  }
  // 4000 Bernoulli(0.75) draws: mean within 5 standard errors of 2.
  EXPECT_NEAR(sum / 4000, 2.0, 5 * 2.0 / 0.75 * std::sqrt(0.75 * 0.25 / 4000));
  EXPECT_EQ(net.forward(p, x, StochasticEvalContext<double>::eval()).output, x);
}

TEST(Network, GaussianNoiseStatistics) {
  Network<double> net({LayerSpec::gaussian_noise(0.15)}, {5000});
  const Tensor<double> x(Shape{1, 5000}, 1.0);
  const NetworkParams<double> p = net.init_params(0);
  const Tensor<double> y = net.forward(p, x, StochasticEvalContext<double>::train(3)).output;
  double m = 0, s = 0;
  for (double v : y.data()) m += v - 1.0;
  m /= 5000;
  for (double v : y.data()) s += (v - 1.0 - m) * (v - 1.0 - m);
  EXPECT_NEAR(m, 0.0, 5 * 0.15 / std::sqrt(5000.0));
  EXPECT_NEAR(std::sqrt(s / 4999), 0.15, 0.01);
  EXPECT_EQ(net.forward(p, x, StochasticEvalContext<double>::eval()).output, x);
}

TEST(Network, SameSeedSameDrawsAndReplay) {
  const LayerSpecList layers{LayerSpec::gaussian_noise(0.3), LayerSpec::dense(8), LayerSpec::leaky_relu(),
                             LayerSpec::dropout(0.5), LayerSpec::dense(3), LayerSpec::softmax()};
  Network<double> net(layers, {4});
  const NetworkParams<double> p = net.init_params(1);
  const Tensor<double> x = random_tensor<double>({6, 4}, 2);
  const ForwardResult<double> a = net.forward(p, x, StochasticEvalContext<double>::train(77));
  const ForwardResult<double> b = net.forward(p, x, StochasticEvalContext<double>::train(77));
  const ForwardResult<double> c = net.forward(p, x, StochasticEvalContext<double>::train(78));
  EXPECT_EQ(a.output, b.output);
  EXPECT_NE(a.output, c.output);
  const ForwardResult<double> r = net.forward(p, x, StochasticEvalContext<double>::replayed(a.tape.masks));
  EXPECT_EQ(r.output, a.output);
}

TEST(Network, IdentityMasksMatchEvalForDeterministicLayers) {
  const LayerSpecList layers{LayerSpec::gaussian_noise(0.3), LayerSpec::dense(8, true, false),
                             LayerSpec::leaky_relu(), LayerSpec::dropout(0.5), LayerSpec::dense(3, true, false),
                             LayerSpec::softmax()};
  Network<double> net(layers, {4});
  const NetworkParams<double> p = net.init_params(1);
  const Tensor<double> x = random_tensor<double>({6, 4}, 2);
  const Tensor<double> r = net.forward(p, x, StochasticEvalContext<double>::replayed(net.identity_masks(6))).output;
  EXPECT_EQ(r, net.forward(p, x, StochasticEvalContext<double>::eval()).output);
}

TEST(Network, ErrorsNameTheProblem) {
  Network<double> net({LayerSpec::dense(2), LayerSpec::softmax()}, {3});
  const NetworkParams<double> p = net.init_params(1);
  EXPECT_THROW(net.forward(p, Tensor<double>(Shape{2, 4}), StochasticEvalContext<double>::eval()), ConfigError);
  Tensor<double> bad(Shape{2, 3}, 0.5);
  bad[1] = std::numeric_limits<double>::quiet_NaN();
  try {
    net.forward(p, bad, StochasticEvalContext<double>::train(1));
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 0 (dense)"), std::string::npos) << e.what();
  }
  Network<double> other({LayerSpec::dense(2, false, false), LayerSpec::softmax()}, {3});
  const ForwardResult<double> f = other.forward(other.init_params(1), Tensor<double>(Shape{2, 3}, 0.1),
                                                StochasticEvalContext<double>::train(1));
  EXPECT_THROW(net.backward(p, f.tape, Tensor<double>(Shape{2, 2})), ConfigError);
}

TEST(Network, InitGainsReproduceHeDraw) {
  Network<double> wn({LayerSpec::dense(50, true, false)}, {200});
  Network<double> plain({LayerSpec::dense(50, false, false)}, {200});
  const Tensor<double> x = random_tensor<double>({3, 200}, 4);
  const auto ctx = StochasticEvalContext<double>::eval();
  const Tensor<double> a = wn.forward(wn.init_params(12), x, ctx).output;
  const Tensor<double> b = plain.forward(plain.init_params(12), x, ctx).output;
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
  // He init: weight variance 2 / fan_in.
  const NetworkParams<double> p = plain.init_params(12);
  double ss = 0;
  for (double v : p.tensors[0].value.data()) ss += v * v;
  EXPECT_NEAR(ss / 10000.0, 2.0 / 200.0, 0.1 * 2.0 / 200.0);
}

TEST(Network, DataDependentInitGivesUnitVariance) {
  const LayerSpecList layers{LayerSpec::dense(16, true, false), LayerSpec::leaky_relu(),
                             LayerSpec::dense(4, true, false), LayerSpec::softmax()};
  Network<double> net(layers, {3});
  NetworkParams<double> p = net.init_params(2);
  const Tensor<double> x = random_tensor<double>({200, 3}, 5, -4, 9);
  net.data_dependent_init(p, x);
  const ForwardResult<double> f = net.forward(p, x, StochasticEvalContext<double>::eval());
  const Tensor<double>& pre = f.tape.records[1].input;  // output of layer 0
  for (std::size_t o = 0; o < 16; ++o) {
    double m = 0, s = 0;
    for (std::size_t n = 0; n < 200; ++n) m += pre[n * 16 + o];
    m /= 200;
    for (std::size_t n = 0; n < 200; ++n) s += (pre[n * 16 + o] - m) * (pre[n * 16 + o] - m);
    EXPECT_NEAR(m, 0.0, 1e-9);
    EXPECT_NEAR(s / 200, 1.0, 1e-9);
  }
}

struct GradCase {
  const char* name;
  LayerSpecList layers;
  Shape input;
};

class LayerGradients : public ::testing::TestWithParam<int> {};

TEST_P(LayerGradients, MatchCentralDifferences) {
  const std::vector<GradCase> cases{
      {"dense_wn_bn", {LayerSpec::dense(5), LayerSpec::leaky_relu(), LayerSpec::dense(3), LayerSpec::softmax()}, {4}},
      {"dense_plain", {LayerSpec::dense(5, false, false), LayerSpec::dense(3, false, false), LayerSpec::softmax()}, {4}},
      {"noise_dropout",
       {LayerSpec::gaussian_noise(0.2), LayerSpec::dense(6), LayerSpec::leaky_relu(), LayerSpec::dropout(0.4),
        LayerSpec::dense(3), LayerSpec::softmax()},
       {4}},
      {"conv_same_pool",
       {LayerSpec::conv(3, 3, Padding::kSame), LayerSpec::leaky_relu(), LayerSpec::max_pool(2, 2),
        LayerSpec::global_avg_pool(), LayerSpec::dense(3), LayerSpec::softmax()},
       {2, 4, 4}},
      {"conv_valid_1x1",
       {LayerSpec::conv(3, 3, Padding::kValid, true, false), LayerSpec::leaky_relu(),
        LayerSpec::conv(1, 2, Padding::kSame), LayerSpec::global_avg_pool(), LayerSpec::softmax()},
       {2, 5, 5}},
  };
  const GradCase& c = cases[static_cast<std::size_t>(GetParam())];
  Shape batch_shape{6};
  batch_shape.insert(batch_shape.end(), c.input.begin(), c.input.end());
  LossSpec loss;
  loss.labels = {0, kUnlabeled, 2, 1, kUnlabeled, 0};
  if (c.layers[c.layers.size() - 2].kind == LayerKind::kGlobalAvgPool) loss.labels = {0, kUnlabeled, 1, 1, kUnlabeled, 0};
  loss.unsup_weight = 3.0;
  loss.target = LossSpec::Target::kSecondBranch;
  const GradientCheckResult r = gradient_check(c.layers, random_tensor<double>(batch_shape, 3), loss, 1e-6, 17, 300);
  EXPECT_GT(r.coordinates, 0u);
  EXPECT_LT(r.max_relative_error, 1e-5) << c.name;
}

INSTANTIATE_TEST_SUITE_P(Layers, LayerGradients, ::testing::Range(0, 5));

TEST(GradientCheck, RejectsNonPositiveStep) {
  LossSpec loss;
  loss.labels = {0};
  EXPECT_THROW(gradient_check({LayerSpec::dense(2), LayerSpec::softmax()}, Tensor<double>(Shape{1, 2}), loss, 0.0, 1),
               ConfigError);
}

TEST(GradientCheck, FixedTargetUsesEveryCoordinateWhenFew) {
  LossSpec loss;
  loss.labels = {0, 1};
  loss.unsup_weight = 2.0;
  loss.target = LossSpec::Target::kFixed;
  loss.fixed_target = Tensor<double>(Shape{2, 2}, {0.9, 0.1, 0.3, 0.7});
  const GradientCheckResult r =
      gradient_check({LayerSpec::dense(2, false, false), LayerSpec::softmax()}, random_tensor<double>({2, 3}, 1), loss,
                     1e-6, 2);
  EXPECT_EQ(r.coordinates, 8u);  // 6 weights + 2 biases, fewer than the sample size
  EXPECT_LT(r.max_relative_error, 1e-6);
}
