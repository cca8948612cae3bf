#include <gtest/gtest.h>

#include <cmath>

#include "selfens/adam.hpp"
#include "test_support.hpp"

using namespace selfens;

namespace {

NetworkParams<double> scalar_params(double value) {
  NetworkParams<double> p;
  p.tensors.push_back({"x", Tensor<double>(Shape{1}, {value}), true});
  p.tensors.push_back({"stat", Tensor<double>(Shape{1}, {7.0}), false});
  return p;
}

Gradients<double> scalar_grad(double g) { return {Tensor<double>(Shape{1}, {g}), Tensor<double>(Shape{1})}; }

}  // namespace

TEST(Adam, MatchesScalarReference) {
  // Textbook Adam written out longhand, with beta1 varying per step.
  NetworkParams<double> p = scalar_params(1.5);
  AdamState<double> s = AdamState<double>::for_params(p, 0.99, 1e-8);
  double x = 1.5, m = 0, v = 0;
  for (int t = 1; t <= 40; ++t) {
    const double g = std::sin(0.3 * t) + 0.1 * x;
    const double lr = 0.003 * (t % 5 == 0 ? 0.5 : 1.0);
    const double b1 = 0.9 - 0.01 * (t % 7);
    m = b1 * m + (1 - b1) * g;
    v = 0.99 * v + 0.01 * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(0.99, t));
    x -= lr * mhat / (std::sqrt(vhat) + 1e-8);
    adam_step(p, scalar_grad(std::sin(0.3 * t) + 0.1 * p.tensors[0].value[0]), s, lr, b1);
    ASSERT_NEAR(p.tensors[0].value[0], x, 1e-13) << "step " << t;
  }
  EXPECT_EQ(s.step, 40u);
  EXPECT_EQ(p.tensors[1].value[0], 7.0);  // non-trainable entries never move
}

TEST(Adam, FirstStepMovesByLearningRate) {
  NetworkParams<double> p = scalar_params(0.0);
  AdamState<double> s = AdamState<double>::for_params(p);
  adam_step(p, scalar_grad(-4.0), s, 0.01, 0.9);
  EXPECT_NEAR(p.tensors[0].value[0], 0.01, 1e-9);
}

TEST(Adam, ZeroLearningRateLeavesParametersButUpdatesMoments) {
  NetworkParams<double> p = scalar_params(2.0);
  AdamState<double> s = AdamState<double>::for_params(p);
  adam_step(p, scalar_grad(3.0), s, 0.0, 0.9);
  EXPECT_EQ(p.tensors[0].value[0], 2.0);
  EXPECT_NEAR(s.m[0][0], 0.3, 1e-15);
  EXPECT_NEAR(s.v[0][0], 0.009, 1e-15);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, NonFiniteGradientAbortsUntouched) {
  NetworkParams<double> p = scalar_params(2.0);
  AdamState<double> s = AdamState<double>::for_params(p);
  try {
    adam_step(p, scalar_grad(std::numeric_limits<double>::infinity()), s, 0.1, 0.9);
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("beta2"), std::string::npos);
  }
  EXPECT_EQ(p.tensors[0].value[0], 2.0);
  EXPECT_EQ(s.step, 0u);
  EXPECT_EQ(s.m[0][0], 0.0);
}

TEST(Adam, Validation) {
  NetworkParams<double> p = scalar_params(0.0);
  EXPECT_THROW(AdamState<double>::for_params(p, 1.0), ConfigError);
  EXPECT_THROW(AdamState<double>::for_params(p, 0.999, 0.0), ConfigError);
  AdamState<double> s = AdamState<double>::for_params(p);
  EXPECT_THROW(set_beta2(s, 0.0), ConfigError);
  set_beta2(s, 0.99);
  EXPECT_EQ(s.beta2, 0.99);
  EXPECT_THROW(adam_step(p, Gradients<double>{Tensor<double>(Shape{1})}, s, 0.1, 0.9), ConfigError);
}

TEST(Adam, FloatTracksDouble) {
  NetworkParams<float> pf;
  pf.tensors.push_back({"w", selfens::testing::random_tensor<float>({10}, 1), true});
  NetworkParams<double> pd;
  pd.tensors.push_back({"w", pf.tensors[0].value.cast<double>(), true});
  AdamState<float> sf = AdamState<float>::for_params(pf);
  AdamState<double> sd = AdamState<double>::for_params(pd);
  for (int t = 0; t < 20; ++t) {
    const Tensor<double> g = selfens::testing::random_tensor<double>({10}, 100 + t);
    adam_step(pf, Gradients<float>{g.cast<float>()}, sf, 0.003, 0.9);
    adam_step(pd, Gradients<double>{g}, sd, 0.003, 0.9);
  }
  for (std::size_t j = 0; j < 10; ++j) EXPECT_NEAR(pf.tensors[0].value[j], pd.tensors[0].value[j], 1e-5);
}
