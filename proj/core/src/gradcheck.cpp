#include "selfens/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "selfens/network.hpp"
#include "selfens/rng.hpp"

namespace selfens {

namespace {

struct Evaluation {
  double loss = 0.0;
  Tensor<double> grad_a;
  Tensor<double> grad_b;
};

Evaluation evaluate(const Network<double>& net, const NetworkParams<double>& params, const Tensor<double>& batch,
                    const LossSpec& spec, const StochasticEvalContext<double>& ctx_a,
                    const StochasticEvalContext<double>& ctx_b, ActivationTape<double>* tape_a,
                    ActivationTape<double>* tape_b) {
  ForwardResult<double> a = net.forward(params, batch, ctx_a);
  LossValue<double> ce = cross_entropy_masked(a.output, spec.labels, spec.norm);
  Evaluation ev;
  ev.loss = ce.value;
  ev.grad_a = std::move(ce.grad);
  if (spec.target != LossSpec::Target::kNone && spec.unsup_weight != 0.0) {
    Tensor<double> target;
    ForwardResult<double> b;
    if (spec.target == LossSpec::Target::kFixed) {
      if (!spec.fixed_target) throw ConfigError("fixed consistency target missing");
      target = *spec.fixed_target;
    } else {
      b = net.forward(params, batch, ctx_b);
      target = b.output;
    }
    const LossValue<double> mse = consistency_mse(a.output, target);
    ev.loss += spec.unsup_weight * mse.value;
    for (std::size_t k = 0; k < ev.grad_a.size(); ++k) ev.grad_a[k] += spec.unsup_weight * mse.grad[k];
    if (spec.target == LossSpec::Target::kSecondBranch) {
      ev.grad_b = Tensor<double>(mse.grad.shape());
      for (std::size_t k = 0; k < ev.grad_b.size(); ++k) ev.grad_b[k] = -spec.unsup_weight * mse.grad[k];
      if (tape_b != nullptr) *tape_b = std::move(b.tape);
    }
  }
  if (tape_a != nullptr) *tape_a = std::move(a.tape);
  return ev;
}

}  // namespace

GradientCheckResult gradient_check(const LayerSpecList& layers, const Tensor<double>& batch, const LossSpec& loss,
                                   double eps, std::uint64_t seed, std::size_t samples) {
  if (!(eps > 0.0)) throw ConfigError("gradient_check: eps must be > 0");
  if (batch.rank() < 2) throw ConfigError("gradient_check: batch must have a leading batch dimension");
  const Shape item(batch.shape().begin() + 1, batch.shape().end());
  const Network<double> net(layers, item);
  NetworkParams<double> params = net.init_params(derive_seed(seed, {1}));

  // Record one draw per branch, then replay it for every perturbed evaluation.
  ActivationTape<double> tape_a;
  ActivationTape<double> tape_b;
  const auto fresh_a = StochasticEvalContext<double>::train(derive_seed(seed, {2}));
  const auto fresh_b = StochasticEvalContext<double>::train(derive_seed(seed, {3}));
  const Evaluation base = evaluate(net, params, batch, loss, fresh_a, fresh_b, &tape_a, &tape_b);
  const auto ctx_a = StochasticEvalContext<double>::replayed(tape_a.masks);
  const auto ctx_b = StochasticEvalContext<double>::replayed(tape_b.masks);

  Gradients<double> analytic = net.backward(params, tape_a, base.grad_a);
  if (!base.grad_b.empty()) {
    const Gradients<double> gb = net.backward(params, tape_b, base.grad_b);
    for (std::size_t k = 0; k < analytic.size(); ++k) {
      for (std::size_t j = 0; j < analytic[k].size(); ++j) analytic[k][j] += gb[k][j];
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params.tensors[k].trainable) continue;
    for (std::size_t j = 0; j < params.tensors[k].value.size(); ++j) coords.emplace_back(k, j);
  }
  Rng rng(derive_seed(seed, {4}));
  std::shuffle(coords.begin(), coords.end(), rng);
  if (coords.size() > samples) coords.resize(samples);

  GradientCheckResult result;
  result.coordinates = coords.size();
  for (const auto& [k, j] : coords) {
    double& p = params.tensors[k].value[j];
    const double saved = p;
    p = saved + eps;
    const double plus = evaluate(net, params, batch, loss, ctx_a, ctx_b, nullptr, nullptr).loss;
    p = saved - eps;
    const double minus = evaluate(net, params, batch, loss, ctx_a, ctx_b, nullptr, nullptr).loss;
    p = saved;
    const double numeric = (plus - minus) / (2.0 * eps);
    const double a = analytic[k][j];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(a - numeric) / denom);
  }
  return result;
}

}  // namespace selfens
