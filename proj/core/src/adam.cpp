#include "selfens/adam.hpp"

#include <cmath>

namespace selfens {

template <typename T>
AdamState<T> AdamState<T>::for_params(const NetworkParams<T>& params, double beta2, double epsilon) {
  AdamState<T> s;
  set_beta2(s, beta2);
  if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be > 0");
  s.epsilon = epsilon;
  for (const auto& p : params.tensors) {
    s.m.emplace_back(p.trainable ? p.value.shape() : Shape{0});
    s.v.emplace_back(p.trainable ? p.value.shape() : Shape{0});
  }
  return s;
}

template <typename T>
void set_beta2(AdamState<T>& state, double beta2) {
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("adam beta2 must be in (0,1)");
  state.beta2 = beta2;
}

template <typename T>
void adam_step(NetworkParams<T>& params, const Gradients<T>& grads, AdamState<T>& state, double lr,
               double beta1) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw ConfigError("adam: gradient/state count does not match parameters");
  }
  if (!(lr >= 0.0)) throw ConfigError("adam: learning rate must be >= 0");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params.tensors[k].trainable) continue;
    if (grads[k].shape() != params.tensors[k].value.shape() || state.m[k].shape() != grads[k].shape()) {
      throw ConfigError("adam: shape mismatch for " + params.tensors[k].name);
    }
    if (!grads[k].all_finite()) {
      throw DivergenceError("non-finite gradient for " + params.tensors[k].name +
                            " (consider a lower Adam beta2, e.g. 0.99)");
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const T b1 = static_cast<T>(beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T step = static_cast<T>(lr / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(state.epsilon);
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params.tensors[k].trainable) continue;
    auto p = params.tensors[k].value.data();
    const auto g = grads[k].data();
    auto m = state.m[k].data();
    auto v = state.v[k].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (T{1} - b1) * g[j];
      v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
      if (lr != 0.0) p[j] -= step * m[j] / (std::sqrt(v[j] * inv_c2) + eps);
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(NetworkParams<float>&, const Gradients<float>&, AdamState<float>&, double, double);
template void adam_step(NetworkParams<double>&, const Gradients<double>&, AdamState<double>&, double, double);
template void set_beta2(AdamState<float>&, double);
template void set_beta2(AdamState<double>&, double);

}  // namespace selfens
