#pragma once

#include <cstdint>
#include <vector>

#include "selfens/network.hpp"

namespace selfens {

/// Moment accumulators for every parameter tensor (empty for non-trainable
/// ones) plus the step counter.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t step = 0;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const NetworkParams<T>& params, double beta2 = 0.999, double epsilon = 1e-8);
};

/// One Adam update with bias-corrected moments:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
/// Parameters are left untouched when lr == 0. Throws DivergenceError on a
/// non-finite gradient before modifying anything.
template <typename T>
void adam_step(NetworkParams<T>& params, const Gradients<T>& grads, AdamState<T>& state, double lr,
               double beta1);

/// Throws ConfigError unless 0 < beta2 < 1.
template <typename T>
void set_beta2(AdamState<T>& state, double beta2);

extern template struct AdamState<float>;
extern template struct AdamState<double>;

}  // namespace selfens
