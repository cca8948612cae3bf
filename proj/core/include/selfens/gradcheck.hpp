#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "selfens/consistency.hpp"
#include "selfens/layers.hpp"

namespace selfens {

/// Loss evaluated by gradient_check on the first stochastic branch z:
///   CE(z, labels) + w * MSE(z, target)
/// where target is either a fixed matrix (temporal ensembling) or a second
/// stochastic evaluation of the same batch (Pi-model, gradient through both).
struct LossSpec {
  enum class Target { kNone, kFixed, kSecondBranch };

  std::vector<int> labels;
  double unsup_weight = 0.0;
  Target target = Target::kNone;
  std::optional<Tensor<double>> fixed_target;
  SupervisedNorm norm = SupervisedNorm::kLabeledRows;
};

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

/// Compares backward() against central differences with step `eps` on a
/// random sample of at least `samples` trainable coordinates (all of them if
/// fewer exist). Masks are recorded once and replayed for every perturbed
/// evaluation. Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradientCheckResult gradient_check(const LayerSpecList& layers, const Tensor<double>& batch,
                                   const LossSpec& loss, double eps, std::uint64_t seed,
                                   std::size_t samples = 200);

}  // namespace selfens
