#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "selfens/serialize.hpp"
#include "selfens/tensor.hpp"

namespace selfens {

enum class Pairing {
  kIndependent,    // both branches draw every transformation independently
  kSharedPerPair,  // one flip decision per pair; translations and noise independent
};

Pairing parse_pairing(std::string_view name);
std::string_view pairing_name(Pairing pairing);

struct AugmentPolicy {
  int max_translation = 0;  // shifts drawn uniformly from [-max, max] per axis
  bool flip = false;        // horizontal mirror with probability 1/2
  double noise_sigma = 0.0;
  Pairing pairing = Pairing::kIndependent;

  void validate() const;
  bool is_identity() const { return max_translation == 0 && !flip && noise_sigma == 0.0; }
  friend bool operator==(const AugmentPolicy&, const AugmentPolicy&) = default;
};

/// Augments every item of a (batch, ...) tensor. Item i draws from a stream
/// derived from (seed, i). Image items are (channels, height, width); flat
/// items only accept noise. Translations fill uncovered pixels with zeros.
template <typename T>
Tensor<T> apply(const AugmentPolicy& policy, const Tensor<T>& batch, std::uint64_t seed);

/// Two realizations of the same batch, honoring `policy.pairing`. The first
/// equals apply(policy, batch, derive_seed(seed, {0})).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> apply_pair(const AugmentPolicy& policy, const Tensor<T>& batch, std::uint64_t seed);

/// Shifts one (channels, height, width) image by (dx, dy) pixels: positive dx
/// moves content right, positive dy moves it down.
template <typename T>
void translate_image(std::span<const T> src, std::span<T> dst, const Shape& item, int dx, int dy);

template <typename T>
void flip_image(std::span<T> image, const Shape& item);

struct ZcaTransform {
  std::vector<double> mean;     // D
  Tensor<double> whitening;     // (D, D), symmetric
  double epsilon = 1e-5;
};

/// Fits mean and W = U diag(1 / sqrt(lambda + eps)) U^T on the flattened
/// items. Throws DataError for a singular covariance when eps == 0.
ZcaTransform zca_fit(const Tensor<float>& inputs, double epsilon = 1e-5);
Tensor<float> zca_apply(const ZcaTransform& transform, const Tensor<float>& inputs);

TensorRecords zca_records(const ZcaTransform& transform);
ZcaTransform zca_from_records(const TensorRecords& records);

/// Each item shifted and scaled to zero mean and unit (population) variance.
/// Items whose variance is below 1e-8 are divided by sqrt(1e-8) instead.
Tensor<float> standardize_per_image(const Tensor<float>& inputs);

}  // namespace selfens
