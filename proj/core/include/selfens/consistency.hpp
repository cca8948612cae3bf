#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "selfens/tensor.hpp"

namespace selfens {

inline constexpr int kUnlabeled = -1;

/// Divisor of the supervised term: the number of labeled rows in the batch
/// (default) or the full batch size.
enum class SupervisedNorm { kLabeledRows, kBatch };

template <typename T>
struct LossValue {
  double value = 0.0;
  Tensor<T> grad;          // d(value)/d(predictions)
  std::size_t clamped = 0; // labeled rows whose p[y] hit the 1e-12 floor
};

/// Mean of -log p[y] over rows whose label is not kUnlabeled; 0 (with zero
/// gradient) when the batch holds no labeled row.
template <typename T>
LossValue<T> cross_entropy_masked(const Tensor<T>& predictions, std::span<const int> labels,
                                  SupervisedNorm norm = SupervisedNorm::kLabeledRows);

/// (1 / (C * batch)) * sum_i |z_i - target_i|^2 over all rows. The gradient
/// is with respect to z; the gradient with respect to target is its negation.
template <typename T>
LossValue<T> consistency_mse(const Tensor<T>& z, const Tensor<T>& target);

struct LossBreakdown {
  double supervised = 0.0;
  double unsupervised = 0.0;
  double weighted_total = 0.0;
  double w = 0.0;
};

inline LossBreakdown combine_losses(double supervised, double unsupervised, double w) {
  return {supervised, unsupervised, supervised + w * unsupervised, w};
}

/// Temporal-ensemble accumulator Z (rows x classes) with one update counter
/// per row. Rows start at zero with counter 0.
template <typename T>
class EnsembleState {
 public:
  EnsembleState() = default;
  EnsembleState(std::size_t rows, std::size_t classes, double alpha);

  std::size_t rows() const { return z_.empty() ? 0 : z_.dim(0); }
  std::size_t classes() const { return z_.empty() ? 0 : z_.dim(1); }
  double alpha() const { return alpha_; }
  std::uint64_t epoch() const { return epoch_; }
  const Tensor<T>& z() const { return z_; }
  const std::vector<std::uint64_t>& counters() const { return counters_; }

  /// Z_i <- alpha Z_i + (1 - alpha) z_i for every listed row; counters += 1.
  /// `values` holds one row per index. Indices must be distinct.
  void update(std::span<const std::size_t> indices, const Tensor<T>& values);

  /// z~_i = Z_i / (1 - alpha^t_i). Throws StartupError for rows with t_i = 0.
  Tensor<T> targets(std::span<const std::size_t> indices) const;

  void advance_epoch() { ++epoch_; }

  /// Reassembles a state read back from disk.
  static EnsembleState from_parts(Tensor<T> z, double alpha, std::vector<std::uint64_t> counters,
                                  std::uint64_t epoch);

 private:
  void check_index(std::size_t i) const;

  Tensor<T> z_;
  double alpha_ = 0.6;
  std::vector<std::uint64_t> counters_;
  std::uint64_t epoch_ = 0;
};

template <typename T>
void ensemble_update(EnsembleState<T>& state, std::span<const std::size_t> indices, const Tensor<T>& values) {
  state.update(indices, values);
}

template <typename T>
Tensor<T> targets_from_ensemble(const EnsembleState<T>& state, std::span<const std::size_t> indices) {
  return state.targets(indices);
}

extern template class EnsembleState<float>;
extern template class EnsembleState<double>;

}  // namespace selfens
