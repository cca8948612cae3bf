#include "selfens/consistency.hpp"

#include <algorithm>
#include <cmath>

#include "selfens/errors.hpp"

namespace selfens {

namespace {
constexpr double kProbFloor = 1e-12;

template <typename T>
void check_matrix(const Tensor<T>& t, const char* what) {
  if (t.rank() != 2) throw ConfigError(std::string(what) + " must be (batch, classes), got " + shape_string(t.shape()));
}
}  // namespace

template <typename T>
LossValue<T> cross_entropy_masked(const Tensor<T>& predictions, std::span<const int> labels, SupervisedNorm norm) {
  check_matrix(predictions, "predictions");
  const std::size_t batch = predictions.dim(0);
  const std::size_t classes = predictions.dim(1);
  if (labels.size() != batch) throw ConfigError("label count does not match batch size");
  LossValue<T> out;
  out.grad = Tensor<T>(predictions.shape());
  std::size_t labeled = 0;
  for (int y : labels) {
    if (y == kUnlabeled) continue;
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ConfigError("label " + std::to_string(y) + " out of range for " + std::to_string(classes) + " classes");
    }
    ++labeled;
  }
  if (labeled == 0) return out;
  const double denom = norm == SupervisedNorm::kBatch ? static_cast<double>(batch) : static_cast<double>(labeled);
  double sum = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    if (labels[n] == kUnlabeled) continue;
    const std::size_t k = n * classes + static_cast<std::size_t>(labels[n]);
    double p = static_cast<double>(predictions[k]);
    if (p < kProbFloor) {
      p = kProbFloor;
      ++out.clamped;
    }
    sum -= std::log(p);
    out.grad[k] = static_cast<T>(-1.0 / (p * denom));
  }
  out.value = sum / denom;
  return out;
}

template <typename T>
LossValue<T> consistency_mse(const Tensor<T>& z, const Tensor<T>& target) {
  check_matrix(z, "z");
  if (z.shape() != target.shape()) {
    throw ConfigError("consistency target shape " + shape_string(target.shape()) + " differs from " +
                      shape_string(z.shape()));
  }
  const double norm = static_cast<double>(z.dim(0) * z.dim(1));
  LossValue<T> out;
  out.grad = Tensor<T>(z.shape());
  double sum = 0.0;
  const T scale = static_cast<T>(2.0 / norm);
  for (std::size_t k = 0; k < z.size(); ++k) {
    const T d = z[k] - target[k];
    sum += static_cast<double>(d) * static_cast<double>(d);
    out.grad[k] = scale * d;
  }
  out.value = sum / norm;
  return out;
}

template <typename T>
EnsembleState<T>::EnsembleState(std::size_t rows, std::size_t classes, double alpha)
    : z_(Shape{rows, classes}), alpha_(alpha), counters_(rows, 0) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("ensemble alpha must be in [0,1)");
  if (classes == 0) throw ConfigError("ensemble needs at least one class");
}

template <typename T>
EnsembleState<T> EnsembleState<T>::from_parts(Tensor<T> z, double alpha, std::vector<std::uint64_t> counters,
                                              std::uint64_t epoch) {
  if (z.rank() != 2 || counters.size() != z.dim(0)) throw FormatError("ensemble counters do not match Z rows");
  EnsembleState s(z.dim(0), z.dim(1), alpha);
  s.z_ = std::move(z);
  s.counters_ = std::move(counters);
  s.epoch_ = epoch;
  return s;
}

template <typename T>
void EnsembleState<T>::check_index(std::size_t i) const {
  if (i >= rows()) {
    throw ConfigError("ensemble row " + std::to_string(i) + " out of range (" + std::to_string(rows()) + " rows)");
  }
}

template <typename T>
void EnsembleState<T>::update(std::span<const std::size_t> indices, const Tensor<T>& values) {
  if (values.rank() != 2 || values.dim(0) != indices.size() || values.dim(1) != classes()) {
    throw ConfigError("ensemble update expects (" + std::to_string(indices.size()) + "," +
                      std::to_string(classes()) + ") values, got " + shape_string(values.shape()));
  }
  for (std::size_t i : indices) check_index(i);
  const T a = static_cast<T>(alpha_);
  const T b = static_cast<T>(1.0 - alpha_);
  const std::size_t c = classes();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    T* row = z_.raw() + indices[r] * c;
    const T* v = values.raw() + r * c;
    for (std::size_t k = 0; k < c; ++k) row[k] = a * row[k] + b * v[k];
    ++counters_[indices[r]];
  }
}

template <typename T>
Tensor<T> EnsembleState<T>::targets(std::span<const std::size_t> indices) const {
  const std::size_t c = classes();
  Tensor<T> out(Shape{indices.size(), c});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    check_index(i);
    if (counters_[i] == 0) {
      throw StartupError("ensemble row " + std::to_string(i) +
                         " has no accumulated predictions yet; the unsupervised weight must be zero until it does");
    }
    const double corr = 1.0 - std::pow(alpha_, static_cast<double>(counters_[i]));
    const T* row = z_.raw() + i * c;
    for (std::size_t k = 0; k < c; ++k) {
      out[r * c + k] = static_cast<T>(static_cast<double>(row[k]) / corr);
    }
  }
  return out;
}

template LossValue<float> cross_entropy_masked(const Tensor<float>&, std::span<const int>, SupervisedNorm);
template LossValue<double> cross_entropy_masked(const Tensor<double>&, std::span<const int>, SupervisedNorm);
template LossValue<float> consistency_mse(const Tensor<float>&, const Tensor<float>&);
template LossValue<double> consistency_mse(const Tensor<double>&, const Tensor<double>&);
template class EnsembleState<float>;
template class EnsembleState<double>;

}  // namespace selfens
