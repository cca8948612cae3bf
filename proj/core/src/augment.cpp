#include "selfens/augment.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <random>

#include "selfens/rng.hpp"

namespace selfens {

namespace {

constexpr double kVarianceFloor = 1e-8;

struct ItemSeeds {
  std::uint64_t translate, flip, noise;
};

ItemSeeds item_seeds(std::uint64_t seed, std::size_t item) {
  const std::uint64_t s = derive_seed(seed, {item});
  return {derive_seed(s, {1}), derive_seed(s, {2}), derive_seed(s, {3})};
}

bool draw_flip(std::uint64_t seed) {
  Rng rng(seed);
  return std::bernoulli_distribution(0.5)(rng);
}

template <typename T>
void augment_item(const AugmentPolicy& policy, std::span<const T> src, std::span<T> dst, const Shape& item,
                  const ItemSeeds& seeds, std::optional<bool> forced_flip) {
  if (item.size() == 3 && policy.max_translation > 0) {
    Rng rng(seeds.translate);
    std::uniform_int_distribution<int> shift(-policy.max_translation, policy.max_translation);
    const int dx = shift(rng);
    const int dy = shift(rng);
    translate_image<T>(src, dst, item, dx, dy);
  } else {
    std::copy(src.begin(), src.end(), dst.begin());
  }
  if (policy.flip) {
    const bool flip = forced_flip.value_or(draw_flip(seeds.flip));
    if (flip) flip_image<T>(dst, item);
  }
  if (policy.noise_sigma > 0.0) {
    Rng rng(seeds.noise);
    std::normal_distribution<double> noise(0.0, policy.noise_sigma);
    for (auto& v : dst) v += static_cast<T>(noise(rng));
  }
}

void check_batch(const AugmentPolicy& policy, const Shape& shape) {
  policy.validate();
  if (shape.size() < 2) throw ConfigError("augmentation expects a (batch, ...) tensor");
  const Shape item(shape.begin() + 1, shape.end());
  const bool image = item.size() == 3;
  if (!image && (policy.max_translation != 0 || policy.flip)) {
    throw ConfigError("translation and flips need (channels,height,width) items, got " + shape_string(item));
  }
  if (image && (static_cast<std::size_t>(policy.max_translation) >= item[1] ||
                static_cast<std::size_t>(policy.max_translation) >= item[2])) {
    throw ConfigError("translation range " + std::to_string(policy.max_translation) + " exceeds image extent " +
                      shape_string(item));
  }
}

}  // namespace

Pairing parse_pairing(std::string_view name) {
  if (name == "independent") return Pairing::kIndependent;
  if (name == "shared_per_pair") return Pairing::kSharedPerPair;
  throw ConfigError("unknown pairing '" + std::string(name) + "' (expected independent or shared_per_pair)");
}

std::string_view pairing_name(Pairing pairing) {
  return pairing == Pairing::kIndependent ? "independent" : "shared_per_pair";
}

void AugmentPolicy::validate() const {
  if (max_translation < 0) throw ConfigError("augment.translate must be >= 0");
  if (!(noise_sigma >= 0.0)) throw ConfigError("augment.noise must be >= 0");
}

template <typename T>
void translate_image(std::span<const T> src, std::span<T> dst, const Shape& item, int dx, int dy) {
  const auto c = static_cast<std::ptrdiff_t>(item[0]);
  const auto h = static_cast<std::ptrdiff_t>(item[1]);
  const auto w = static_cast<std::ptrdiff_t>(item[2]);
  for (std::ptrdiff_t ch = 0; ch < c; ++ch) {
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      const std::ptrdiff_t sy = y - dy;
      for (std::ptrdiff_t x = 0; x < w; ++x) {
        const std::ptrdiff_t sx = x - dx;
        const bool inside = sy >= 0 && sy < h && sx >= 0 && sx < w;
        dst[static_cast<std::size_t>((ch * h + y) * w + x)] =
            inside ? src[static_cast<std::size_t>((ch * h + sy) * w + sx)] : T{0};
      }
    }
  }
}

template <typename T>
void flip_image(std::span<T> image, const Shape& item) {
  const std::size_t rows = item[0] * item[1];
  const std::size_t w = item[2];
  for (std::size_t r = 0; r < rows; ++r) {
    std::reverse(image.begin() + static_cast<std::ptrdiff_t>(r * w),
                 image.begin() + static_cast<std::ptrdiff_t>((r + 1) * w));
  }
}

template <typename T>
Tensor<T> apply(const AugmentPolicy& policy, const Tensor<T>& batch, std::uint64_t seed) {
  check_batch(policy, batch.shape());
  if (policy.is_identity()) return batch;
  const Shape item(batch.shape().begin() + 1, batch.shape().end());
  Tensor<T> out(batch.shape());
  for (std::size_t i = 0; i < batch.dim(0); ++i) {
    augment_item<T>(policy, batch.item(i), out.item(i), item, item_seeds(seed, i), std::nullopt);
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> apply_pair(const AugmentPolicy& policy, const Tensor<T>& batch, std::uint64_t seed) {
  check_batch(policy, batch.shape());
  if (policy.is_identity()) return {batch, batch};
  const Shape item(batch.shape().begin() + 1, batch.shape().end());
  Tensor<T> a(batch.shape());
  Tensor<T> b(batch.shape());
  const std::uint64_t seed_a = derive_seed(seed, {0});
  const std::uint64_t seed_b = derive_seed(seed, {1});
  for (std::size_t i = 0; i < batch.dim(0); ++i) {
    const ItemSeeds sa = item_seeds(seed_a, i);
    // Branch a always draws exactly what apply(policy, batch, seed_a) would;
    // a shared pair reuses its flip for branch b.
    std::optional<bool> flip;
    if (policy.pairing == Pairing::kSharedPerPair && policy.flip) flip = draw_flip(sa.flip);
    augment_item<T>(policy, batch.item(i), a.item(i), item, sa, std::nullopt);
    augment_item<T>(policy, batch.item(i), b.item(i), item, item_seeds(seed_b, i), flip);
  }
  return {std::move(a), std::move(b)};
}

ZcaTransform zca_fit(const Tensor<float>& inputs, double epsilon) {
  if (!(epsilon >= 0.0)) throw ConfigError("zca epsilon must be >= 0");
  if (inputs.rank() < 2 || inputs.dim(0) == 0) throw DataError("zca needs a non-empty (N, ...) stack");
  const std::size_t n = inputs.dim(0);
  const std::size_t d = inputs.item_size();
  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x(i, j) = inputs[i * d + j];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw DataError("zca eigendecomposition failed");
  const Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(0.0);
  if (epsilon == 0.0) {
    const double scale = std::max(1.0, lambda.maxCoeff());
    if (lambda.minCoeff() <= 1e-12 * scale) {
      throw DataError("zca covariance is singular; use a positive epsilon");
    }
  }
  const Eigen::VectorXd inv_sqrt = (lambda.array() + epsilon).rsqrt().matrix();
  const Eigen::MatrixXd& u = eig.eigenvectors();
  Eigen::MatrixXd w = u * inv_sqrt.asDiagonal() * u.transpose();
  w = 0.5 * (w + w.transpose());

  ZcaTransform t;
  t.epsilon = epsilon;
  t.mean.assign(mean.data(), mean.data() + d);
  t.whitening = Tensor<double>(Shape{d, d});
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d; ++c) t.whitening[r * d + c] = w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }
  return t;
}

Tensor<float> zca_apply(const ZcaTransform& transform, const Tensor<float>& inputs) {
  const std::size_t d = transform.mean.size();
  if (inputs.rank() < 2 || inputs.item_size() != d) {
    throw ConfigError("zca transform of dimension " + std::to_string(d) + " cannot apply to " +
                      shape_string(inputs.shape()));
  }
  const std::size_t n = inputs.dim(0);
  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x(i, j) = inputs[i * d + j] - transform.mean[j];
  }
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(
      transform.whitening.raw(), d, d);
  const Eigen::MatrixXd y = x * w;  // W is symmetric
  Tensor<float> out(inputs.shape());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = static_cast<float>(y(i, j));
  }
  return out;
}

TensorRecords zca_records(const ZcaTransform& transform) {
  Tensor<double> mean(Shape{transform.mean.size()}, transform.mean);
  return {{"zca.mean", mean.cast<float>()},
          {"zca.whitening", transform.whitening.cast<float>()},
          {"zca.epsilon", Tensor<float>(Shape{1}, {static_cast<float>(transform.epsilon)})}};
}

ZcaTransform zca_from_records(const TensorRecords& records) {
  ZcaTransform t;
  const Tensor<float>& mean = require_record(records, "zca.mean");
  t.mean.assign(mean.data().begin(), mean.data().end());
  t.whitening = require_record(records, "zca.whitening").cast<double>();
  t.epsilon = require_record(records, "zca.epsilon")[0];
  if (t.whitening.rank() != 2 || t.whitening.dim(0) != t.mean.size() || t.whitening.dim(1) != t.mean.size()) {
    throw FormatError("zca whitening matrix does not match the mean vector");
  }
  return t;
}

Tensor<float> standardize_per_image(const Tensor<float>& inputs) {
  if (inputs.rank() < 2) throw ConfigError("standardize expects a (N, ...) stack");
  if (inputs.item_size() < 2) throw ConfigError("standardize needs more than one value per item");
  Tensor<float> out(inputs.shape());
  for (std::size_t i = 0; i < inputs.dim(0); ++i) {
    const auto src = inputs.item(i);
    double mean = 0.0;
    for (float v : src) mean += v;
    mean /= static_cast<double>(src.size());
    double var = 0.0;
    for (float v : src) var += (v - mean) * (v - mean);
    var /= static_cast<double>(src.size());
    const double inv = 1.0 / std::sqrt(std::max(var, kVarianceFloor));
    auto dst = out.item(i);
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<float>((src[k] - mean) * inv);
  }
  return out;
}

template Tensor<float> apply(const AugmentPolicy&, const Tensor<float>&, std::uint64_t);
template Tensor<double> apply(const AugmentPolicy&, const Tensor<double>&, std::uint64_t);
template std::pair<Tensor<float>, Tensor<float>> apply_pair(const AugmentPolicy&, const Tensor<float>&, std::uint64_t);
template std::pair<Tensor<double>, Tensor<double>> apply_pair(const AugmentPolicy&, const Tensor<double>&, std::uint64_t);
template void translate_image(std::span<const float>, std::span<float>, const Shape&, int, int);
template void translate_image(std::span<const double>, std::span<double>, const Shape&, int, int);
template void flip_image(std::span<float>, const Shape&);
template void flip_image(std::span<double>, const Shape&);

}  // namespace selfens
