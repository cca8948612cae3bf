#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "selfens/consistency.hpp"
#include "selfens/tensor.hpp"

namespace selfens {

/// N input items, each carrying a class id in [0, C) or kUnlabeled. The
/// labeled index set L is every i whose label is not kUnlabeled.
struct LabeledDataset {
  Tensor<float> inputs;  // (N, item...)
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  Shape item_shape() const { return Shape(inputs.shape().begin() + 1, inputs.shape().end()); }
  std::vector<std::size_t> labeled_indices() const;
  std::size_t labeled_count() const;
  bool fully_labeled() const { return labeled_count() == size(); }

  /// Throws DataError when labels and inputs disagree or a label is out of range.
  void validate() const;
};

/// Keeps exactly `labels_per_class` labels per class, chosen uniformly at
/// random; every other item becomes unlabeled (its input is kept).
LabeledDataset split_semi_supervised(const LabeledDataset& dataset, std::size_t labels_per_class,
                                     std::uint64_t seed);

/// Redraws the labels of a uniformly chosen floor(fraction * M)-subset of L
/// uniformly over all C classes (the true class may be drawn again).
LabeledDataset corrupt_labels(const LabeledDataset& dataset, double fraction, std::uint64_t seed);

/// Minibatches of one epoch. Primary items have indices [0, N); extra-pool
/// items have indices [N, N + P).
struct EpochPlan {
  std::vector<std::vector<std::size_t>> batches;
  std::size_t batch_size = 0;
  std::size_t primary_count = 0;
  std::size_t extra_count = 0;

  std::size_t total() const { return primary_count + extra_count; }
  std::vector<std::size_t> flattened() const;
  friend bool operator==(const EpochPlan&, const EpochPlan&) = default;
};

/// All `primary` items plus min(cap, pool) pool items drawn without
/// replacement, globally shuffled and cut into batches (the last may be short).
/// No cap means the whole pool.
EpochPlan plan_epoch(std::size_t primary, std::size_t pool, std::optional<std::size_t> cap,
                     std::size_t batch_size, std::uint64_t seed);

enum class ImageFormat { kCifarBinary, kRawTensor, kCsv };

ImageFormat parse_image_format(std::string_view name);

inline constexpr std::size_t kCifarRecordBytes = 3073;

/// CIFAR-10 binary batches: 1 label byte + 3072 channel-major pixel bytes per
/// record. Pixels are scaled to [0,1]; C = 10.
LabeledDataset load_cifar_binary(const std::filesystem::path& path);

/// Tensor container holding "inputs" (N, item...), "labels" (N) with -1 for
/// unlabeled, and "num_classes" (1).
LabeledDataset load_raw_tensor(const std::filesystem::path& path);
void save_raw_tensor(const std::filesystem::path& path, const LabeledDataset& dataset);

/// Header row naming the columns; the column called "label" holds class ids or
/// "?" for unlabeled items, every other column is a feature.
LabeledDataset load_csv(const std::filesystem::path& path);

LabeledDataset load_image_set(const std::filesystem::path& path, ImageFormat format);

/// Reads an unlabeled pool (labels ignored) in any supported format.
Tensor<float> load_unlabeled_pool(const std::filesystem::path& path, ImageFormat format);

/// Two interleaved unit half-circles: class 0 on (cos t, sin t), class 1 on
/// (1 - cos t, 0.5 - sin t), t evenly spaced on [0, pi]; isotropic Gaussian
/// noise `noise_sigma` is added and the item order shuffled.
LabeledDataset generate_two_moons(std::size_t n, double noise_sigma, std::uint64_t seed);

}  // namespace selfens
