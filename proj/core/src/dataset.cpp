#include "selfens/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "selfens/rng.hpp"
#include "selfens/serialize.hpp"
#include "selfens/text.hpp"

namespace selfens {

std::vector<std::size_t> LabeledDataset::labeled_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != kUnlabeled) idx.push_back(i);
  }
  return idx;
}

std::size_t LabeledDataset::labeled_count() const {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](int y) { return y != kUnlabeled; }));
}

void LabeledDataset::validate() const {
  if (inputs.rank() < 2 || inputs.dim(0) != labels.size()) {
    throw DataError("dataset has " + std::to_string(labels.size()) + " labels but inputs of shape " +
                    shape_string(inputs.shape()));
  }
  if (num_classes < 2) throw DataError("dataset needs at least 2 classes");
  for (int y : labels) {
    if (y != kUnlabeled && (y < 0 || static_cast<std::size_t>(y) >= num_classes)) {
      throw DataError("label " + std::to_string(y) + " outside [0," + std::to_string(num_classes) + ")");
    }
  }
}

LabeledDataset split_semi_supervised(const LabeledDataset& dataset, std::size_t labels_per_class,
                                     std::uint64_t seed) {
  dataset.validate();
  if (!dataset.fully_labeled()) throw DataError("semi-supervised split needs a fully labeled dataset");
  std::vector<std::vector<std::size_t>> by_class(dataset.num_classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(i);
  LabeledDataset out = dataset;
  std::fill(out.labels.begin(), out.labels.end(), kUnlabeled);
  Rng rng(seed);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.size() < labels_per_class) {
      throw DataError("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                      " items, fewer than the requested " + std::to_string(labels_per_class) + " labels");
    }
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < labels_per_class; ++k) out.labels[members[k]] = dataset.labels[members[k]];
  }
  return out;
}

LabeledDataset corrupt_labels(const LabeledDataset& dataset, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("corruption fraction must be in [0,1]");
  dataset.validate();
  LabeledDataset out = dataset;
  std::vector<std::size_t> labeled = dataset.labeled_indices();
  const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(labeled.size())));
  if (count == 0) return out;
  Rng rng(seed);
  std::shuffle(labeled.begin(), labeled.end(), rng);
  std::uniform_int_distribution<int> label(0, static_cast<int>(dataset.num_classes) - 1);
  for (std::size_t k = 0; k < count; ++k) out.labels[labeled[k]] = label(rng);
  return out;
}

std::vector<std::size_t> EpochPlan::flattened() const {
  std::vector<std::size_t> all;
  all.reserve(total());
  for (const auto& b : batches) all.insert(all.end(), b.begin(), b.end());
  return all;
}

EpochPlan plan_epoch(std::size_t primary, std::size_t pool, std::optional<std::size_t> cap,
                     std::size_t batch_size, std::uint64_t seed) {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  EpochPlan plan;
  plan.batch_size = batch_size;
  plan.primary_count = primary;
  std::vector<std::size_t> order(primary);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t take = std::min(pool, cap.value_or(pool));
  if (take > 0) {
    Rng pool_rng(derive_seed(seed, {static_cast<std::uint64_t>(Stream::kPool)}));
    std::vector<std::size_t> extra(pool);
    std::iota(extra.begin(), extra.end(), primary);
    // Partial Fisher-Yates: the first `take` entries are a uniform sample.
    for (std::size_t k = 0; k < take; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, pool - 1);
      std::swap(extra[k], extra[pick(pool_rng)]);
    }
    order.insert(order.end(), extra.begin(), extra.begin() + static_cast<std::ptrdiff_t>(take));
  }
  plan.extra_count = take;
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    plan.batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                              order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return plan;
}

ImageFormat parse_image_format(std::string_view name) {
  if (name == "cifar_binary") return ImageFormat::kCifarBinary;
  if (name == "raw_tensor") return ImageFormat::kRawTensor;
  if (name == "csv") return ImageFormat::kCsv;
  throw ConfigError("unknown data format '" + std::string(name) + "' (expected cifar_binary, raw_tensor or csv)");
}

LabeledDataset load_cifar_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    throw DataError(path.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of the " +
                    std::to_string(kCifarRecordBytes) + "-byte CIFAR record");
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  LabeledDataset ds;
  ds.num_classes = 10;
  ds.inputs = Tensor<float>(Shape{n, 3, 32, 32});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + i * kCifarRecordBytes;
    if (rec[0] >= ds.num_classes) {
      throw DataError(path.string() + ": record " + std::to_string(i) + " has label byte " + std::to_string(rec[0]));
    }
    ds.labels[i] = rec[0];
    float* dst = ds.inputs.item(i).data();
    for (std::size_t k = 0; k < 3072; ++k) dst[k] = static_cast<float>(rec[1 + k]) / 255.0f;
  }
  return ds;
}

LabeledDataset load_raw_tensor(const std::filesystem::path& path) {
  const TensorRecords records = load_tensors(path);
  LabeledDataset ds;
  ds.inputs = require_record(records, "inputs");
  const Tensor<float>& labels = require_record(records, "labels");
  ds.num_classes = static_cast<std::size_t>(require_record(records, "num_classes")[0]);
  if (labels.rank() != 1) throw DataError("raw_tensor labels must be one-dimensional");
  ds.labels.reserve(labels.size());
  for (float y : labels.data()) {
    if (y != std::floor(y)) throw DataError("raw_tensor label " + format_real(y) + " is not an integer");
    ds.labels.push_back(static_cast<int>(y));
  }
  ds.validate();
  return ds;
}

void save_raw_tensor(const std::filesystem::path& path, const LabeledDataset& dataset) {
  dataset.validate();
  Tensor<float> labels(Shape{dataset.size()});
  for (std::size_t i = 0; i < dataset.size(); ++i) labels[i] = static_cast<float>(dataset.labels[i]);
  save_tensors(path, {{"inputs", dataset.inputs},
                      {"labels", labels},
                      {"num_classes", Tensor<float>(Shape{1}, {static_cast<float>(dataset.num_classes)})}});
}

LabeledDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing header row");
  const std::vector<std::string> header = split(trim(line), ',');
  std::size_t label_col = header.size();
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (trim(header[c]) == "label") label_col = c;
  }
  if (label_col == header.size()) throw DataError(path.string() + ": header has no 'label' column");
  if (header.size() < 2) throw DataError(path.string() + ": header has no feature columns");
  const std::size_t features = header.size() - 1;
  std::vector<float> values;
  std::vector<int> labels;
  int max_label = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split(trim(line), ',');
    if (cells.size() != header.size()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " columns, found " + std::to_string(cells.size()));
    }
    try {
      for (std::size_t c = 0; c < cells.size(); ++c) {
        if (c == label_col) {
          const std::string cell = trim(cells[c]);
          if (cell == "?") {
            labels.push_back(kUnlabeled);
          } else {
            const int y = static_cast<int>(parse_u64(cell));
            labels.push_back(y);
            max_label = std::max(max_label, y);
          }
        } else {
          values.push_back(static_cast<float>(parse_real(cells[c])));
        }
      }
    } catch (const ConfigError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (labels.empty()) throw DataError(path.string() + ": no data rows");
  LabeledDataset ds;
  ds.inputs = Tensor<float>(Shape{labels.size(), features}, std::move(values));
  ds.labels = std::move(labels);
  ds.num_classes = static_cast<std::size_t>(std::max(max_label + 1, 2));
  ds.validate();
  return ds;
}

LabeledDataset load_image_set(const std::filesystem::path& path, ImageFormat format) {
  switch (format) {
    case ImageFormat::kCifarBinary: return load_cifar_binary(path);
    case ImageFormat::kRawTensor: return load_raw_tensor(path);
    case ImageFormat::kCsv: return load_csv(path);
  }
  throw ConfigError("unknown data format");
}

Tensor<float> load_unlabeled_pool(const std::filesystem::path& path, ImageFormat format) {
  if (format == ImageFormat::kRawTensor) {
    // A pool file may carry only "inputs".
    const TensorRecords records = load_tensors(path);
    return require_record(records, "inputs");
  }
  return load_image_set(path, format).inputs;
}

LabeledDataset generate_two_moons(std::size_t n, double noise_sigma, std::uint64_t seed) {
  if (n < 2) throw ConfigError("two_moons needs n >= 2");
  if (!(noise_sigma >= 0.0)) throw ConfigError("two_moons noise must be >= 0");
  const std::size_t outer = n / 2;
  const std::size_t inner = n - outer;
  const auto arc = [](std::size_t k, std::size_t count) {
    return count < 2 ? 0.0 : std::numbers::pi * static_cast<double>(k) / static_cast<double>(count - 1);
  };
  std::vector<std::pair<std::array<double, 2>, int>> items;
  for (std::size_t k = 0; k < outer; ++k) {
    const double t = arc(k, outer);
    items.push_back({{std::cos(t), std::sin(t)}, 0});
  }
  for (std::size_t k = 0; k < inner; ++k) {
    const double t = arc(k, inner);
    items.push_back({{1.0 - std::cos(t), 0.5 - std::sin(t)}, 1});
  }
  Rng rng(seed);
  std::shuffle(items.begin(), items.end(), rng);
  std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);
  LabeledDataset ds;
  ds.num_classes = 2;
  ds.inputs = Tensor<float>(Shape{n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    double x = items[i].first[0];
    double y = items[i].first[1];
    if (noise_sigma > 0.0) {
      x += noise(rng);
      y += noise(rng);
    }
    ds.inputs[2 * i] = static_cast<float>(x);
    ds.inputs[2 * i + 1] = static_cast<float>(y);
    ds.labels.push_back(items[i].second);
  }
  return ds;
}

}  // namespace selfens
