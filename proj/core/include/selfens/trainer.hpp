#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "selfens/adam.hpp"
#include "selfens/augment.hpp"
#include "selfens/consistency.hpp"
#include "selfens/dataset.hpp"
#include "selfens/layers.hpp"
#include "selfens/network.hpp"
#include "selfens/schedules.hpp"

namespace selfens {

enum class Precision { kF32, kF64 };
enum class DataSource { kTwoMoons, kCifarBinary, kRawTensor, kCsv };
enum class Preprocess { kNone, kZca, kStandardize };

std::string_view algorithm_name(Algorithm a);
Algorithm parse_algorithm(std::string_view name);
std::string_view precision_name(Precision p);
Precision parse_precision(std::string_view name);
std::string_view data_source_name(DataSource s);
DataSource parse_data_source(std::string_view name);
std::string_view preprocess_name(Preprocess p);
Preprocess parse_preprocess(std::string_view name);
std::string_view supervised_norm_name(SupervisedNorm n);
SupervisedNorm parse_supervised_norm(std::string_view name);

struct DatasetRecipe {
  DataSource source = DataSource::kTwoMoons;
  std::string train_path;
  std::string test_path;
  std::string pool_path;  // optional extra unlabeled inputs, same format as train
  std::size_t moons_train = 1000;
  std::size_t moons_test = 1000;
  std::size_t moons_pool = 0;
  double moons_noise = 0.1;
  std::size_t labels_per_class = 0;  // 0 keeps every label
  double corruption = 0.0;
  std::optional<std::size_t> pool_cap;  // extra items per epoch; unset = whole pool
  Preprocess preprocess = Preprocess::kNone;
  double zca_epsilon = 1e-5;

  friend bool operator==(const DatasetRecipe&, const DatasetRecipe&) = default;
};

struct NetworkRecipe {
  std::string preset = "mlp";  // mlp | cnn_small | cifar | custom
  SmallNetworkOptions options;
  std::string layers;  // layer string for preset "custom"

  friend bool operator==(const NetworkRecipe&, const NetworkRecipe&) = default;
};

LayerSpecList build_network(const NetworkRecipe& recipe, const Shape& input, std::size_t classes);

struct RunConfig {
  Algorithm algorithm = Algorithm::kTemporal;
  NetworkRecipe network;
  ScheduleConfig schedule;
  AugmentPolicy augment;
  DatasetRecipe data;
  double alpha = 0.6;
  double adam_epsilon = 1e-8;
  std::size_t batch_size = 100;
  std::uint64_t seed = 1;
  std::size_t replicates = 10;
  Precision precision = Precision::kF32;
  SupervisedNorm supervised_norm = SupervisedNorm::kLabeledRows;
  bool data_dependent_init = true;
  /// Accumulate Z from a separate train-mode pass after each epoch instead of
  /// the predictions made while training on that epoch.
  bool ensemble_post_epoch_sweep = false;
  std::size_t eval_every = 1;
  std::size_t eval_batch = 500;
  std::string history_path;
  std::string checkpoint_path;
  std::string ensemble_path;

  /// Throws ConfigError naming the key; returns non-fatal warnings.
  std::vector<std::string> validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct TrainingData {
  LabeledDataset train;
  Tensor<float> pool;  // (P, item...) unlabeled extra inputs, possibly empty
  LabeledDataset test;

  std::size_t pool_size() const { return pool.empty() ? 0 : pool.dim(0); }
};

/// Loads or generates the data of a recipe, then applies the label split,
/// label corruption and preprocessing (fitted on the training inputs).
TrainingData prepare_data(const DatasetRecipe& recipe, std::uint64_t seed);

struct EpochRecord {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double unsup_weight = 0.0;
  double beta1 = 0.0;
  double supervised_loss = 0.0;
  double unsupervised_loss = 0.0;
  double train_error = 0.0;
  std::optional<double> test_error;
  double wall_time = 0.0;
  std::uint64_t forward_passes = 0;  // items evaluated by the network this epoch
};

struct RunHistory {
  std::vector<EpochRecord> epochs;

  std::optional<double> final_test_error() const;
};

template <typename T>
struct BatchEvent {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  std::span<const std::size_t> indices;
  double unsup_weight = 0.0;
  LossBreakdown loss;
  const Tensor<T>* predictions = nullptr;  // first (or only) branch
  const Tensor<T>* targets = nullptr;      // consistency targets, when used
  const Gradients<T>* unsup_gradients = nullptr;  // gradient of w * unsup term (temporal only)
};

template <typename T>
struct EpochEvent {
  const EpochRecord* record = nullptr;
  const NetworkParams<T>* params = nullptr;
  const EnsembleState<T>* ensemble = nullptr;
};

template <typename T>
struct TrainObserver {
  std::function<void(const BatchEvent<T>&)> on_batch;
  std::function<void(const EpochEvent<T>&)> on_epoch;
  std::function<void(const std::string&)> on_warning;
  /// Request BatchEvent::unsup_gradients (costs an extra backward pass).
  bool want_unsup_gradients = false;
};

template <typename T>
struct TrainResult {
  Network<T> network;
  NetworkParams<T> params;
  AdamState<T> adam;
  RunHistory history;
  std::optional<EnsembleState<T>> ensemble;
};

/// Dispatches on config.algorithm.
template <typename T>
TrainResult<T> train(const RunConfig& config, const TrainingData& data, const TrainObserver<T>& observer = {});

/// Two stochastic evaluations per batch, loss CE + w(t) * MSE(z, z~).
template <typename T>
TrainResult<T> train_pi(const RunConfig& config, const TrainingData& data, const TrainObserver<T>& observer = {});

/// One evaluation per item per epoch against bias-corrected EMA targets.
template <typename T>
TrainResult<T> train_temporal(const RunConfig& config, const TrainingData& data,
                              const TrainObserver<T>& observer = {});

/// Fraction of labeled test items whose argmax prediction (eval mode) is wrong.
template <typename T>
double evaluate(const Network<T>& network, const NetworkParams<T>& params, const LabeledDataset& test,
                std::size_t batch_size = 500);

/// Error rate of a (N, C) prediction matrix against labels (kUnlabeled rows
/// are skipped). Throws DataError when nothing is labeled.
template <typename T>
double error_rate(const Tensor<T>& predictions, std::span<const int> labels);

/// Precision-independent summary of one run.
struct RunOutcome {
  RunHistory history;
  double final_test_error = 0.0;
};

/// Prepares data for `config.seed`, trains at config.precision and, when the
/// config names them, writes the checkpoint and ensemble files. `on_epoch`
/// receives each record as it completes.
RunOutcome run_training(const RunConfig& config, const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Replicate k runs with seed derive_seed(config.seed, {kReplicate, k}).
std::uint64_t replicate_seed(std::uint64_t base_seed, std::size_t k);

struct ReplicateSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single run
  std::vector<double> errors;
  std::vector<std::uint64_t> seeds;
};

ReplicateSummary summarize(std::vector<double> errors, std::vector<std::uint64_t> seeds);

ReplicateSummary run_replicates(const RunConfig& config, std::size_t n_seeds);

struct PairedComparison {
  ReplicateSummary baseline;
  ReplicateSummary candidate;
  std::vector<double> deltas;  // candidate - baseline, per seed
  std::size_t candidate_wins = 0;  // seeds where candidate error < baseline error
};

/// Runs both configs on the same replicate seeds (hence the same data,
/// splits and initialization streams).
PairedComparison compare_paired(const RunConfig& baseline, const RunConfig& candidate, std::size_t n_seeds);

/// w_max used by the label-corruption protocol: 300 below 50% corruption,
/// 3000 from 50% upwards.
double corruption_w_max(double fraction);

struct CorruptionRun {
  double fraction = 0.0;
  RunHistory supervised;
  RunHistory temporal;
};

/// For each fraction, corrupts the training labels and trains a supervised
/// and a temporal-ensembling model on identical seeds.
std::vector<CorruptionRun> corruption_experiment(const RunConfig& config, std::span<const double> fractions);

}  // namespace selfens
