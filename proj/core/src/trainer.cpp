#include "selfens/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>

#include "selfens/rng.hpp"
#include "selfens/serialize.hpp"
#include "selfens/text.hpp"

namespace selfens {

namespace {

template <typename E>
struct NamedValue {
  std::string_view name;
  E value;
};

template <typename E, std::size_t N>
E parse_named(std::string_view text, const NamedValue<E> (&table)[N], std::string_view what) {
  std::string expected;
  for (const auto& entry : table) {
    if (entry.name == text) return entry.value;
    expected += (expected.empty() ? "" : ", ") + std::string(entry.name);
  }
  throw ConfigError("unknown " + std::string(what) + " '" + std::string(text) + "' (expected " + expected + ")");
}

template <typename E, std::size_t N>
std::string_view name_of(E value, const NamedValue<E> (&table)[N]) {
  for (const auto& entry : table) {
    if (entry.value == value) return entry.name;
  }
  return "?";
}

constexpr NamedValue<Algorithm> kAlgorithms[] = {
    {"supervised", Algorithm::kSupervised}, {"pi", Algorithm::kPi}, {"temporal", Algorithm::kTemporal}};
constexpr NamedValue<Precision> kPrecisions[] = {{"f32", Precision::kF32}, {"f64", Precision::kF64}};
constexpr NamedValue<DataSource> kSources[] = {{"two_moons", DataSource::kTwoMoons},
                                               {"cifar_binary", DataSource::kCifarBinary},
                                               {"raw_tensor", DataSource::kRawTensor},
                                               {"csv", DataSource::kCsv}};
constexpr NamedValue<Preprocess> kPreprocess[] = {
    {"none", Preprocess::kNone}, {"zca", Preprocess::kZca}, {"standardize", Preprocess::kStandardize}};
constexpr NamedValue<SupervisedNorm> kNorms[] = {{"labeled", SupervisedNorm::kLabeledRows},
                                                 {"batch", SupervisedNorm::kBatch}};

ImageFormat file_format(DataSource source) {
  switch (source) {
    case DataSource::kCifarBinary: return ImageFormat::kCifarBinary;
    case DataSource::kRawTensor: return ImageFormat::kRawTensor;
    case DataSource::kCsv: return ImageFormat::kCsv;
    case DataSource::kTwoMoons: break;
  }
  throw ConfigError("two_moons data has no file format");
}

template <typename T>
void add_into(Gradients<T>& acc, const Gradients<T>& g) {
  for (std::size_t k = 0; k < acc.size(); ++k) {
    for (std::size_t j = 0; j < acc[k].size(); ++j) acc[k][j] += g[k][j];
  }
}

template <typename T>
std::size_t argmax_row(const Tensor<T>& p, std::size_t row) {
  const std::size_t c = p.dim(1);
  const T* r = p.raw() + row * c;
  return static_cast<std::size_t>(std::max_element(r, r + c) - r);
}

bool has_weight_norm(const LayerSpecList& layers) {
  return std::any_of(layers.begin(), layers.end(), [](const LayerSpec& l) { return l.has_params() && l.weight_norm; });
}

// Inputs of a batch: primary items come from the training set, indices
// beyond it from the extra pool.
template <typename T>
Tensor<T> gather_batch(const TrainingData& data, std::span<const std::size_t> indices) {
  const std::size_t n = data.train.size();
  Shape shape = data.train.inputs.shape();
  shape[0] = indices.size();
  Tensor<T> out(shape);
  const std::size_t item = data.train.inputs.item_size();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    const auto src = i < n ? data.train.inputs.item(i) : data.pool.item(i - n);
    std::copy(src.begin(), src.end(), out.raw() + r * item);
  }
  return out;
}

std::vector<int> gather_labels(const TrainingData& data, std::span<const std::size_t> indices) {
  std::vector<int> labels(indices.size(), kUnlabeled);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] < data.train.size()) labels[r] = data.train.labels[indices[r]];
  }
  return labels;
}

template <typename T>
void warn(const TrainObserver<T>& observer, const std::string& message) {
  if (observer.on_warning) {
    observer.on_warning(message);
  } else {
    std::clog << "warning: " << message << '\n';
  }
}

template <typename T>
TrainResult<T> run_loop(const RunConfig& config, const TrainingData& data, const TrainObserver<T>& observer) {
  for (const std::string& w : config.validate()) warn(observer, w);
  data.train.validate();
  const Algorithm algo = config.algorithm;
  const std::size_t n = data.train.size();
  const std::size_t pool = data.pool_size();
  const std::size_t labeled = data.train.labeled_count();
  if (labeled == 0) throw DataError("training set has no labeled items");
  if (pool > 0 && data.pool.item_size() != data.train.inputs.item_size()) {
    throw DataError("extra pool items have a different shape than training items");
  }
  const std::size_t classes = data.train.num_classes;

  const LayerSpecList layers = build_network(config.network, data.train.item_shape(), classes);
  if (output_width(layers, data.train.item_shape()) != classes) {
    throw ConfigError("network output width does not match the " + std::to_string(classes) + " classes");
  }
  TrainResult<T> result{Network<T>(layers, data.train.item_shape()), {}, {}, {}, std::nullopt};
  const Network<T>& net = result.network;
  NetworkParams<T>& params = result.params;
  params = net.init_params(stream_seed(config.seed, Stream::kInit));
  result.adam = AdamState<T>::for_params(params, config.schedule.beta2, config.adam_epsilon);
  if (algo == Algorithm::kTemporal) result.ensemble.emplace(n + pool, classes, config.alpha);

  const std::uint64_t shuffle_seed = stream_seed(config.seed, Stream::kShuffle);
  const std::uint64_t augment_seed = stream_seed(config.seed, Stream::kAugment);
  const std::uint64_t dropout_seed = stream_seed(config.seed, Stream::kDropout);
  const auto plan_for = [&](std::size_t epoch) {
    return plan_epoch(n, pool, config.data.pool_cap, config.batch_size, derive_seed(shuffle_seed, {epoch}));
  };

  if (config.data_dependent_init && has_weight_norm(layers)) {
    const EpochPlan first = plan_for(0);
    net.data_dependent_init(params, gather_batch<T>(data, first.batches.front()));
  }

  for (std::size_t epoch = 0; epoch < config.schedule.total_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = learning_rate(epoch, config.schedule);
    rec.beta1 = adam_beta1(epoch, config.schedule);
    rec.unsup_weight = unsup_weight(epoch, config.schedule, labeled, n, algo);
    const double w = rec.unsup_weight;
    const EpochPlan plan = plan_for(epoch);

    Tensor<T> epoch_outputs;
    std::vector<std::size_t> visited;
    if (algo == Algorithm::kTemporal) {
      epoch_outputs = Tensor<T>(Shape{plan.total(), classes});
      visited.reserve(plan.total());
    }

    double sup_sum = 0.0;
    double unsup_sum = 0.0;
    std::size_t train_seen = 0;
    std::size_t train_wrong = 0;
    for (std::size_t b = 0; b < plan.batches.size(); ++b) {
      const std::vector<std::size_t>& idx = plan.batches[b];
      const Tensor<T> x = gather_batch<T>(data, idx);
      const std::vector<int> labels = gather_labels(data, idx);
      const std::uint64_t aug_seed = derive_seed(augment_seed, {epoch, b});
      const std::uint64_t drop_seed = derive_seed(dropout_seed, {epoch, b});
      const auto ctx_a = StochasticEvalContext<T>::train(derive_seed(drop_seed, {0}));

      BatchEvent<T> event;
      event.epoch = epoch;
      event.batch = b;
      event.indices = idx;
      event.unsup_weight = w;

      Gradients<T> grads;
      Tensor<T> output;
      LossValue<T> ce;
      double unsup = 0.0;
      Tensor<T> targets;
      Gradients<T> unsup_grads;
      if (algo == Algorithm::kPi) {
        auto [xa, xb] = apply_pair(config.augment, x, aug_seed);
        ForwardResult<T> fa = net.forward(params, xa, ctx_a);
        ForwardResult<T> fb = net.forward(params, xb, StochasticEvalContext<T>::train(derive_seed(drop_seed, {1})));
        ce = cross_entropy_masked(fa.output, labels, config.supervised_norm);
        const LossValue<T> mse = consistency_mse(fa.output, fb.output);
        unsup = mse.value;
        Tensor<T> grad_a = ce.grad;
        if (w != 0.0) {
          for (std::size_t k = 0; k < grad_a.size(); ++k) grad_a[k] += static_cast<T>(w) * mse.grad[k];
        }
        grads = net.backward(params, fa.tape, grad_a);
        if (w != 0.0) {
          Tensor<T> grad_b(mse.grad.shape());
          for (std::size_t k = 0; k < grad_b.size(); ++k) grad_b[k] = -static_cast<T>(w) * mse.grad[k];
          add_into(grads, net.backward(params, fb.tape, grad_b));
        }
        net.update_running_stats(params, fa.tape);
        rec.forward_passes += 2 * idx.size();
        output = std::move(fa.output);
        targets = std::move(fb.output);
        event.targets = &targets;
      } else {
        const Tensor<T> xa = apply(config.augment, x, derive_seed(aug_seed, {0}));
        ForwardResult<T> fa = net.forward(params, xa, ctx_a);
        ce = cross_entropy_masked(fa.output, labels, config.supervised_norm);
        Tensor<T> grad = ce.grad;
        if (algo == Algorithm::kTemporal && w != 0.0) {
          // Rows never accumulated yet (pool items on their first visit) have
          // no target; they contribute nothing to the consistency term.
          targets = fa.output;
          const EnsembleState<T>& ens = *result.ensemble;
          std::vector<std::size_t> have;
          std::vector<std::size_t> rows;
          for (std::size_t r = 0; r < idx.size(); ++r) {
            if (ens.counters()[idx[r]] > 0) {
              have.push_back(idx[r]);
              rows.push_back(r);
            }
          }
          const Tensor<T> z_tilde = ens.targets(have);
          for (std::size_t k = 0; k < rows.size(); ++k) {
            std::copy_n(z_tilde.raw() + k * classes, classes, targets.raw() + rows[k] * classes);
          }
          const LossValue<T> mse = consistency_mse(fa.output, targets);
          unsup = mse.value;
          Tensor<T> ugrad(mse.grad.shape());
          for (std::size_t k = 0; k < grad.size(); ++k) {
            ugrad[k] = static_cast<T>(w) * mse.grad[k];
            grad[k] += ugrad[k];
          }
          if (observer.want_unsup_gradients) unsup_grads = net.backward(params, fa.tape, ugrad);
          event.targets = &targets;
        } else if (algo == Algorithm::kTemporal && observer.want_unsup_gradients) {
          unsup_grads = net.backward(params, fa.tape, Tensor<T>(fa.output.shape()));
        }
        grads = net.backward(params, fa.tape, grad);
        net.update_running_stats(params, fa.tape);
        rec.forward_passes += idx.size();
        output = std::move(fa.output);
        if (algo == Algorithm::kTemporal && !config.ensemble_post_epoch_sweep) {
          std::copy(output.data().begin(), output.data().end(), epoch_outputs.raw() + visited.size() * classes);
          visited.insert(visited.end(), idx.begin(), idx.end());
        }
      }
      if (ce.clamped > 0) {
        warn(observer, "epoch " + std::to_string(epoch) + " batch " + std::to_string(b) + ": " +
                           std::to_string(ce.clamped) + " labeled prediction(s) clamped at 1e-12");
      }

      const LossBreakdown loss = combine_losses(ce.value, unsup, w);
      if (!std::isfinite(loss.weighted_total)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                              " (a lower Adam beta2 such as 0.99 can help)");
      }
      sup_sum += loss.supervised;
      unsup_sum += loss.unsupervised;
      for (std::size_t r = 0; r < idx.size(); ++r) {
        if (labels[r] == kUnlabeled) continue;
        ++train_seen;
        if (argmax_row(output, r) != static_cast<std::size_t>(labels[r])) ++train_wrong;
      }

      if (observer.on_batch) {
        event.loss = loss;
        event.predictions = &output;
        if (!unsup_grads.empty()) event.unsup_gradients = &unsup_grads;
        observer.on_batch(event);
      }
      try {
        adam_step(params, grads, result.adam, rec.learning_rate, rec.beta1);
      } catch (const DivergenceError& e) {
        throw DivergenceError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) + ": " + e.what());
      }
    }

    if (algo == Algorithm::kTemporal) {
      if (config.ensemble_post_epoch_sweep) {
        const std::uint64_t sweep_seed = derive_seed(dropout_seed, {epoch, plan.batches.size(), 7});
        for (std::size_t b = 0; b < plan.batches.size(); ++b) {
          const std::vector<std::size_t>& idx = plan.batches[b];
          const Tensor<T> xa = apply(config.augment, gather_batch<T>(data, idx), derive_seed(sweep_seed, {b, 0}));
          const ForwardResult<T> f =
              net.forward(params, xa, StochasticEvalContext<T>::train(derive_seed(sweep_seed, {b, 1})));
          std::copy(f.output.data().begin(), f.output.data().end(), epoch_outputs.raw() + visited.size() * classes);
          visited.insert(visited.end(), idx.begin(), idx.end());
          rec.forward_passes += idx.size();
        }
      }
      result.ensemble->update(visited, epoch_outputs);
      result.ensemble->advance_epoch();
    }

    const std::size_t batches = plan.batches.size();
    rec.supervised_loss = sup_sum / static_cast<double>(batches);
    rec.unsupervised_loss = unsup_sum / static_cast<double>(batches);
    rec.train_error = train_seen == 0 ? 0.0 : static_cast<double>(train_wrong) / static_cast<double>(train_seen);
    const bool last = epoch + 1 == config.schedule.total_epochs;
    if (data.test.size() > 0 && ((epoch + 1) % config.eval_every == 0 || last)) {
      rec.test_error = evaluate(net, params, data.test, config.eval_batch);
    }
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.epochs.push_back(rec);
    if (observer.on_epoch) {
      EpochEvent<T> ev;
      ev.record = &result.history.epochs.back();
      ev.params = &params;
      ev.ensemble = result.ensemble ? &*result.ensemble : nullptr;
      observer.on_epoch(ev);
    }
  }
  return result;
}

template <typename T>
RunOutcome run_typed(const RunConfig& config, const std::function<void(const EpochRecord&)>& on_epoch) {
  const TrainingData data = prepare_data(config.data, config.seed);
  TrainObserver<T> observer;
  if (on_epoch) observer.on_epoch = [&](const EpochEvent<T>& ev) { on_epoch(*ev.record); };
  TrainResult<T> result = train<T>(config, data, observer);
  if (!config.checkpoint_path.empty()) save_checkpoint(config.checkpoint_path, result.params, &result.adam);
  if (!config.ensemble_path.empty()) {
    if (!result.ensemble) throw ConfigError("ensemble_path is only meaningful for temporal ensembling");
    try {
      save_ensemble(config.ensemble_path, *result.ensemble);
    } catch (const DataError& e) {
      throw DataError(std::string("ensemble file: ") + e.what());
    }
  }
  RunOutcome out;
  out.history = std::move(result.history);
  out.final_test_error = out.history.final_test_error().value_or(0.0);
  return out;
}

}  // namespace

std::string_view algorithm_name(Algorithm a) { return name_of(a, kAlgorithms); }
Algorithm parse_algorithm(std::string_view name) { return parse_named(name, kAlgorithms, "algorithm"); }
std::string_view precision_name(Precision p) { return name_of(p, kPrecisions); }
Precision parse_precision(std::string_view name) { return parse_named(name, kPrecisions, "precision"); }
std::string_view data_source_name(DataSource s) { return name_of(s, kSources); }
DataSource parse_data_source(std::string_view name) { return parse_named(name, kSources, "data source"); }
std::string_view preprocess_name(Preprocess p) { return name_of(p, kPreprocess); }
Preprocess parse_preprocess(std::string_view name) { return parse_named(name, kPreprocess, "preprocessing"); }
std::string_view supervised_norm_name(SupervisedNorm n) { return name_of(n, kNorms); }
SupervisedNorm parse_supervised_norm(std::string_view name) {
  return parse_named(name, kNorms, "supervised normalization");
}

LayerSpecList build_network(const NetworkRecipe& recipe, const Shape& input, std::size_t classes) {
  if (recipe.preset == "cifar") return build_cifar_network(input, classes);
  if (recipe.preset == "custom") {
    LayerSpecList layers = layers_from_string(recipe.layers);
    if (layers.empty()) throw ConfigError("network.layers is empty for preset custom");
    chain_shapes(layers, input);
    return layers;
  }
  return build_small_network(parse_small_preset(recipe.preset), input, classes, recipe.options);
}

std::vector<std::string> RunConfig::validate() const {
  std::vector<std::string> warnings = schedule.validate();
  augment.validate();
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("run.alpha must be in [0,1), got " + format_real(alpha));
  if (!(adam_epsilon > 0.0)) throw ConfigError("optimizer.epsilon must be > 0");
  if (batch_size == 0) throw ConfigError("run.batch_size must be >= 1");
  if (replicates == 0) throw ConfigError("run.replicates must be >= 1");
  if (eval_every == 0) throw ConfigError("run.eval_every must be >= 1");
  if (eval_batch == 0) throw ConfigError("run.eval_batch must be >= 1");
  if (algorithm == Algorithm::kTemporal && !schedule.temporal_first_epoch_zero) {
    throw ConfigError("schedule.temporal_first_epoch_zero must stay on for temporal ensembling");
  }
  if (!(data.corruption >= 0.0 && data.corruption <= 1.0)) throw ConfigError("data.corruption must be in [0,1]");
  if (!(data.moons_noise >= 0.0)) throw ConfigError("data.moons_noise must be >= 0");
  if (!(data.zca_epsilon >= 0.0)) throw ConfigError("data.zca_epsilon must be >= 0");
  if (network.preset != "cifar" && network.preset != "custom") parse_small_preset(network.preset);
  if (network.preset == "custom") layers_from_string(network.layers);
  if (!(network.options.dropout >= 0.0 && network.options.dropout < 1.0)) {
    throw ConfigError("network.dropout must be in [0,1)");
  }
  if (!(network.options.input_noise >= 0.0)) throw ConfigError("network.input_noise must be >= 0");
  if (network.options.hidden == 0) throw ConfigError("network.hidden must be >= 1");
  return warnings;
}

TrainingData prepare_data(const DatasetRecipe& recipe, std::uint64_t seed) {
  const std::uint64_t data_seed = stream_seed(seed, Stream::kData);
  TrainingData data;
  if (recipe.source == DataSource::kTwoMoons) {
    data.train = generate_two_moons(recipe.moons_train, recipe.moons_noise, derive_seed(data_seed, {0}));
    if (recipe.moons_test > 0) {
      data.test = generate_two_moons(recipe.moons_test, recipe.moons_noise, derive_seed(data_seed, {1}));
    }
    if (recipe.moons_pool > 0) {
      data.pool = generate_two_moons(recipe.moons_pool, recipe.moons_noise, derive_seed(data_seed, {2})).inputs;
    }
  } else {
    const ImageFormat format = file_format(recipe.source);
    if (recipe.train_path.empty()) throw ConfigError("data.train_path is required for " +
                                                     std::string(data_source_name(recipe.source)));
    data.train = load_image_set(recipe.train_path, format);
    if (!recipe.test_path.empty()) data.test = load_image_set(recipe.test_path, format);
    if (!recipe.pool_path.empty()) data.pool = load_unlabeled_pool(recipe.pool_path, format);
  }
  if (recipe.labels_per_class > 0) {
    data.train = split_semi_supervised(data.train, recipe.labels_per_class, stream_seed(seed, Stream::kSplit));
  }
  if (recipe.corruption > 0.0) {
    data.train = corrupt_labels(data.train, recipe.corruption, stream_seed(seed, Stream::kCorrupt));
  }
  switch (recipe.preprocess) {
    case Preprocess::kNone: break;
    case Preprocess::kZca: {
      const ZcaTransform zca = zca_fit(data.train.inputs, recipe.zca_epsilon);
      data.train.inputs = zca_apply(zca, data.train.inputs);
      if (data.test.size() > 0) data.test.inputs = zca_apply(zca, data.test.inputs);
      if (!data.pool.empty()) data.pool = zca_apply(zca, data.pool);
      break;
    }
    case Preprocess::kStandardize:
      data.train.inputs = standardize_per_image(data.train.inputs);
      if (data.test.size() > 0) data.test.inputs = standardize_per_image(data.test.inputs);
      if (!data.pool.empty()) data.pool = standardize_per_image(data.pool);
      break;
  }
  return data;
}

std::optional<double> RunHistory::final_test_error() const {
  for (auto it = epochs.rbegin(); it != epochs.rend(); ++it) {
    if (it->test_error) return it->test_error;
  }
  return std::nullopt;
}

template <typename T>
TrainResult<T> train(const RunConfig& config, const TrainingData& data, const TrainObserver<T>& observer) {
  return run_loop<T>(config, data, observer);
}

template <typename T>
TrainResult<T> train_pi(const RunConfig& config, const TrainingData& data, const TrainObserver<T>& observer) {
  if (config.algorithm != Algorithm::kPi) throw ConfigError("train_pi requires algorithm = pi");
  return run_loop<T>(config, data, observer);
}

template <typename T>
TrainResult<T> train_temporal(const RunConfig& config, const TrainingData& data, const TrainObserver<T>& observer) {
  if (config.algorithm != Algorithm::kTemporal) throw ConfigError("train_temporal requires algorithm = temporal");
  return run_loop<T>(config, data, observer);
}

template <typename T>
double error_rate(const Tensor<T>& predictions, std::span<const int> labels) {
  if (predictions.rank() != 2 || predictions.dim(0) != labels.size()) {
    throw ConfigError("prediction rows do not match labels");
  }
  std::size_t seen = 0;
  std::size_t wrong = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] == kUnlabeled) continue;
    ++seen;
    if (argmax_row(predictions, r) != static_cast<std::size_t>(labels[r])) ++wrong;
  }
  if (seen == 0) throw DataError("cannot compute an error rate without labeled items");
  return static_cast<double>(wrong) / static_cast<double>(seen);
}

template <typename T>
double evaluate(const Network<T>& network, const NetworkParams<T>& params, const LabeledDataset& test,
                std::size_t batch_size) {
  if (test.size() == 0) throw DataError("empty test set");
  if (batch_size == 0) throw ConfigError("evaluation batch size must be >= 1");
  std::size_t seen = 0;
  std::size_t wrong = 0;
  const auto ctx = StochasticEvalContext<T>::eval();
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < test.size(); start += batch_size) {
    const std::size_t end = std::min(test.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor<T> x = gather_items(test.inputs, std::span<const std::size_t>(idx)).template cast<T>();
    const Tensor<T> p = network.forward(params, x, ctx).output;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const int y = test.labels[idx[r]];
      if (y == kUnlabeled) continue;
      ++seen;
      if (argmax_row(p, r) != static_cast<std::size_t>(y)) ++wrong;
    }
  }
  if (seen == 0) throw DataError("test set has no labeled items");
  return static_cast<double>(wrong) / static_cast<double>(seen);
}

RunOutcome run_training(const RunConfig& config, const std::function<void(const EpochRecord&)>& on_epoch) {
  return config.precision == Precision::kF64 ? run_typed<double>(config, on_epoch)
                                             : run_typed<float>(config, on_epoch);
}

std::uint64_t replicate_seed(std::uint64_t base_seed, std::size_t k) {
  return derive_seed(base_seed, {static_cast<std::uint64_t>(Stream::kReplicate), k});
}

ReplicateSummary summarize(std::vector<double> errors, std::vector<std::uint64_t> seeds) {
  ReplicateSummary s;
  const double n = static_cast<double>(errors.size());
  if (!errors.empty()) s.mean = std::accumulate(errors.begin(), errors.end(), 0.0) / n;
  if (errors.size() > 1) {
    double ss = 0.0;
    for (double e : errors) ss += (e - s.mean) * (e - s.mean);
    s.stddev = std::sqrt(ss / (n - 1.0));
  }
  s.errors = std::move(errors);
  s.seeds = std::move(seeds);
  return s;
}

ReplicateSummary run_replicates(const RunConfig& config, std::size_t n_seeds) {
  if (n_seeds == 0) throw ConfigError("replicate count must be >= 1");
  std::vector<double> errors;
  std::vector<std::uint64_t> seeds;
  for (std::size_t k = 0; k < n_seeds; ++k) {
    RunConfig c = config;
    c.seed = replicate_seed(config.seed, k);
    c.checkpoint_path.clear();
    c.ensemble_path.clear();
    errors.push_back(run_training(c).final_test_error);
    seeds.push_back(c.seed);
  }
  return summarize(std::move(errors), std::move(seeds));
}

PairedComparison compare_paired(const RunConfig& baseline, const RunConfig& candidate, std::size_t n_seeds) {
  if (baseline.seed != candidate.seed) throw ConfigError("paired runs need the same base seed");
  PairedComparison out;
  out.baseline = run_replicates(baseline, n_seeds);
  out.candidate = run_replicates(candidate, n_seeds);
  for (std::size_t k = 0; k < n_seeds; ++k) {
    const double d = out.candidate.errors[k] - out.baseline.errors[k];
    out.deltas.push_back(d);
    if (d < 0.0) ++out.candidate_wins;
  }
  return out;
}

double corruption_w_max(double fraction) { return fraction >= 0.5 ? 3000.0 : 300.0; }

std::vector<CorruptionRun> corruption_experiment(const RunConfig& config, std::span<const double> fractions) {
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("corruption fractions must lie in [0,1]");
  }
  std::vector<CorruptionRun> runs;
  for (double f : fractions) {
    RunConfig base = config;
    base.data.corruption = f;
    base.schedule.w_max = corruption_w_max(f);
    base.checkpoint_path.clear();
    base.ensemble_path.clear();
    CorruptionRun run;
    run.fraction = f;
    base.algorithm = Algorithm::kSupervised;
    run.supervised = run_training(base).history;
    base.algorithm = Algorithm::kTemporal;
    run.temporal = run_training(base).history;
    runs.push_back(std::move(run));
  }
  return runs;
}

#define SELFENS_INSTANTIATE(T)                                                                          \
  template TrainResult<T> train(const RunConfig&, const TrainingData&, const TrainObserver<T>&);        \
  template TrainResult<T> train_pi(const RunConfig&, const TrainingData&, const TrainObserver<T>&);     \
  template TrainResult<T> train_temporal(const RunConfig&, const TrainingData&, const TrainObserver<T>&); \
  template double evaluate(const Network<T>&, const NetworkParams<T>&, const LabeledDataset&, std::size_t); \
  template double error_rate(const Tensor<T>&, std::span<const int>);

SELFENS_INSTANTIATE(float)
SELFENS_INSTANTIATE(double)
#undef SELFENS_INSTANTIATE

}  // namespace selfens
