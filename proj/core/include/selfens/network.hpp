#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "selfens/layers.hpp"
#include "selfens/tensor.hpp"

namespace selfens {

enum class Mode { kTrain, kEval };

/// Per-layer random draws of one forward pass: dropout masks (0 or 1/keep)
/// and additive noise samples, keyed by layer index.
template <typename T>
using MaskSet = std::map<std::size_t, Tensor<T>>;

/// Controls every random draw a forward pass makes. In train mode each
/// stochastic layer draws from a stream derived from (seed, layer index)
/// unless `replay` holds a recorded draw for that layer. Eval mode draws
/// nothing.
template <typename T>
struct StochasticEvalContext {
  std::uint64_t seed = 0;
  Mode mode = Mode::kTrain;
  std::optional<MaskSet<T>> replay;

  static StochasticEvalContext train(std::uint64_t seed) { return {seed, Mode::kTrain, std::nullopt}; }
  static StochasticEvalContext eval() { return {0, Mode::kEval, std::nullopt}; }
  static StochasticEvalContext replayed(MaskSet<T> masks) { return {0, Mode::kTrain, std::move(masks)}; }
};

template <typename T>
struct ParamTensor {
  std::string name;
  Tensor<T> value;
  bool trainable = true;
};

/// Trainable weights plus the running means of mean-only batch
/// normalization, in a fixed order determined by the layer list.
template <typename T>
struct NetworkParams {
  std::vector<ParamTensor<T>> tensors;

  std::size_t size() const { return tensors.size(); }
  const ParamTensor<T>* find(std::string_view name) const;
  ParamTensor<T>* find(std::string_view name);
  std::size_t trainable_count() const;
};

/// One gradient slot per entry of NetworkParams::tensors (zeros for the
/// non-trainable running statistics).
template <typename T>
using Gradients = std::vector<Tensor<T>>;

template <typename T>
struct LayerRecord {
  Tensor<T> input;
  Tensor<T> weight;      // effective weight of conv/dense after weight normalization
  Tensor<T> batch_mean;  // per-unit mean removed by mean-only BN in train mode
  Tensor<T> output;      // softmax output
  std::vector<std::uint32_t> argmax;  // max-pool winners
};

/// Everything backward() needs from one forward pass.
template <typename T>
struct ActivationTape {
  Mode mode = Mode::kTrain;
  std::size_t param_count = 0;
  std::vector<LayerRecord<T>> records;
  MaskSet<T> masks;
};

template <typename T>
struct ForwardResult {
  Tensor<T> output;
  ActivationTape<T> tape;
};

/// A layer list compiled against an input item shape.
template <typename T>
class Network {
 public:
  Network(LayerSpecList layers, Shape input_shape);

  const LayerSpecList& layers() const { return layers_; }
  const Shape& input_shape() const { return shapes_.front(); }
  const Shape& output_shape() const { return shapes_.back(); }
  std::size_t num_classes() const { return shapes_.back().at(0); }

  /// He-initialized parameters. Weight-normalized layers start with g = |v|
  /// so the effective weights equal the He draw.
  NetworkParams<T> init_params(std::uint64_t seed) const;

  /// `input` is (batch, input_shape...). Throws ConfigError on a shape
  /// mismatch and DivergenceError naming the layer on a non-finite activation.
  ForwardResult<T> forward(const NetworkParams<T>& params, const Tensor<T>& input,
                           const StochasticEvalContext<T>& ctx) const;

  /// Reverse pass for d(loss)/d(output) = `loss_grad`.
  Gradients<T> backward(const NetworkParams<T>& params, const ActivationTape<T>& tape,
                        const Tensor<T>& loss_grad) const;

  /// Folds the batch means recorded in a train-mode tape into the running
  /// means: rm <- m*rm + (1-m)*mean, steps += 1. Eval mode subtracts the
  /// bias-corrected rm / (1 - m^steps).
  void update_running_stats(NetworkParams<T>& params, const ActivationTape<T>& tape) const;

  /// Rescales weight-norm gains layer by layer so that each unit's
  /// pre-activation has unit variance on `batch` (biases are also set when the
  /// layer has no mean-only BN). Noise and dropout are disabled meanwhile.
  void data_dependent_init(NetworkParams<T>& params, const Tensor<T>& batch) const;

  /// Dropout masks of all ones and zero noise for a batch of `batch` items.
  MaskSet<T> identity_masks(std::size_t batch) const;

 private:
  struct Slots {
    std::optional<std::size_t> weight, gain, bias, running_mean, running_steps;
  };

  void check_params(const NetworkParams<T>& params) const;

  LayerSpecList layers_;
  std::vector<Shape> shapes_;
  std::vector<Slots> slots_;
  std::size_t param_count_ = 0;
};

/// Free-function forms of Network::forward / backward.
template <typename T>
ForwardResult<T> forward(const NetworkParams<T>& params, const LayerSpecList& layers,
                         const Tensor<T>& input, const StochasticEvalContext<T>& ctx) {
  Shape item(input.shape().begin() + 1, input.shape().end());
  return Network<T>(layers, item).forward(params, input, ctx);
}

template <typename T>
Gradients<T> backward(const NetworkParams<T>& params, const LayerSpecList& layers,
                      const Shape& input_shape, const ActivationTape<T>& tape,
                      const Tensor<T>& loss_grad) {
  return Network<T>(layers, input_shape).backward(params, tape, loss_grad);
}

extern template class Network<float>;
extern template class Network<double>;
extern template struct NetworkParams<float>;
extern template struct NetworkParams<double>;

}  // namespace selfens
