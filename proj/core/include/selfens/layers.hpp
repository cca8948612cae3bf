#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "selfens/tensor.hpp"

namespace selfens {

enum class LayerKind {
  kGaussianNoise,
  kConv,
  kLeakyRelu,
  kMaxPool,
  kDropout,
  kDense,
  kGlobalAvgPool,
  kSoftmax,
};

enum class Padding { kSame, kValid };

/// One entry of a declarative network description. Only the fields relevant
/// to `kind` are meaningful; use the named constructors.
struct LayerSpec {
  LayerKind kind = LayerKind::kSoftmax;
  double sigma = 0.0;           // gaussian_noise
  std::size_t kernel = 0;       // conv, max_pool
  std::size_t stride = 0;       // max_pool
  std::size_t out = 0;          // conv channels, dense width
  Padding padding = Padding::kSame;
  double slope = 0.1;           // leaky_relu
  double drop_prob = 0.0;       // dropout
  bool weight_norm = false;     // conv, dense
  bool mean_only_bn = false;    // conv, dense
  double bn_momentum = 0.999;   // running-mean decay

  static LayerSpec gaussian_noise(double sigma);
  static LayerSpec conv(std::size_t kernel, std::size_t out_channels, Padding padding,
                        bool weight_norm = true, bool mean_only_bn = true);
  static LayerSpec leaky_relu(double slope = 0.1);
  static LayerSpec max_pool(std::size_t kernel, std::size_t stride);
  static LayerSpec dropout(double p);
  static LayerSpec dense(std::size_t out, bool weight_norm = true, bool mean_only_bn = true);
  static LayerSpec global_avg_pool();
  static LayerSpec softmax();

  bool has_params() const { return kind == LayerKind::kConv || kind == LayerKind::kDense; }
  bool is_stochastic() const {
    return kind == LayerKind::kGaussianNoise || kind == LayerKind::kDropout;
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

using LayerSpecList = std::vector<LayerSpec>;

std::string_view layer_kind_name(LayerKind kind);

/// Output item shape of one layer (batch dimension excluded).
Shape layer_output_shape(const LayerSpec& layer, const Shape& input);

/// Validates that `layers` chain from `input` and returns every intermediate
/// item shape: element 0 is `input`, element i+1 the output of layer i.
/// Throws ConfigError on the first layer that does not fit.
std::vector<Shape> chain_shapes(const LayerSpecList& layers, const Shape& input);

/// Number of classes produced by a chain (width of the final output).
std::size_t output_width(const LayerSpecList& layers, const Shape& input);

/// The 13-layer ConvPool network used for all image experiments:
/// gaussian noise 0.15, 3x(conv128 3x3), pool, dropout .5, 3x(conv256 3x3),
/// pool, dropout .5, conv512 3x3 valid, conv256 1x1, conv128 1x1,
/// global average pool, dense C, softmax. Every conv/dense layer uses weight
/// normalization plus mean-only batch normalization with momentum 0.999 and
/// is followed by leaky ReLU(0.1), except the classifier.
LayerSpecList build_cifar_network(const Shape& input, std::size_t classes);

enum class SmallPreset { kMlp, kCnnSmall };

SmallPreset parse_small_preset(std::string_view name);
std::string_view small_preset_name(SmallPreset preset);

struct SmallNetworkOptions {
  std::size_t hidden = 64;
  std::size_t hidden_layers = 2;
  double input_noise = 0.15;
  double dropout = 0.5;
  bool weight_norm = true;
  bool mean_only_bn = true;

  friend bool operator==(const SmallNetworkOptions&, const SmallNetworkOptions&) = default;
};

/// Desk-scale surrogates. `kCnnSmall` uses every layer kind the cifar network
/// uses (with a `valid` and a 1x1 convolution); `kMlp` is noise, then
/// `hidden_layers` x (dense, leaky ReLU, dropout), then dense C and softmax.
LayerSpecList build_small_network(SmallPreset preset, const Shape& input, std::size_t classes,
                                  const SmallNetworkOptions& options = {});

/// Human-readable single-line form, e.g.
/// "noise:0.15 dense:64:wn:bn lrelu:0.1 dropout:0.5 dense:2:wn:bn softmax".
std::string layers_to_string(const LayerSpecList& layers);
LayerSpecList layers_from_string(std::string_view text);

}  // namespace selfens
