#include "selfens/layers.hpp"

#include <charconv>
#include <sstream>

#include "selfens/text.hpp"

namespace selfens {

LayerSpec LayerSpec::gaussian_noise(double sigma) {
  if (!(sigma >= 0.0)) throw ConfigError("gaussian_noise sigma must be >= 0");
  LayerSpec l;
  l.kind = LayerKind::kGaussianNoise;
  l.sigma = sigma;
  return l;
}

LayerSpec LayerSpec::conv(std::size_t kernel, std::size_t out_channels, Padding padding,
                          bool weight_norm, bool mean_only_bn) {
  if (kernel == 0 || out_channels == 0) throw ConfigError("conv kernel and channels must be > 0");
  if (padding == Padding::kSame && kernel % 2 == 0) {
    throw ConfigError("same-padded conv needs an odd kernel");
  }
  LayerSpec l;
  l.kind = LayerKind::kConv;
  l.kernel = kernel;
  l.out = out_channels;
  l.padding = padding;
  l.weight_norm = weight_norm;
  l.mean_only_bn = mean_only_bn;
  return l;
}

LayerSpec LayerSpec::leaky_relu(double slope) {
  LayerSpec l;
  l.kind = LayerKind::kLeakyRelu;
  l.slope = slope;
  return l;
}

LayerSpec LayerSpec::max_pool(std::size_t kernel, std::size_t stride) {
  if (kernel == 0 || stride == 0) throw ConfigError("max_pool kernel and stride must be > 0");
  LayerSpec l;
  l.kind = LayerKind::kMaxPool;
  l.kernel = kernel;
  l.stride = stride;
  return l;
}

LayerSpec LayerSpec::dropout(double p) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must be in [0,1)");
  LayerSpec l;
  l.kind = LayerKind::kDropout;
  l.drop_prob = p;
  return l;
}

LayerSpec LayerSpec::dense(std::size_t out, bool weight_norm, bool mean_only_bn) {
  if (out == 0) throw ConfigError("dense width must be > 0");
  LayerSpec l;
  l.kind = LayerKind::kDense;
  l.out = out;
  l.weight_norm = weight_norm;
  l.mean_only_bn = mean_only_bn;
  return l;
}

LayerSpec LayerSpec::global_avg_pool() {
  LayerSpec l;
  l.kind = LayerKind::kGlobalAvgPool;
  return l;
}

LayerSpec LayerSpec::softmax() { return LayerSpec{}; }

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kGaussianNoise: return "noise";
    case LayerKind::kConv: return "conv";
    case LayerKind::kLeakyRelu: return "lrelu";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kDropout: return "dropout";
    case LayerKind::kDense: return "dense";
    case LayerKind::kGlobalAvgPool: return "gap";
    case LayerKind::kSoftmax: return "softmax";
  }
  return "?";
}

Shape layer_output_shape(const LayerSpec& layer, const Shape& input) {
  const auto fail = [&](const std::string& why) -> Shape {
    throw ConfigError(std::string(layer_kind_name(layer.kind)) + " layer cannot take input " +
                      shape_string(input) + ": " + why);
  };
  switch (layer.kind) {
    case LayerKind::kGaussianNoise:
    case LayerKind::kLeakyRelu:
    case LayerKind::kDropout:
      return input;
    case LayerKind::kConv: {
      if (input.size() != 3) return fail("expected (channels,height,width)");
      if (layer.padding == Padding::kSame) return {layer.out, input[1], input[2]};
      if (input[1] < layer.kernel || input[2] < layer.kernel) return fail("kernel larger than image");
      return {layer.out, input[1] - layer.kernel + 1, input[2] - layer.kernel + 1};
    }
    case LayerKind::kMaxPool: {
      if (input.size() != 3) return fail("expected (channels,height,width)");
      if (input[1] < layer.kernel || input[2] < layer.kernel) return fail("window larger than image");
      return {input[0], (input[1] - layer.kernel) / layer.stride + 1,
              (input[2] - layer.kernel) / layer.stride + 1};
    }
    case LayerKind::kGlobalAvgPool:
      if (input.size() != 3) return fail("expected (channels,height,width)");
      return {input[0]};
    case LayerKind::kDense:
      if (input.size() != 1) return fail("expected a flat vector; add global_avg_pool first");
      return {layer.out};
    case LayerKind::kSoftmax:
      if (input.size() != 1) return fail("expected a flat vector");
      if (input[0] < 2) return fail("needs at least two classes");
      return input;
  }
  return input;
}

std::vector<Shape> chain_shapes(const LayerSpecList& layers, const Shape& input) {
  if (input.empty() || shape_size(input) == 0) throw ConfigError("empty input shape");
  std::vector<Shape> shapes{input};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    try {
      shapes.push_back(layer_output_shape(layers[i], shapes.back()));
    } catch (const ConfigError& e) {
      throw ConfigError("layer " + std::to_string(i) + ": " + e.what());
    }
  }
  return shapes;
}

std::size_t output_width(const LayerSpecList& layers, const Shape& input) {
  const auto shapes = chain_shapes(layers, input);
  if (shapes.back().size() != 1) throw ConfigError("network output is not a flat vector");
  return shapes.back()[0];
}

LayerSpecList build_cifar_network(const Shape& input, std::size_t classes) {
  if (input != Shape{3, 32, 32}) {
    throw ConfigError("cifar network expects a (3,32,32) input, got " + shape_string(input));
  }
  if (classes < 2) throw ConfigError("cifar network needs at least 2 classes");
  LayerSpecList net;
  const auto conv_block = [&](std::size_t kernel, std::size_t channels, Padding padding) {
    net.push_back(LayerSpec::conv(kernel, channels, padding));
    net.push_back(LayerSpec::leaky_relu(0.1));
  };
  net.push_back(LayerSpec::gaussian_noise(0.15));
  for (int i = 0; i < 3; ++i) conv_block(3, 128, Padding::kSame);
  net.push_back(LayerSpec::max_pool(2, 2));
  net.push_back(LayerSpec::dropout(0.5));
  for (int i = 0; i < 3; ++i) conv_block(3, 256, Padding::kSame);
  net.push_back(LayerSpec::max_pool(2, 2));
  net.push_back(LayerSpec::dropout(0.5));
  conv_block(3, 512, Padding::kValid);
  conv_block(1, 256, Padding::kSame);
  conv_block(1, 128, Padding::kSame);
  net.push_back(LayerSpec::global_avg_pool());
  net.push_back(LayerSpec::dense(classes));
  net.push_back(LayerSpec::softmax());
  chain_shapes(net, input);
  return net;
}

SmallPreset parse_small_preset(std::string_view name) {
  if (name == "mlp") return SmallPreset::kMlp;
  if (name == "cnn_small") return SmallPreset::kCnnSmall;
  throw ConfigError("unknown network preset '" + std::string(name) +
                    "' (expected mlp, cnn_small or cifar)");
}

std::string_view small_preset_name(SmallPreset preset) {
  return preset == SmallPreset::kMlp ? "mlp" : "cnn_small";
}

LayerSpecList build_small_network(SmallPreset preset, const Shape& input, std::size_t classes,
                                  const SmallNetworkOptions& options) {
  if (classes < 2) throw ConfigError("need at least 2 classes");
  const bool wn = options.weight_norm;
  const bool bn = options.mean_only_bn;
  LayerSpecList net;
  net.push_back(LayerSpec::gaussian_noise(options.input_noise));
  if (preset == SmallPreset::kMlp) {
    if (input.size() != 1) throw ConfigError("mlp preset expects flat inputs, got " + shape_string(input));
    for (std::size_t i = 0; i < options.hidden_layers; ++i) {
      net.push_back(LayerSpec::dense(options.hidden, wn, bn));
      net.push_back(LayerSpec::leaky_relu(0.1));
      if (options.dropout > 0.0) net.push_back(LayerSpec::dropout(options.dropout));
    }
  } else {
    if (input.size() != 3) throw ConfigError("cnn_small expects (channels,height,width), got " + shape_string(input));
    const std::size_t width = options.hidden;
    net.push_back(LayerSpec::conv(3, width, Padding::kSame, wn, bn));
    net.push_back(LayerSpec::leaky_relu(0.1));
    net.push_back(LayerSpec::max_pool(2, 2));
    net.push_back(LayerSpec::dropout(options.dropout));
    net.push_back(LayerSpec::conv(3, 2 * width, Padding::kValid, wn, bn));
    net.push_back(LayerSpec::leaky_relu(0.1));
    net.push_back(LayerSpec::conv(1, width, Padding::kSame, wn, bn));
    net.push_back(LayerSpec::leaky_relu(0.1));
    net.push_back(LayerSpec::global_avg_pool());
  }
  net.push_back(LayerSpec::dense(classes, wn, bn));
  net.push_back(LayerSpec::softmax());
  chain_shapes(net, input);
  return net;
}

std::string layers_to_string(const LayerSpecList& layers) {
  std::ostringstream os;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    if (i != 0) os << ' ';
    os << layer_kind_name(l.kind);
    switch (l.kind) {
      case LayerKind::kGaussianNoise: os << ':' << format_real(l.sigma); break;
      case LayerKind::kLeakyRelu: os << ':' << format_real(l.slope); break;
      case LayerKind::kDropout: os << ':' << format_real(l.drop_prob); break;
      case LayerKind::kMaxPool: os << ':' << l.kernel << ':' << l.stride; break;
      case LayerKind::kConv:
        os << ':' << l.kernel << ':' << l.out << ':' << (l.padding == Padding::kSame ? "same" : "valid");
        [[fallthrough]];
      case LayerKind::kDense:
        if (l.kind == LayerKind::kDense) os << ':' << l.out;
        if (l.weight_norm) os << ":wn";
        if (l.mean_only_bn) os << ":bn";
        if (l.mean_only_bn && l.bn_momentum != 0.999) os << ":m=" << format_real(l.bn_momentum);
        break;
      default: break;
    }
  }
  return os.str();
}

LayerSpecList layers_from_string(std::string_view text) {
  LayerSpecList layers;
  for (const std::string& token : split(text, ' ')) {
    if (token.empty()) continue;
    const std::vector<std::string> f = split(token, ':');
    const std::string& kind = f[0];
    const auto need = [&](std::size_t n) {
      if (f.size() < n + 1) throw ConfigError("layer '" + token + "' needs " + std::to_string(n) + " argument(s)");
    };
    if (kind == "noise") {
      need(1);
      layers.push_back(LayerSpec::gaussian_noise(parse_real(f[1])));
    } else if (kind == "lrelu") {
      layers.push_back(LayerSpec::leaky_relu(f.size() > 1 ? parse_real(f[1]) : 0.1));
    } else if (kind == "dropout") {
      need(1);
      layers.push_back(LayerSpec::dropout(parse_real(f[1])));
    } else if (kind == "maxpool") {
      need(2);
      layers.push_back(LayerSpec::max_pool(parse_size(f[1]), parse_size(f[2])));
    } else if (kind == "gap") {
      layers.push_back(LayerSpec::global_avg_pool());
    } else if (kind == "softmax") {
      layers.push_back(LayerSpec::softmax());
    } else if (kind == "conv" || kind == "dense") {
      std::size_t next = 0;
      LayerSpec l;
      if (kind == "conv") {
        need(3);
        Padding padding;
        if (f[3] == "same") padding = Padding::kSame;
        else if (f[3] == "valid") padding = Padding::kValid;
        else throw ConfigError("conv padding must be same or valid, got '" + f[3] + "'");
        l = LayerSpec::conv(parse_size(f[1]), parse_size(f[2]), padding, false, false);
        next = 4;
      } else {
        need(1);
        l = LayerSpec::dense(parse_size(f[1]), false, false);
        next = 2;
      }
      for (std::size_t i = next; i < f.size(); ++i) {
        if (f[i] == "wn") l.weight_norm = true;
        else if (f[i] == "bn") l.mean_only_bn = true;
        else if (f[i].rfind("m=", 0) == 0) l.bn_momentum = parse_real(f[i].substr(2));
        else throw ConfigError("unknown layer flag '" + f[i] + "' in '" + token + "'");
      }
      if (!(l.bn_momentum > 0.0 && l.bn_momentum < 1.0)) {
        throw ConfigError("batch-norm momentum must be in (0,1)");
      }
      layers.push_back(l);
    } else {
      throw ConfigError("unknown layer kind '" + kind + "'");
    }
  }
  return layers;
}

}  // namespace selfens
