#include "selfens/network.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <random>

#include "selfens/rng.hpp"

namespace selfens {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

struct ConvGeom {
  std::size_t cin, h, w, cout, k, pad, ho, wo;
  std::size_t patch() const { return cin * k * k; }
  std::size_t pixels_out() const { return ho * wo; }
};

ConvGeom conv_geom(const LayerSpec& l, const Shape& in, const Shape& out) {
  const std::size_t pad = l.padding == Padding::kSame ? (l.kernel - 1) / 2 : 0;
  return {in[0], in[1], in[2], l.out, l.kernel, pad, out[1], out[2]};
}

// cols is (cin*k*k, ho*wo).
template <typename T>
void im2col(const T* img, const ConvGeom& g, T* cols) {
  const std::size_t np = g.pixels_out();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* row = cols + ((c * g.k + ky) * g.k + kx) * np;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.h) &&
                                ix < static_cast<std::ptrdiff_t>(g.w);
            row[oy * g.wo + ox] = inside ? img[(c * g.h + iy) * g.w + ix] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeom& g, T* img) {
  const std::size_t np = g.pixels_out();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* row = cols + ((c * g.k + ky) * g.k + kx) * np;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            img[(c * g.h + iy) * g.w + ix] += row[oy * g.wo + ox];
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> effective_weight(const LayerSpec& l, const Tensor<T>& v, const Tensor<T>* gain) {
  if (!l.weight_norm) return v;
  Tensor<T> w(v.shape());
  const std::size_t rows = v.dim(0);
  const std::size_t fan = v.size() / rows;
  for (std::size_t o = 0; o < rows; ++o) {
    T sq{0};
    for (std::size_t j = 0; j < fan; ++j) sq += v[o * fan + j] * v[o * fan + j];
    const T scale = (*gain)[o] / std::sqrt(sq);
    for (std::size_t j = 0; j < fan; ++j) w[o * fan + j] = v[o * fan + j] * scale;
  }
  return w;
}

// Pre-activation of a conv/dense layer (no normalization, no bias).
// Dense output is (B, out); conv output is (B, out, ho, wo).
template <typename T>
Tensor<T> linear_forward(const LayerSpec& l, const Shape& in_shape, const Shape& out_shape,
                         const Tensor<T>& x, const Tensor<T>& w) {
  const std::size_t batch = x.dim(0);
  Shape shape{batch};
  shape.insert(shape.end(), out_shape.begin(), out_shape.end());
  Tensor<T> y(shape);
  if (l.kind == LayerKind::kDense) {
    const std::size_t in = in_shape[0];
    CMapMat<T> X(x.raw(), batch, in);
    CMapMat<T> W(w.raw(), l.out, in);
    MapMat<T> Y(y.raw(), batch, l.out);
    Y.noalias() = X * W.transpose();
    return y;
  }
  const ConvGeom g = conv_geom(l, in_shape, out_shape);
  std::vector<T> cols(g.patch() * g.pixels_out());
  CMapMat<T> W(w.raw(), g.cout, g.patch());
  for (std::size_t n = 0; n < batch; ++n) {
    im2col(x.item(n).data(), g, cols.data());
    CMapMat<T> C(cols.data(), g.patch(), g.pixels_out());
    MapMat<T> Y(y.item(n).data(), g.cout, g.pixels_out());
    Y.noalias() = W * C;
  }
  return y;
}

// Per-unit (channel) layout of a (B, out[, h, w]) activation.
struct UnitLayout {
  std::size_t batch, units, spatial;
};

template <typename T>
UnitLayout unit_layout(const Tensor<T>& y) {
  const std::size_t batch = y.dim(0);
  const std::size_t units = y.dim(1);
  return {batch, units, y.size() / (batch * units)};
}

template <typename T>
std::vector<T> unit_means(const Tensor<T>& y) {
  const UnitLayout u = unit_layout(y);
  std::vector<T> mean(u.units, T{0});
  for (std::size_t n = 0; n < u.batch; ++n) {
    for (std::size_t o = 0; o < u.units; ++o) {
      const T* p = y.raw() + (n * u.units + o) * u.spatial;
      T s{0};
      for (std::size_t k = 0; k < u.spatial; ++k) s += p[k];
      mean[o] += s;
    }
  }
  const T count = static_cast<T>(u.batch * u.spatial);
  for (auto& m : mean) m /= count;
  return mean;
}

template <typename T>
void add_per_unit(Tensor<T>& y, const std::vector<T>& delta, T sign) {
  const UnitLayout u = unit_layout(y);
  for (std::size_t n = 0; n < u.batch; ++n) {
    for (std::size_t o = 0; o < u.units; ++o) {
      T* p = y.raw() + (n * u.units + o) * u.spatial;
      const T d = sign * delta[o];
      for (std::size_t k = 0; k < u.spatial; ++k) p[k] += d;
    }
  }
}

template <typename T>
T corrected_running_mean(const LayerSpec& l, T rm, T steps) {
  if (steps <= T{0}) return T{0};
  const double denom = 1.0 - std::pow(l.bn_momentum, static_cast<double>(steps));
  return static_cast<T>(static_cast<double>(rm) / denom);
}

std::string layer_label(std::size_t i, const LayerSpec& l) {
  return "layer " + std::to_string(i) + " (" + std::string(layer_kind_name(l.kind)) + ")";
}

Shape with_batch(std::size_t batch, const Shape& item) {
  Shape s{batch};
  s.insert(s.end(), item.begin(), item.end());
  return s;
}

}  // namespace

template <typename T>
const ParamTensor<T>* NetworkParams<T>::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

template <typename T>
ParamTensor<T>* NetworkParams<T>::find(std::string_view name) {
  for (auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

template <typename T>
std::size_t NetworkParams<T>::trainable_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.trainable ? 1 : 0;
  return n;
}

template <typename T>
Network<T>::Network(LayerSpecList layers, Shape input_shape)
    : layers_(std::move(layers)), shapes_(chain_shapes(layers_, input_shape)) {
  slots_.resize(layers_.size());
  std::size_t next = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    if (!l.has_params()) continue;
    if (l.mean_only_bn && !(l.bn_momentum > 0.0 && l.bn_momentum < 1.0)) {
      throw ConfigError(layer_label(i, l) + ": batch-norm momentum must be in (0,1)");
    }
    Slots& s = slots_[i];
    s.weight = next++;
    if (l.weight_norm) s.gain = next++;
    s.bias = next++;
    if (l.mean_only_bn) {
      s.running_mean = next++;
      s.running_steps = next++;
    }
  }
  param_count_ = next;
}

template <typename T>
void Network<T>::check_params(const NetworkParams<T>& params) const {
  if (params.size() != param_count_) {
    throw ConfigError("parameter set has " + std::to_string(params.size()) + " tensors, network expects " +
                      std::to_string(param_count_));
  }
}

template <typename T>
NetworkParams<T> Network<T>::init_params(std::uint64_t seed) const {
  NetworkParams<T> params;
  params.tensors.resize(param_count_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    if (!l.has_params()) continue;
    const Shape& in = shapes_[i];
    const std::string prefix = std::to_string(i) + "." + std::string(layer_kind_name(l.kind)) + ".";
    const Slots& s = slots_[i];
    Shape wshape = l.kind == LayerKind::kDense ? Shape{l.out, in[0]} : Shape{l.out, in[0], l.kernel, l.kernel};
    const std::size_t fan_in = shape_size(wshape) / l.out;
    Tensor<T> w(wshape);
    Rng rng(derive_seed(seed, {i}));
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (auto& v : w.data()) v = static_cast<T>(normal(rng));
    if (l.weight_norm) {
      Tensor<T> g(Shape{l.out});
      for (std::size_t o = 0; o < l.out; ++o) {
        T sq{0};
        for (std::size_t j = 0; j < fan_in; ++j) sq += w[o * fan_in + j] * w[o * fan_in + j];
        g[o] = std::sqrt(sq);
      }
      params.tensors[*s.gain] = {prefix + "gain", std::move(g), true};
    }
    params.tensors[*s.weight] = {prefix + "weight", std::move(w), true};
    params.tensors[*s.bias] = {prefix + "bias", Tensor<T>(Shape{l.out}), true};
    if (l.mean_only_bn) {
      params.tensors[*s.running_mean] = {prefix + "running_mean", Tensor<T>(Shape{l.out}), false};
      params.tensors[*s.running_steps] = {prefix + "running_steps", Tensor<T>(Shape{1}), false};
    }
  }
  return params;
}

template <typename T>
MaskSet<T> Network<T>::identity_masks(std::size_t batch) const {
  MaskSet<T> masks;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    if (l.kind == LayerKind::kGaussianNoise) masks.emplace(i, Tensor<T>(with_batch(batch, shapes_[i]), T{0}));
    if (l.kind == LayerKind::kDropout) masks.emplace(i, Tensor<T>(with_batch(batch, shapes_[i]), T{1}));
  }
  return masks;
}

template <typename T>
ForwardResult<T> Network<T>::forward(const NetworkParams<T>& params, const Tensor<T>& input,
                                     const StochasticEvalContext<T>& ctx) const {
  check_params(params);
  if (input.rank() != shapes_[0].size() + 1 ||
      !std::equal(shapes_[0].begin(), shapes_[0].end(), input.shape().begin() + 1)) {
    throw ConfigError("input shape " + shape_string(input.shape()) + " does not match network input " +
                      shape_string(shapes_[0]) + " (plus batch dimension)");
  }
  const std::size_t batch = input.dim(0);
  if (batch == 0) throw ConfigError("empty batch");

  ForwardResult<T> result;
  ActivationTape<T>& tape = result.tape;
  tape.mode = ctx.mode;
  tape.param_count = param_count_;
  tape.records.resize(layers_.size());

  Tensor<T> x = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const Shape& in_shape = shapes_[i];
    const Shape& out_shape = shapes_[i + 1];
    LayerRecord<T>& rec = tape.records[i];
    const bool train = ctx.mode == Mode::kTrain;

    const auto draw = [&](auto&& make) -> Tensor<T> {
      if (ctx.replay) {
        const auto it = ctx.replay->find(i);
        if (it != ctx.replay->end()) {
          if (it->second.shape() != x.shape()) {
            throw ConfigError(layer_label(i, l) + ": replayed draw has shape " + shape_string(it->second.shape()) +
                              ", activation is " + shape_string(x.shape()));
          }
          return it->second;
        }
      }
      Rng rng(derive_seed(ctx.seed, {i}));
      Tensor<T> m(x.shape());
      for (auto& v : m.data()) v = make(rng);
      return m;
    };

    Tensor<T> y;
    switch (l.kind) {
      case LayerKind::kGaussianNoise: {
        y = x;
        if (train && l.sigma > 0.0) {
          std::normal_distribution<double> normal(0.0, l.sigma);
          Tensor<T> noise = draw([&](Rng& r) { return static_cast<T>(normal(r)); });
          for (std::size_t k = 0; k < y.size(); ++k) y[k] += noise[k];
          tape.masks.emplace(i, std::move(noise));
        }
        break;
      }
      case LayerKind::kDropout: {
        y = x;
        if (train && l.drop_prob > 0.0) {
          const double keep = 1.0 - l.drop_prob;
          std::bernoulli_distribution coin(keep);
          const T scale = static_cast<T>(1.0 / keep);
          Tensor<T> mask = draw([&](Rng& r) { return coin(r) ? scale : T{0}; });
          for (std::size_t k = 0; k < y.size(); ++k) y[k] *= mask[k];
          tape.masks.emplace(i, std::move(mask));
        }
        break;
      }
      case LayerKind::kLeakyRelu: {
        y = x;
        const T slope = static_cast<T>(l.slope);
        for (auto& v : y.data()) v = v > T{0} ? v : slope * v;
        rec.input = x;
        break;
      }
      case LayerKind::kConv:
      case LayerKind::kDense: {
        const Slots& s = slots_[i];
        const Tensor<T>* gain = s.gain ? &params.tensors[*s.gain].value : nullptr;
        Tensor<T> w = effective_weight(l, params.tensors[*s.weight].value, gain);
        y = linear_forward(l, in_shape, out_shape, x, w);
        if (l.mean_only_bn) {
          if (train) {
            std::vector<T> mean = unit_means(y);
            add_per_unit(y, mean, T{-1});
            rec.batch_mean = Tensor<T>(Shape{l.out}, std::move(mean));
          } else {
            const Tensor<T>& rm = params.tensors[*s.running_mean].value;
            const T steps = params.tensors[*s.running_steps].value[0];
            std::vector<T> mean(l.out);
            for (std::size_t o = 0; o < l.out; ++o) mean[o] = corrected_running_mean(l, rm[o], steps);
            add_per_unit(y, mean, T{-1});
          }
        }
        add_per_unit(y, params.tensors[*s.bias].value.values(), T{1});
        rec.input = x;
        rec.weight = std::move(w);
        break;
      }
      case LayerKind::kMaxPool: {
        const std::size_t c = in_shape[0], h = in_shape[1], w = in_shape[2];
        const std::size_t ho = out_shape[1], wo = out_shape[2];
        y = Tensor<T>(with_batch(batch, out_shape));
        rec.argmax.resize(y.size());
        for (std::size_t n = 0; n < batch; ++n) {
          const T* src = x.item(n).data();
          for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t oy = 0; oy < ho; ++oy) {
              for (std::size_t ox = 0; ox < wo; ++ox) {
                std::size_t best = (ch * h + oy * l.stride) * w + ox * l.stride;
                for (std::size_t ky = 0; ky < l.kernel; ++ky) {
                  for (std::size_t kx = 0; kx < l.kernel; ++kx) {
                    const std::size_t idx = (ch * h + oy * l.stride + ky) * w + ox * l.stride + kx;
                    if (src[idx] > src[best]) best = idx;
                  }
                }
                const std::size_t o = ((n * c + ch) * ho + oy) * wo + ox;
                y[o] = src[best];
                rec.argmax[o] = static_cast<std::uint32_t>(best);
              }
            }
          }
        }
        break;
      }
      case LayerKind::kGlobalAvgPool: {
        const std::size_t c = in_shape[0];
        const std::size_t spatial = in_shape[1] * in_shape[2];
        y = Tensor<T>(Shape{batch, c});
        for (std::size_t n = 0; n < batch; ++n) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const T* p = x.raw() + (n * c + ch) * spatial;
            T s{0};
            for (std::size_t k = 0; k < spatial; ++k) s += p[k];
            y[n * c + ch] = s / static_cast<T>(spatial);
          }
        }
        break;
      }
      case LayerKind::kSoftmax: {
        y = x;
        const std::size_t width = in_shape[0];
        for (std::size_t n = 0; n < batch; ++n) {
          T* row = y.raw() + n * width;
          const T mx = *std::max_element(row, row + width);
          T sum{0};
          for (std::size_t k = 0; k < width; ++k) {
            row[k] = std::exp(row[k] - mx);
            sum += row[k];
          }
          for (std::size_t k = 0; k < width; ++k) row[k] /= sum;
        }
        rec.output = y;
        break;
      }
    }
    if (!y.all_finite()) {
      throw DivergenceError("non-finite activation in " + layer_label(i, l));
    }
    x = std::move(y);
  }
  result.output = std::move(x);
  return result;
}

template <typename T>
Gradients<T> Network<T>::backward(const NetworkParams<T>& params, const ActivationTape<T>& tape,
                                  const Tensor<T>& loss_grad) const {
  check_params(params);
  if (tape.records.size() != layers_.size() || tape.param_count != param_count_) {
    throw ConfigError("activation tape was not produced by this network");
  }
  Gradients<T> grads;
  grads.reserve(params.size());
  for (const auto& p : params.tensors) grads.emplace_back(p.value.shape());

  if (loss_grad.rank() == 0) throw ConfigError("empty loss gradient");
  const std::size_t batch = loss_grad.dim(0);
  if (loss_grad.shape() != with_batch(batch, shapes_.back())) {
    throw ConfigError("loss gradient shape " + shape_string(loss_grad.shape()) + " does not match output");
  }

  Tensor<T> dy = loss_grad;
  for (std::size_t ii = layers_.size(); ii-- > 0;) {
    const LayerSpec& l = layers_[ii];
    const LayerRecord<T>& rec = tape.records[ii];
    const Shape& in_shape = shapes_[ii];
    const Shape& out_shape = shapes_[ii + 1];
    Tensor<T> dx;
    switch (l.kind) {
      case LayerKind::kGaussianNoise:
        dx = std::move(dy);
        break;
      case LayerKind::kDropout: {
        dx = std::move(dy);
        const auto it = tape.masks.find(ii);
        if (it != tape.masks.end()) {
          for (std::size_t k = 0; k < dx.size(); ++k) dx[k] *= it->second[k];
        }
        break;
      }
      case LayerKind::kLeakyRelu: {
        dx = std::move(dy);
        const T slope = static_cast<T>(l.slope);
        for (std::size_t k = 0; k < dx.size(); ++k) {
          if (!(rec.input[k] > T{0})) dx[k] *= slope;
        }
        break;
      }
      case LayerKind::kConv:
      case LayerKind::kDense: {
        const Slots& s = slots_[ii];
        const UnitLayout u = unit_layout(dy);
        Tensor<T>& db = grads[*s.bias];
        std::vector<T> dy_mean = unit_means(dy);
        for (std::size_t o = 0; o < u.units; ++o) db[o] = dy_mean[o] * static_cast<T>(u.batch * u.spatial);
        if (l.mean_only_bn && tape.mode == Mode::kTrain) add_per_unit(dy, dy_mean, T{-1});

        const Tensor<T>& w = rec.weight;
        Tensor<T> dw(w.shape());
        dx = Tensor<T>(rec.input.shape());
        if (l.kind == LayerKind::kDense) {
          const std::size_t in = in_shape[0];
          CMapMat<T> X(rec.input.raw(), batch, in);
          CMapMat<T> W(w.raw(), l.out, in);
          CMapMat<T> DY(dy.raw(), batch, l.out);
          MapMat<T>(dw.raw(), l.out, in).noalias() = DY.transpose() * X;
          MapMat<T>(dx.raw(), batch, in).noalias() = DY * W;
        } else {
          const ConvGeom g = conv_geom(l, in_shape, out_shape);
          std::vector<T> cols(g.patch() * g.pixels_out());
          std::vector<T> dcols(cols.size());
          CMapMat<T> W(w.raw(), g.cout, g.patch());
          MapMat<T> DW(dw.raw(), g.cout, g.patch());
          for (std::size_t n = 0; n < batch; ++n) {
            im2col(rec.input.item(n).data(), g, cols.data());
            CMapMat<T> C(cols.data(), g.patch(), g.pixels_out());
            CMapMat<T> DY(dy.item(n).data(), g.cout, g.pixels_out());
            DW.noalias() += DY * C.transpose();
            MapMat<T>(dcols.data(), g.patch(), g.pixels_out()).noalias() = W.transpose() * DY;
            col2im_add(dcols.data(), g, dx.item(n).data());
          }
        }

        Tensor<T>& dv = grads[*s.weight];
        if (l.weight_norm) {
          const Tensor<T>& v = params.tensors[*s.weight].value;
          const Tensor<T>& gain = params.tensors[*s.gain].value;
          Tensor<T>& dg = grads[*s.gain];
          const std::size_t fan = v.size() / l.out;
          for (std::size_t o = 0; o < l.out; ++o) {
            T sq{0};
            for (std::size_t j = 0; j < fan; ++j) sq += v[o * fan + j] * v[o * fan + j];
            const T norm = std::sqrt(sq);
            T dot{0};
            for (std::size_t j = 0; j < fan; ++j) dot += dw[o * fan + j] * v[o * fan + j];
            const T dgo = dot / norm;
            dg[o] = dgo;
            const T scale = gain[o] / norm;
            for (std::size_t j = 0; j < fan; ++j) {
              dv[o * fan + j] = scale * (dw[o * fan + j] - dgo * v[o * fan + j] / norm);
            }
          }
        } else {
          dv = std::move(dw);
        }
        break;
      }
      case LayerKind::kMaxPool: {
        dx = Tensor<T>(with_batch(batch, in_shape));
        const std::size_t in_item = shape_size(in_shape);
        const std::size_t out_item = shape_size(out_shape);
        for (std::size_t n = 0; n < batch; ++n) {
          for (std::size_t k = 0; k < out_item; ++k) {
            const std::size_t o = n * out_item + k;
            dx[n * in_item + rec.argmax[o]] += dy[o];
          }
        }
        break;
      }
      case LayerKind::kGlobalAvgPool: {
        dx = Tensor<T>(with_batch(batch, in_shape));
        const std::size_t c = in_shape[0];
        const std::size_t spatial = in_shape[1] * in_shape[2];
        const T inv = T{1} / static_cast<T>(spatial);
        for (std::size_t n = 0; n < batch; ++n) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const T d = dy[n * c + ch] * inv;
            T* p = dx.raw() + (n * c + ch) * spatial;
            for (std::size_t k = 0; k < spatial; ++k) p[k] = d;
          }
        }
        break;
      }
      case LayerKind::kSoftmax: {
        dx = Tensor<T>(dy.shape());
        const std::size_t width = in_shape[0];
        for (std::size_t n = 0; n < batch; ++n) {
          const T* p = rec.output.raw() + n * width;
          const T* g = dy.raw() + n * width;
          T dot{0};
          for (std::size_t k = 0; k < width; ++k) dot += g[k] * p[k];
          for (std::size_t k = 0; k < width; ++k) dx[n * width + k] = p[k] * (g[k] - dot);
        }
        break;
      }
    }
    dy = std::move(dx);
  }
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (!grads[k].all_finite()) {
      throw DivergenceError("non-finite gradient for parameter " + params.tensors[k].name);
    }
  }
  return grads;
}

template <typename T>
void Network<T>::update_running_stats(NetworkParams<T>& params, const ActivationTape<T>& tape) const {
  check_params(params);
  if (tape.mode != Mode::kTrain) return;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    if (!l.has_params() || !l.mean_only_bn) continue;
    const Slots& s = slots_[i];
    Tensor<T>& rm = params.tensors[*s.running_mean].value;
    const Tensor<T>& mean = tape.records[i].batch_mean;
    const T m = static_cast<T>(l.bn_momentum);
    for (std::size_t o = 0; o < l.out; ++o) rm[o] = m * rm[o] + (T{1} - m) * mean[o];
    params.tensors[*s.running_steps].value[0] += T{1};
  }
}

template <typename T>
void Network<T>::data_dependent_init(NetworkParams<T>& params, const Tensor<T>& batch) const {
  check_params(params);
  const auto ctx = StochasticEvalContext<T>::replayed(identity_masks(batch.dim(0)));
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    if (!l.has_params() || !l.weight_norm) continue;
    const ForwardResult<T> r = forward(params, batch, ctx);
    const Slots& s = slots_[i];
    const Tensor<T>& x = r.tape.records[i].input;
    const Tensor<T> t = linear_forward(l, shapes_[i], shapes_[i + 1], x, r.tape.records[i].weight);
    const std::vector<T> mean = unit_means(t);
    const UnitLayout u = unit_layout(t);
    std::vector<T> var(u.units, T{0});
    for (std::size_t n = 0; n < u.batch; ++n) {
      for (std::size_t o = 0; o < u.units; ++o) {
        const T* p = t.raw() + (n * u.units + o) * u.spatial;
        for (std::size_t k = 0; k < u.spatial; ++k) var[o] += (p[k] - mean[o]) * (p[k] - mean[o]);
      }
    }
    Tensor<T>& gain = params.tensors[*s.gain].value;
    Tensor<T>& bias = params.tensors[*s.bias].value;
    for (std::size_t o = 0; o < u.units; ++o) {
      const T sd = std::sqrt(var[o] / static_cast<T>(u.batch * u.spatial));
      const T inv = T{1} / std::max(sd, static_cast<T>(1e-6));
      gain[o] *= inv;
      bias[o] = l.mean_only_bn ? T{0} : -mean[o] * inv;
    }
  }
}

template struct NetworkParams<float>;
template struct NetworkParams<double>;
template class Network<float>;
template class Network<double>;

}  // namespace selfens
