#include "convdial/tensor/nn.hpp"

#include <cmath>

#include "convdial/util/error.hpp"

namespace convdial {

Tensor ParameterStore::add_parameter(const std::string& name, Tensor t) {
  for (const auto& p : params_) {
    if (p.name == name) throw InvalidArgument("duplicate parameter name " + name);
  }
  t.set_requires_grad(true);
  params_.push_back({name, t});
  return t;
}

std::shared_ptr<BatchNormBuffers> ParameterStore::add_batchnorm_buffers(const std::string& name,
                                                                        std::size_t channels, bool initialized) {
  auto buf = std::make_shared<BatchNormBuffers>();
  buf->running_mean = Tensor({channels});
  buf->running_var = Tensor::full({channels}, 1.0);
  buf->initialized = initialized;
  bn_names_.push_back(name);
  bn_.push_back(buf);
  return buf;
}

std::vector<NamedTensor> ParameterStore::buffers() const {
  std::vector<NamedTensor> out;
  out.reserve(bn_.size() * 2);
  for (std::size_t i = 0; i < bn_.size(); ++i) {
    out.push_back({bn_names_[i] + ".running_mean", bn_[i]->running_mean});
    out.push_back({bn_names_[i] + ".running_var", bn_[i]->running_var});
  }
  return out;
}

const Tensor& ParameterStore::parameter(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw InvalidArgument("no parameter named " + name);
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void kaiming_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (auto& v : t.mutable_values()) v = rng.uniform(-bound, bound);
}

std::vector<double> causal_mask(std::size_t out_channels, std::size_t in_channels, std::size_t kernel, MaskType type) {
  if (kernel % 2 == 0) throw InvalidArgument("masked convolution kernel must be odd");
  const std::size_t centre = kernel / 2;
  std::vector<double> mask(out_channels * in_channels * kernel);
  for (std::size_t o = 0; o < out_channels; ++o) {
    for (std::size_t i = 0; i < in_channels; ++i) {
      for (std::size_t j = 0; j < kernel; ++j) {
        const bool visible = type == MaskType::kA ? j < centre : j <= centre;
        mask[(o * in_channels + i) * kernel + j] = visible ? 1.0 : 0.0;
      }
    }
  }
  return mask;
}

LayerParams make_conv(ParameterStore& store, const std::string& name, std::size_t in_channels,
                      std::size_t out_channels, std::size_t kernel_h, std::size_t kernel_w, ConvGeometry geo,
                      Rng& rng, bool with_bias) {
  LayerParams l;
  l.kind = LayerKind::kConv;
  Tensor w({out_channels, in_channels, kernel_h, kernel_w});
  kaiming_uniform(w, in_channels * kernel_h * kernel_w, rng);
  l.weight = store.add_parameter(name + ".weight", w);
  if (with_bias) l.bias = store.add_parameter(name + ".bias", Tensor({out_channels}));
  l.geometry = geo;
  return l;
}

LayerParams make_transpose_conv(ParameterStore& store, const std::string& name, std::size_t in_channels,
                                std::size_t out_channels, std::size_t kernel_h, std::size_t kernel_w,
                                ConvGeometry geo, Rng& rng, bool with_bias) {
  LayerParams l;
  l.kind = LayerKind::kTransposeConv;
  Tensor w({in_channels, out_channels, kernel_h, kernel_w});
  kaiming_uniform(w, in_channels * kernel_h * kernel_w, rng);
  l.weight = store.add_parameter(name + ".weight", w);
  if (with_bias) l.bias = store.add_parameter(name + ".bias", Tensor({out_channels}));
  l.geometry = geo;
  return l;
}

LayerParams make_masked_conv(ParameterStore& store, const std::string& name, std::size_t channels,
                             std::size_t kernel, MaskType type, Rng& rng, bool with_bias) {
  LayerParams l;
  l.kind = LayerKind::kMaskedConv;
  l.mask_type = type;
  l.mask = causal_mask(channels, channels, kernel, type);
  Tensor w({channels, channels, 1, kernel});
  // Only the visible taps feed the fan-in.
  const std::size_t visible = type == MaskType::kA ? kernel / 2 : kernel / 2 + 1;
  kaiming_uniform(w, channels * std::max<std::size_t>(visible, 1), rng);
  l.weight = store.add_parameter(name + ".weight", w);
  if (with_bias) l.bias = store.add_parameter(name + ".bias", Tensor({channels}));
  l.geometry = ConvGeometry{1, 1, 0, kernel / 2};
  return l;
}

LayerParams make_linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  LayerParams l;
  l.kind = LayerKind::kLinear;
  Tensor w({out, in});
  kaiming_uniform(w, in, rng);
  l.weight = store.add_parameter(name + ".weight", w);
  l.bias = store.add_parameter(name + ".bias", Tensor({out}));
  return l;
}

LayerParams make_batchnorm(ParameterStore& store, const std::string& name, std::size_t channels, double momentum) {
  LayerParams l;
  l.kind = LayerKind::kBatchNorm;
  l.weight = store.add_parameter(name + ".gamma", Tensor::full({channels}, 1.0));
  l.bias = store.add_parameter(name + ".beta", Tensor({channels}));
  l.stats = store.add_batchnorm_buffers(name, channels);
  l.momentum = momentum;
  return l;
}

LayerParams make_embedding(ParameterStore& store, const std::string& name, std::size_t vocab, std::size_t dim,
                           Rng& rng) {
  LayerParams l;
  l.kind = LayerKind::kEmbedding;
  Tensor table({vocab, dim});
  // Unit-variance rows. With a small init the question tokens stay too weak
  // for the image channels to latch onto, and training stalls.
  for (auto& v : table.mutable_values()) v = rng.normal();
  l.weight = store.add_parameter(name + ".table", table);
  return l;
}

LayerParams make_relu() { return LayerParams{}; }

Tensor layer_forward(LayerParams& layer, const Tensor& input, Mode mode) {
  switch (layer.kind) {
    case LayerKind::kConv:
      return conv2d(input, layer.weight, layer.bias, layer.geometry);
    case LayerKind::kMaskedConv: {
      for (double m : layer.mask) {
        if (m != 0.0 && m != 1.0) throw InvalidArgument("masked convolution mask must be binary");
      }
      Tensor out = conv2d(input, layer.weight, layer.bias, layer.geometry, layer.mask);
      if (out.shape() != input.shape()) {
        throw ShapeError("masked convolution must preserve shape, got " + shape_str(input.shape()) + " -> " +
                         shape_str(out.shape()));
      }
      return out;
    }
    case LayerKind::kTransposeConv:
      return conv_transpose2d(input, layer.weight, layer.bias, layer.geometry);
    case LayerKind::kLinear:
      return linear(input, layer.weight, layer.bias);
    case LayerKind::kBatchNorm:
      if (!layer.stats) throw StateError("batch norm layer without running statistics");
      return batch_norm2d(input, layer.weight, layer.bias, *layer.stats, mode == Mode::kTrain, layer.momentum,
                          layer.eps);
    case LayerKind::kEmbedding: {
      std::vector<std::int32_t> ids;
      ids.reserve(input.numel());
      for (double v : input.values()) {
        if (v != std::floor(v)) throw InvalidArgument("embedding input must hold integral token ids");
        ids.push_back(static_cast<std::int32_t>(v));
      }
      return embedding(layer.weight, ids, input.shape());
    }
    case LayerKind::kRelu:
      return relu(input);
  }
  throw StateError("unknown layer kind");
}

Tensor ConvBlock::forward(const Tensor& x, Mode mode) {
  return relu(layer_forward(norm, layer_forward(conv, x, mode), mode));
}

ConvBlock make_conv_block(ParameterStore& store, const std::string& name, std::size_t in_channels,
                          std::size_t out_channels, std::size_t kernel_h, std::size_t kernel_w, ConvGeometry geo,
                          Rng& rng, double momentum) {
  return {make_conv(store, name + ".conv", in_channels, out_channels, kernel_h, kernel_w, geo, rng, false),
          make_batchnorm(store, name + ".bn", out_channels, momentum)};
}

ConvBlock make_transpose_conv_block(ParameterStore& store, const std::string& name, std::size_t in_channels,
                                    std::size_t out_channels, std::size_t kernel_h, std::size_t kernel_w,
                                    ConvGeometry geo, Rng& rng, double momentum) {
  return {make_transpose_conv(store, name + ".conv", in_channels, out_channels, kernel_h, kernel_w, geo, rng, false),
          make_batchnorm(store, name + ".bn", out_channels, momentum)};
}

}  // namespace convdial
