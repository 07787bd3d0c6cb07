#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "convdial/tensor/ops.hpp"
#include "convdial/tensor/tensor.hpp"
#include "convdial/util/rng.hpp"

namespace convdial {

enum class Mode { kTrain, kEval };

enum class LayerKind { kConv, kTransposeConv, kMaskedConv, kLinear, kBatchNorm, kEmbedding, kRelu };

/// A: a row sees strictly earlier rows. B: a row also sees itself.
enum class MaskType { kA, kB };

inline constexpr double kBatchNormMomentum = 0.001;
inline constexpr double kBatchNormEps = 1e-5;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Owns every learnable tensor and every batch-norm buffer of a model, in
/// declaration order. That order is the checkpoint order.
class ParameterStore {
 public:
  Tensor add_parameter(const std::string& name, Tensor t);
  std::shared_ptr<BatchNormBuffers> add_batchnorm_buffers(const std::string& name, std::size_t channels,
                                                          bool initialized = true);

  const std::vector<NamedTensor>& parameters() const { return params_; }
  /// Running mean/var tensors, two per batch-norm layer, as "<name>.running_mean" / ".running_var".
  std::vector<NamedTensor> buffers() const;
  const std::vector<std::shared_ptr<BatchNormBuffers>>& batchnorm_buffers() const { return bn_; }

  const Tensor& parameter(const std::string& name) const;
  void zero_grad();
  std::size_t parameter_count() const;

 private:
  std::vector<NamedTensor> params_;
  std::vector<std::string> bn_names_;
  std::vector<std::shared_ptr<BatchNormBuffers>> bn_;
};

/// One layer's learnable state and hyperparameters.
struct LayerParams {
  LayerKind kind = LayerKind::kRelu;
  Tensor weight;  // conv [Co,Ci,kh,kw]; transpose [Ci,Co,kh,kw]; linear [out,in]; bn gamma; embedding [V,E]
  Tensor bias;    // bn beta
  ConvGeometry geometry;
  MaskType mask_type = MaskType::kB;
  std::vector<double> mask;
  std::shared_ptr<BatchNormBuffers> stats;
  double momentum = kBatchNormMomentum;
  double eps = kBatchNormEps;
};

/// Applies one layer. Embedding layers read integral ids stored in `input`
/// (shape [..., L]) and return [..., E, L].
Tensor layer_forward(LayerParams& layer, const Tensor& input, Mode mode);

/// `with_bias` = false leaves the bias undefined, for layers that feed batch
/// norm (which would cancel it and leave it without gradient).
LayerParams make_conv(ParameterStore& store, const std::string& name, std::size_t in_channels,
                      std::size_t out_channels, std::size_t kernel_h, std::size_t kernel_w, ConvGeometry geo,
                      Rng& rng, bool with_bias = true);
LayerParams make_transpose_conv(ParameterStore& store, const std::string& name, std::size_t in_channels,
                                std::size_t out_channels, std::size_t kernel_h, std::size_t kernel_w,
                                ConvGeometry geo, Rng& rng, bool with_bias = true);
/// Size-preserving 1 x k convolution over the last axis of [N, C, 1, R], masked
/// so that row r never reads rows > r (type B) or >= r (type A). `kernel` is odd.
LayerParams make_masked_conv(ParameterStore& store, const std::string& name, std::size_t channels,
                             std::size_t kernel, MaskType type, Rng& rng, bool with_bias = true);
LayerParams make_linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
LayerParams make_batchnorm(ParameterStore& store, const std::string& name, std::size_t channels,
                           double momentum = kBatchNormMomentum);
LayerParams make_embedding(ParameterStore& store, const std::string& name, std::size_t vocab, std::size_t dim,
                           Rng& rng);
LayerParams make_relu();

std::vector<double> causal_mask(std::size_t out_channels, std::size_t in_channels, std::size_t kernel, MaskType type);

/// Kaiming-uniform: U(-b, b) with b = sqrt(6 / fan_in).
void kaiming_uniform(Tensor& t, std::size_t fan_in, Rng& rng);

/// conv -> batch norm -> ReLU, the unit most of the networks are built from.
struct ConvBlock {
  LayerParams conv;
  LayerParams norm;
  Tensor forward(const Tensor& x, Mode mode);
};

ConvBlock make_conv_block(ParameterStore& store, const std::string& name, std::size_t in_channels,
                          std::size_t out_channels, std::size_t kernel_h, std::size_t kernel_w, ConvGeometry geo,
                          Rng& rng, double momentum = kBatchNormMomentum);
ConvBlock make_transpose_conv_block(ParameterStore& store, const std::string& name, std::size_t in_channels,
                                    std::size_t out_channels, std::size_t kernel_h, std::size_t kernel_w,
                                    ConvGeometry geo, Rng& rng, double momentum = kBatchNormMomentum);

}  // namespace convdial
