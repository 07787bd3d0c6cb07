#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "convdial/tensor/tensor.hpp"

namespace convdial {

// Elementwise (identical shapes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// a + beta * b.
Tensor add_scaled(const Tensor& a, const Tensor& b, double beta);
Tensor scale(const Tensor& a, double factor);
Tensor exp(const Tensor& a);
Tensor square(const Tensor& a);
/// max(x, 0); the derivative at exactly 0 is taken as 0.
Tensor relu(const Tensor& a);
/// Identity inside [lo, hi], constant outside (zero gradient there).
Tensor clamp(const Tensor& a, double lo, double hi);

// Reductions to a {1} tensor.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Layout.
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

/// Embeds token ids of shape [..., L] with table [V, E] into [..., E, L].
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids, const Shape& id_shape);

struct ConvGeometry {
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
};

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);
std::size_t conv_transpose_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

/// x [N, Cin, H, W], weight [Cout, Cin, kh, kw], bias [Cout] or undefined.
/// When `mask` is non-empty it multiplies the weight elementwise (same size).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvGeometry& geo,
              std::span<const double> mask = {});

/// x [N, Cin, H, W], weight [Cin, Cout, kh, kw], bias [Cout] or undefined.
/// Adjoint of conv2d with the same geometry.
Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvGeometry& geo);

/// x [R, in], weight [out, in], bias [out] or undefined -> [R, out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct BatchNormBuffers {
  Tensor running_mean;
  Tensor running_var;
  bool initialized = true;
};

/// Per-channel normalization of x [N, C, H, W]. In training mode batch statistics
/// normalize and the buffers move as running <- (1 - m) running + m batch
/// (unbiased variance); in eval mode the buffers normalize.
Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormBuffers& buffers,
                    bool training, double momentum, double eps);

/// Token-wise cross-entropy. logits [N, ..., V] flattened to [N, P, V]; targets
/// N*P ids; optional weights N*P (0 drops a position). Returns per-example sums [N].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                             std::span<const double> weights = {});

/// Closed-form KL(q || p) between diagonal Gaussians given as [N, Z] means and
/// log-variances. Returns [N].
Tensor kl_diag_gaussian(const Tensor& mu_q, const Tensor& logvar_q, const Tensor& mu_p, const Tensor& logvar_p);

/// mu + eps * exp(logvar / 2); eps is a constant of the same shape.
Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& eps);

/// Row-wise log-softmax of a [R, V] value buffer (no graph).
std::vector<double> log_softmax_rows(std::span<const double> logits, std::size_t vocab);

}  // namespace convdial
