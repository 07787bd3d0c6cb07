#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "convdial/cvae/spec.hpp"
#include "convdial/tensor/nn.hpp"
#include "convdial/text/vocabulary.hpp"

namespace convdial {

/// Condition y and data x for a minibatch, already in model-facing form.
struct ModelBatch {
  std::size_t size = 0;
  std::vector<double> image;     // [N, feature_dim], l2-normalised features
  std::vector<double> caption;   // [N, E_fixed, L], fixed caption embedding (zeros at PAD)
  std::vector<TokenId> context;  // [N, 2T-1, L], model A only
  std::vector<TokenId> target;   // [N, M, L]

  /// Throws ShapeError if the buffers do not match `spec`. `with_target`
  /// relaxes the check for generation, where x is unknown.
  void validate(const ModelSpec& spec, bool with_target = true) const;
};

/// Diagonal Gaussian over z, both [N, Z]. A point mass has an undefined logvar.
struct GaussianParams {
  Tensor mu;
  Tensor logvar;
  bool point_mass() const { return !logvar.defined(); }
};

struct PriorOutput {
  GaussianParams prior;
  Tensor condition;  // encoded y, [N, hidden, S, S]
};

inline constexpr double kLogVarClamp = 10.0;

/// Prior, encoder and decoder networks of one model, plus the AR head for
/// B_AR. The word-embedding table is shared by every embedding lookup and the
/// output projection.
class Model {
 public:
  Model(const ModelSpec& spec, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelSpec& spec() const { return spec_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  const Tensor& embedding_table() const { return table_; }
  std::string architecture_hash() const;
  /// Every batch-norm layer, in construction order.
  std::vector<LayerParams*> batchnorm_layers();

  PriorOutput prior_forward(const ModelBatch& batch, Mode mode);
  /// x given as ids [N, M, L].
  GaussianParams encoder_forward(std::span<const TokenId> x, std::size_t n, const Tensor& condition, Mode mode);
  /// x given as a coloured stack [N, M, E, L].
  GaussianParams encoder_forward(const Tensor& x_coloured, const Tensor& condition, Mode mode);
  /// z [N, Z] -> intermediate volume [N, M, E, L].
  Tensor decoder_forward(const Tensor& z, const Tensor& condition, Mode mode);
  /// Intermediate volume -> logits [N, M*L, V], rows in unravelled order
  /// r = m*L + l. B_AR requires the teacher-forced ids [N, M, L].
  Tensor logits(const Tensor& intermediate, std::span<const TokenId> teacher, Mode mode);
  /// The masked-convolution stack on its own: [N, M, E, L] plus teacher ids -> [N, E, 1, M*L].
  Tensor ar_forward(const Tensor& intermediate, std::span<const TokenId> teacher, Mode mode);
  /// Same, with the teacher already embedded as [N, M, E, L] (differentiable in the teacher).
  Tensor ar_forward(const Tensor& intermediate, const Tensor& teacher_coloured, Mode mode);
  /// B_AR logits [N, M*L, V] from an embedded teacher.
  Tensor ar_logits(const Tensor& intermediate, const Tensor& teacher_coloured, Mode mode);

  /// Argmax decode in eval mode. Rows with fixed[r] != 0 keep tokens[r]; the
  /// rest are predicted. B_AR predicts row by row, so a predicted token is
  /// visible to every later row. Returns ids [N, M, L].
  std::vector<TokenId> decode_argmax(const Tensor& intermediate, std::vector<TokenId> tokens,
                                     const std::vector<std::uint8_t>& fixed);

  /// Per-position CE weights for `target` (empty unless PAD masking is on).
  std::vector<double> ce_weights(std::span<const TokenId> target) const;

 private:
  Tensor project(const Tensor& flat, std::size_t n);
  GaussianParams heads(ConvBlock& down, LayerParams& mu, LayerParams& logvar, const Tensor& h, Mode mode);

  ModelSpec spec_;
  ParameterStore store_;
  Tensor table_;
  Tensor out_bias_;

  ConvBlock prior_caption_, prior_image_caption_, prior_context_, prior_joint_, prior_down_;
  LayerParams prior_mu_, prior_logvar_;
  ConvBlock enc_x_, enc_down_;
  LayerParams enc_mu_, enc_logvar_;
  ConvBlock dec_up_, dec_mix_;
  LayerParams dec_out_;
  std::vector<LayerParams> ar_conv_;
  std::vector<LayerParams> ar_norm_;
};

/// Sample z = mu + eps * sigma; a point mass (or undefined eps) yields mu.
Tensor sample_latent(const GaussianParams& g, const Tensor& eps);

/// KL(q || p) per example [N]; zero for point masses.
Tensor latent_kl(const GaussianParams& q, const GaussianParams& p);

struct ElboResult {
  Tensor loss;  // scalar: mean over the batch of CE + alpha * KLD
  Tensor ce;    // scalar mean CE
  Tensor kld;   // scalar mean KLD
  std::vector<double> ce_per_example;
  std::vector<double> kld_per_example;
};

/// Block objective for B / B_AR: x = D, y = {i, c}.
ElboResult elbo_2vd(Model& model, const ModelBatch& batch, const Tensor& eps, double alpha, Mode mode);
/// Per-answer objective for A: x = a_t, y = {i, c, h+_t}. Summing the
/// per-turn values gives the dialogue objective.
ElboResult elbo_1vd(Model& model, const ModelBatch& batch, const Tensor& eps, double alpha, Mode mode);
/// Dispatches on the model kind.
ElboResult elbo(Model& model, const ModelBatch& batch, const Tensor& eps, double alpha, Mode mode);

/// alpha = min(epoch / ramp_epochs, 1).
double kl_annealing_weight(double epoch, std::size_t ramp_epochs);

/// log p(x | z, y) per example for a fixed z [N, Z], eval mode, no graph.
std::vector<double> conditional_log_likelihood(Model& model, const ModelBatch& batch, const Tensor& z,
                                               const Tensor& condition);

}  // namespace convdial
