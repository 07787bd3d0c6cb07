#include "convdial/cvae/model.hpp"

#include <algorithm>
#include <cmath>

#include "convdial/tensor/checkpoint.hpp"
#include "convdial/util/error.hpp"

namespace convdial {

namespace {

// Non-overlapping-as-possible patches mapping `extent` onto `spatial` cells
// and back: stride floor(extent / S), kernel extent - (S - 1) * stride.
struct Patch {
  std::size_t stride;
  std::size_t kernel;
};

Patch patch_for(std::size_t extent, std::size_t spatial) {
  const std::size_t stride = extent / spatial;
  return {stride, extent - (spatial - 1) * stride};
}

void expect_size(const char* what, std::size_t got, std::size_t want) {
  if (got != want) {
    throw ShapeError(std::string("batch ") + what + " holds " + std::to_string(got) + " values, expected " +
                     std::to_string(want));
  }
}

}  // namespace

void ModelBatch::validate(const ModelSpec& spec, bool with_target) const {
  if (size == 0) throw ShapeError("empty batch");
  expect_size("image", image.size(), size * spec.feature_dim);
  expect_size("caption", caption.size(), size * spec.fixed_embed_dim * spec.length);
  expect_size("context", context.size(), size * spec.context_channels() * spec.length);
  if (with_target) expect_size("target", target.size(), size * spec.channels() * spec.length);
}

Model::Model(const ModelSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  Rng rng(seed);
  const std::size_t h = spec_.hidden, s = spec_.spatial, z = spec_.latent, m = spec_.channels();
  const Patch pe = patch_for(spec_.embed_dim, s), pf = patch_for(spec_.fixed_embed_dim, s),
              pl = patch_for(spec_.length, s);
  const ConvGeometry same{1, 1, 1, 1};
  const ConvGeometry down{2, 2, 1, 1};

  table_ = make_embedding(store_, "embed", spec_.vocab, spec_.embed_dim, rng).weight;
  out_bias_ = store_.add_parameter("output.bias", Tensor({spec_.vocab}));

  prior_caption_ = make_conv_block(store_, "prior.caption", 1, h, pf.kernel, pl.kernel, {pf.stride, pl.stride, 0, 0}, rng);
  prior_image_caption_ = make_conv_block(store_, "prior.image_caption", spec_.image_channels() + h, h, 3, 3, same, rng);
  if (spec_.kind == ModelKind::kA) {
    prior_context_ = make_conv_block(store_, "prior.context", spec_.context_channels(), h, pe.kernel, pl.kernel,
                                     {pe.stride, pl.stride, 0, 0}, rng);
    prior_joint_ = make_conv_block(store_, "prior.joint", 2 * h, h, 3, 3, same, rng);
  }
  prior_down_ = make_conv_block(store_, "prior.down", h, 4 * h, 3, 3, down, rng);
  prior_mu_ = make_conv(store_, "prior.mu", 4 * h, z, s / 2, s / 2, {}, rng);
  if (!spec_.dirac) {
    prior_logvar_ = make_conv(store_, "prior.logvar", 4 * h, z, s / 2, s / 2, {}, rng);
    enc_x_ = make_conv_block(store_, "encoder.x", m, h, pe.kernel, pl.kernel, {pe.stride, pl.stride, 0, 0}, rng);
    enc_down_ = make_conv_block(store_, "encoder.down", 2 * h, 4 * h, 3, 3, down, rng);
    enc_mu_ = make_conv(store_, "encoder.mu", 4 * h, z, s / 2, s / 2, {}, rng);
    enc_logvar_ = make_conv(store_, "encoder.logvar", 4 * h, z, s / 2, s / 2, {}, rng);
  }
  dec_up_ = make_transpose_conv_block(store_, "decoder.up", z, h, s, s, {}, rng);
  dec_mix_ = make_conv_block(store_, "decoder.mix", 2 * h, h, 3, 3, same, rng);
  dec_out_ = make_transpose_conv(store_, "decoder.out", h, m, pe.kernel, pl.kernel, {pe.stride, pl.stride, 0, 0},
                                       rng);
  for (std::size_t i = 0; i < spec_.ar_layers; ++i) {
    const std::string name = "ar." + std::to_string(i);
    ar_conv_.push_back(make_masked_conv(store_, name + ".conv", spec_.embed_dim, spec_.ar_kernel,
                                        i == 0 ? MaskType::kA : MaskType::kB, rng, false));
    ar_norm_.push_back(make_batchnorm(store_, name + ".bn", spec_.embed_dim));
  }
}

std::string Model::architecture_hash() const { return convdial::architecture_hash(spec_.description(), store_); }

std::vector<LayerParams*> Model::batchnorm_layers() {
  std::vector<LayerParams*> out;
  for (ConvBlock* b : {&prior_caption_, &prior_image_caption_, &prior_context_, &prior_joint_, &prior_down_, &enc_x_,
                       &enc_down_, &dec_up_, &dec_mix_}) {
    if (b->norm.stats) out.push_back(&b->norm);
  }
  for (auto& n : ar_norm_) out.push_back(&n);
  return out;
}

GaussianParams Model::heads(ConvBlock& down, LayerParams& mu, LayerParams& logvar, const Tensor& h, Mode mode) {
  const std::size_t n = h.dim(0);
  Tensor d = down.forward(h, mode);
  GaussianParams g;
  g.mu = reshape(layer_forward(mu, d, mode), {n, spec_.latent});
  if (logvar.weight.defined()) {
    g.logvar = clamp(reshape(layer_forward(logvar, d, mode), {n, spec_.latent}), -kLogVarClamp, kLogVarClamp);
  }
  return g;
}

PriorOutput Model::prior_forward(const ModelBatch& batch, Mode mode) {
  batch.validate(spec_, false);
  const std::size_t n = batch.size, s = spec_.spatial;
  Tensor caption({n, 1, spec_.fixed_embed_dim, spec_.length}, batch.caption);
  Tensor image({n, spec_.image_channels(), s, s}, batch.image);
  Tensor c = prior_caption_.forward(caption, mode);
  Tensor y = prior_image_caption_.forward(concat({image, c}, 1), mode);
  if (spec_.kind == ModelKind::kA) {
    Tensor ctx = embedding(table_, batch.context, {n, spec_.context_channels(), spec_.length});
    Tensor hc = prior_context_.forward(ctx, mode);
    y = prior_joint_.forward(concat({y, hc}, 1), mode);
  }
  PriorOutput out;
  out.prior = heads(prior_down_, prior_mu_, prior_logvar_, y, mode);
  out.condition = y;
  return out;
}

GaussianParams Model::encoder_forward(std::span<const TokenId> x, std::size_t n, const Tensor& condition,
                                      Mode mode) {
  return encoder_forward(embedding(table_, x, {n, spec_.channels(), spec_.length}), condition, mode);
}

GaussianParams Model::encoder_forward(const Tensor& x_coloured, const Tensor& condition, Mode mode) {
  if (spec_.dirac) throw StateError("Dirac mode has no encoder network");
  const Shape want{condition.dim(0), spec_.channels(), spec_.embed_dim, spec_.length};
  if (x_coloured.shape() != want) {
    throw ShapeError("encoder input " + shape_str(x_coloured.shape()) + ", expected " + shape_str(want));
  }
  Tensor hx = enc_x_.forward(x_coloured, mode);
  return heads(enc_down_, enc_mu_, enc_logvar_, concat({hx, condition}, 1), mode);
}

Tensor Model::decoder_forward(const Tensor& z, const Tensor& condition, Mode mode) {
  if (z.rank() != 2 || z.dim(1) != spec_.latent) {
    throw ShapeError("decoder expects z [N, " + std::to_string(spec_.latent) + "], got " + shape_str(z.shape()));
  }
  const std::size_t n = z.dim(0);
  Tensor u = dec_up_.forward(reshape(z, {n, spec_.latent, 1, 1}), mode);
  Tensor mixed = dec_mix_.forward(concat({u, condition}, 1), mode);
  // The last stage stays linear: the volume feeds the tied vocabulary projection.
  return layer_forward(dec_out_, mixed, mode);
}

Tensor Model::ar_forward(const Tensor& intermediate, std::span<const TokenId> teacher, Mode mode) {
  const std::size_t n = intermediate.dim(0);
  if (teacher.size() != n * spec_.channels() * spec_.length) throw ShapeError("AR teacher ids do not match the batch");
  return ar_forward(intermediate, embedding(table_, teacher, {n, spec_.channels(), spec_.length}), mode);
}

Tensor Model::ar_forward(const Tensor& intermediate, const Tensor& teacher_coloured, Mode mode) {
  if (spec_.kind != ModelKind::kBAR) throw StateError("AR decoding needs a B_AR model");
  const std::size_t n = intermediate.dim(0), m = spec_.channels(), e = spec_.embed_dim, l = spec_.length;
  if (teacher_coloured.shape() != intermediate.shape()) {
    throw ShapeError("AR teacher " + shape_str(teacher_coloured.shape()) + " does not match intermediate " +
                     shape_str(intermediate.shape()));
  }
  auto unravel = [&](const Tensor& t) { return reshape(permute(t, {0, 2, 1, 3}), {n, e, 1, m * l}); };
  Tensor h = add(layer_forward(ar_conv_[0], unravel(teacher_coloured), mode), unravel(intermediate));
  h = relu(layer_forward(ar_norm_[0], h, mode));
  for (std::size_t i = 1; i < ar_conv_.size(); ++i) {
    h = relu(layer_forward(ar_norm_[i], layer_forward(ar_conv_[i], h, mode), mode));
  }
  return h;
}

Tensor Model::project(const Tensor& flat, std::size_t n) {
  return reshape(linear(flat, table_, out_bias_), {n, spec_.channels() * spec_.length, spec_.vocab});
}

Tensor Model::logits(const Tensor& intermediate, std::span<const TokenId> teacher, Mode mode) {
  const std::size_t n = intermediate.dim(0), rows = spec_.channels() * spec_.length, e = spec_.embed_dim;
  if (spec_.kind == ModelKind::kBAR) {
    return project(reshape(permute(ar_forward(intermediate, teacher, mode), {0, 2, 3, 1}), {n * rows, e}), n);
  }
  return project(reshape(permute(intermediate, {0, 1, 3, 2}), {n * rows, e}), n);
}

Tensor Model::ar_logits(const Tensor& intermediate, const Tensor& teacher_coloured, Mode mode) {
  const std::size_t n = intermediate.dim(0), rows = spec_.channels() * spec_.length, e = spec_.embed_dim;
  return project(reshape(permute(ar_forward(intermediate, teacher_coloured, mode), {0, 2, 3, 1}), {n * rows, e}), n);
}

std::vector<double> Model::ce_weights(std::span<const TokenId> target) const {
  if (!spec_.mask_pad) return {};
  std::vector<double> w(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) w[i] = target[i] == kPadId ? 0.0 : 1.0;
  return w;
}

std::vector<TokenId> Model::decode_argmax(const Tensor& intermediate, std::vector<TokenId> tokens,
                                          const std::vector<std::uint8_t>& fixed) {
  NoGradGuard no_grad;
  const std::size_t n = intermediate.dim(0), m = spec_.channels(), e_dim = spec_.embed_dim, len = spec_.length;
  const std::size_t rows = m * len, vocab = spec_.vocab;
  if (tokens.size() != n * rows || fixed.size() != n * rows) throw ShapeError("decode_argmax: token buffer size");
  auto table = table_.values();
  auto bias = out_bias_.values();
  auto argmax_row = [&](const double* v) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < vocab; ++k) {
      if (v[k] > v[best]) best = k;
    }
    return static_cast<TokenId>(best);
  };

  if (spec_.kind != ModelKind::kBAR) {
    Tensor lg = logits(intermediate, {}, Mode::kEval);
    auto lv = lg.values();
    for (std::size_t r = 0; r < n * rows; ++r) {
      if (!fixed[r]) tokens[r] = argmax_row(lv.data() + r * vocab);
    }
    return tokens;
  }

  // Row-by-row evaluation of the AR stack: row r of every layer only reads
  // rows <= r of the layer below, so earlier rows are computed once.
  const std::size_t layers = ar_conv_.size(), k = spec_.ar_kernel, half = k / 2;
  struct EvalLayer {
    std::vector<double> w, bias, inv_std, mean, gamma, beta;
  };
  std::vector<EvalLayer> ev(layers);
  for (std::size_t i = 0; i < layers; ++i) {
    auto w = ar_conv_[i].weight.values();
    ev[i].w.assign(w.begin(), w.end());
    for (std::size_t j = 0; j < ev[i].w.size(); ++j) ev[i].w[j] *= ar_conv_[i].mask[j];
    if (ar_conv_[i].bias.defined()) {
      auto b = ar_conv_[i].bias.values();
      ev[i].bias.assign(b.begin(), b.end());
    } else {
      ev[i].bias.assign(e_dim, 0.0);
    }
    const auto& st = *ar_norm_[i].stats;
    if (!st.initialized) throw StateError("AR batch norm statistics are not initialized");
    auto rm = st.running_mean.values();
    auto rv = st.running_var.values();
    auto g = ar_norm_[i].weight.values();
    auto be = ar_norm_[i].bias.values();
    ev[i].mean.assign(rm.begin(), rm.end());
    ev[i].gamma.assign(g.begin(), g.end());
    ev[i].beta.assign(be.begin(), be.end());
    for (double v : rv) ev[i].inv_std.push_back(1.0 / std::sqrt(v + ar_norm_[i].eps));
  }

  auto inter = intermediate.values();
  std::vector<double> logit_row(vocab);
  for (std::size_t s = 0; s < n; ++s) {
    // act[i] holds layer i's output as [E][rows]; teacher as [E][rows].
    std::vector<std::vector<double>> act(layers, std::vector<double>(e_dim * rows, 0.0));
    std::vector<double> teacher(e_dim * rows, 0.0);
    TokenId* tok = tokens.data() + s * rows;
    const std::uint8_t* fix = fixed.data() + s * rows;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t ch = r / len, pos = r % len;
      for (std::size_t i = 0; i < layers; ++i) {
        const std::vector<double>& in = i == 0 ? teacher : act[i - 1];
        for (std::size_t co = 0; co < e_dim; ++co) {
          double acc = ev[i].bias[co];
          for (std::size_t ci = 0; ci < e_dim; ++ci) {
            const double* wrow = ev[i].w.data() + (co * e_dim + ci) * k;
            for (std::size_t j = 0; j <= half; ++j) {
              if (wrow[j] == 0.0 || r + j < half) continue;
              acc += wrow[j] * in[ci * rows + r + j - half];
            }
          }
          if (i == 0) acc += inter[((s * m + ch) * e_dim + co) * len + pos];
          const double xhat = (acc - ev[i].mean[co]) * ev[i].inv_std[co];
          act[i][co * rows + r] = std::max(0.0, ev[i].gamma[co] * xhat + ev[i].beta[co]);
        }
      }
      if (!fix[r]) {
        const auto& last = act[layers - 1];
        for (std::size_t v = 0; v < vocab; ++v) {
          double acc = 0.0;
          for (std::size_t e = 0; e < e_dim; ++e) acc += last[e * rows + r] * table[v * e_dim + e];
          logit_row[v] = acc + bias[v];
        }
        tok[r] = argmax_row(logit_row.data());
      }
      if (tok[r] < 0 || static_cast<std::size_t>(tok[r]) >= vocab) throw InvalidArgument("token id out of range");
      for (std::size_t e = 0; e < e_dim; ++e) teacher[e * rows + r] = table[tok[r] * e_dim + e];
    }
  }
  return tokens;
}

Tensor sample_latent(const GaussianParams& g, const Tensor& eps) {
  if (g.point_mass() || !eps.defined()) return g.mu;
  return reparameterize(g.mu, g.logvar, eps);
}

Tensor latent_kl(const GaussianParams& q, const GaussianParams& p) {
  if (q.point_mass() || p.point_mass()) {
    if (q.point_mass() != p.point_mass()) throw InvalidArgument("KL between a point mass and a Gaussian");
    return Tensor({q.mu.dim(0)});
  }
  return kl_diag_gaussian(q.mu, q.logvar, p.mu, p.logvar);
}

namespace {

ElboResult run_elbo(Model& model, const ModelBatch& batch, const Tensor& eps, double alpha, Mode mode) {
  const ModelSpec& spec = model.spec();
  batch.validate(spec);
  PriorOutput pri = model.prior_forward(batch, mode);
  // Dirac mode: prior and posterior are the same point mass, so z is the
  // prior mean and the encoder is never run.
  GaussianParams post = spec.dirac ? pri.prior : model.encoder_forward(batch.target, batch.size, pri.condition, mode);
  Tensor z = sample_latent(post, eps);
  Tensor lg = model.logits(model.decoder_forward(z, pri.condition, mode), batch.target, mode);
  const std::vector<double> weights = model.ce_weights(batch.target);
  Tensor ce_n = softmax_cross_entropy(lg, batch.target, weights);
  Tensor kld_n = spec.dirac ? Tensor({batch.size}) : latent_kl(post, pri.prior);

  ElboResult r;
  r.ce = mean(ce_n);
  r.kld = mean(kld_n);
  r.loss = add_scaled(r.ce, r.kld, alpha);
  auto cv = ce_n.values();
  auto kv = kld_n.values();
  r.ce_per_example.assign(cv.begin(), cv.end());
  r.kld_per_example.assign(kv.begin(), kv.end());
  if (!std::isfinite(r.loss.item())) throw NumericError("non-finite ELBO loss");
  return r;
}

}  // namespace

ElboResult elbo_2vd(Model& model, const ModelBatch& batch, const Tensor& eps, double alpha, Mode mode) {
  if (model.spec().kind == ModelKind::kA) throw InvalidArgument("elbo_2vd applies to block models B and B_AR");
  return run_elbo(model, batch, eps, alpha, mode);
}

ElboResult elbo_1vd(Model& model, const ModelBatch& batch, const Tensor& eps, double alpha, Mode mode) {
  if (model.spec().kind != ModelKind::kA) throw InvalidArgument("elbo_1vd applies to model A");
  return run_elbo(model, batch, eps, alpha, mode);
}

ElboResult elbo(Model& model, const ModelBatch& batch, const Tensor& eps, double alpha, Mode mode) {
  return run_elbo(model, batch, eps, alpha, mode);
}

double kl_annealing_weight(double epoch, std::size_t ramp_epochs) {
  if (epoch < 0.0) throw InvalidArgument("annealing epoch must be non-negative");
  if (ramp_epochs < 1) throw InvalidArgument("ramp_epochs must be at least 1");
  return std::min(epoch / static_cast<double>(ramp_epochs), 1.0);
}

std::vector<double> conditional_log_likelihood(Model& model, const ModelBatch& batch, const Tensor& z,
                                               const Tensor& condition) {
  NoGradGuard no_grad;
  Tensor lg = model.logits(model.decoder_forward(z, condition, Mode::kEval), batch.target, Mode::kEval);
  Tensor ce = softmax_cross_entropy(lg, batch.target, model.ce_weights(batch.target));
  std::vector<double> out(ce.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -ce.at(i);
  return out;
}

}  // namespace convdial
