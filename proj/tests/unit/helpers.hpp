#pragma once

#include <cstdint>
#include <vector>

#include "convdial/cvae/model.hpp"
#include "convdial/data/dataset.hpp"
#include "convdial/data/synthetic.hpp"
#include "convdial/util/rng.hpp"

namespace testutil {

using namespace convdial;

// Small enough that a forward pass takes well under a millisecond.
inline ModelSpec tiny_spec(ModelKind kind, std::size_t ar_layers = 0) {
  ModelSpec s;
  s.kind = kind;
  s.ar_layers = kind == ModelKind::kBAR ? (ar_layers ? ar_layers : 2) : 0;
  s.ar_kernel = 5;
  s.embed_dim = 8;
  s.length = 4;
  s.turns = 2;
  s.vocab = 11;
  s.latent = 4;
  s.fixed_embed_dim = 4;
  s.feature_dim = 32;
  s.hidden = 4;
  s.spatial = 4;
  return s;
}

inline TokenSequence random_sequence(Rng& rng, std::size_t length, std::size_t vocab) {
  TokenSequence s(length, kPadId);
  const std::size_t used = 1 + rng.index(length);
  for (std::size_t l = 0; l < used; ++l) s[l] = static_cast<TokenId>(2 + rng.index(vocab - 2));
  return s;
}

inline ModelBatch random_batch(const ModelSpec& spec, std::size_t n, Rng& rng) {
  ModelBatch b;
  b.size = n;
  b.image = rng.normal_vector(n * spec.feature_dim);
  b.caption = rng.normal_vector(n * spec.fixed_embed_dim * spec.length);
  for (std::size_t i = 0; i < n * spec.context_channels(); ++i) {
    const TokenSequence s = random_sequence(rng, spec.length, spec.vocab);
    b.context.insert(b.context.end(), s.begin(), s.end());
  }
  for (std::size_t i = 0; i < n * spec.channels(); ++i) {
    const TokenSequence s = random_sequence(rng, spec.length, spec.vocab);
    b.target.insert(b.target.end(), s.begin(), s.end());
  }
  return b;
}

// Puts random statistics into every batch-norm layer so eval mode works on an
// untrained model.
inline void warm_up(Model& model, std::uint64_t seed = 99) {
  Rng rng(seed);
  ModelBatch b = random_batch(model.spec(), 6, rng);
  NoGradGuard no_grad;
  for (LayerParams* l : model.batchnorm_layers()) l->momentum = 1.0;
  elbo(model, b, Tensor(), 1.0, Mode::kTrain);
  for (LayerParams* l : model.batchnorm_layers()) l->momentum = kBatchNormMomentum;
}

inline std::vector<double> copy_values(const Tensor& t) {
  auto v = t.values();
  return {v.begin(), v.end()};
}

// A synthetic dataset sized for tiny_spec-like models (T, L as given).
struct SmallWorld {
  Corpus corpus;
  Vocabulary vocab;
  FixedEmbeddingTable fixed;
  Dataset data;
};

inline SmallWorld small_world(std::size_t records, std::size_t turns, std::size_t length, std::size_t fixed_dim,
                              std::uint64_t seed = 5) {
  SyntheticConfig sc;
  sc.records = records;
  sc.turns = turns;
  sc.candidates = 5;
  sc.feature_dim = 256;
  SmallWorld w;
  w.corpus = generate_synthetic_corpus(seed, sc);
  w.vocab = vocabulary_from_corpus(w.corpus, 1);
  w.fixed = random_fixed_embeddings(w.corpus, fixed_dim, seed + 1);
  w.data = prepare_dataset(w.corpus, w.vocab, w.fixed, length);
  return w;
}

inline ModelSpec spec_for(const SmallWorld& w, ModelKind kind) {
  ModelSpec s = tiny_spec(kind);
  s.vocab = w.vocab.size();
  s.turns = w.data.turns;
  s.length = w.data.length;
  s.fixed_embed_dim = w.data.fixed_dim;
  s.feature_dim = w.data.feature_dim;
  return s;
}

}  // namespace testutil
