#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "convdial/data/corpus.hpp"
#include "convdial/text/fixed_embeddings.hpp"
#include "convdial/util/rng.hpp"

namespace convdial {

/// A small grid world: 2-3 objects with distinct shapes, colours and cells on
/// a 3x3 grid. Features place one-hot attribute channels on a spatial map so
/// the image reshapes naturally to (channels, spatial, spatial).
struct SyntheticConfig {
  std::size_t records = 500;
  std::size_t turns = 5;
  std::size_t candidates = 10;
  std::size_t feature_dim = 256;
  std::size_t spatial = 4;
  std::size_t min_objects = 2;
  std::size_t max_objects = 3;
  /// Templates drawn uniformly per turn; see synthetic_question_types().
  std::vector<std::string> question_types{"count", "color_of", "where", "exists", "size_of", "shape_of"};

  void validate() const;
};

const std::vector<std::string>& synthetic_shapes();
const std::vector<std::string>& synthetic_colors();
const std::vector<std::string>& synthetic_sizes();
/// Names of every question template the oracle understands.
std::vector<std::string> synthetic_question_types();
inline constexpr std::size_t kGridSize = 3;
/// Attribute slots per cell: shapes, then colours, then sizes.
std::size_t synthetic_slot_count();

Scene random_scene(Rng& rng, const SyntheticConfig& cfg);
/// One-hot attribute layout, slot * S^2 + row * S + col, then l2-normalised.
std::vector<double> render_features(const Scene& scene, std::size_t feature_dim, std::size_t spatial);
/// Inverse of render_features (objects in row-major cell order).
Scene decode_scene(const std::vector<double>& features, std::size_t spatial);

std::string describe_scene(const Scene& scene);
/// Template oracle: the unique answer to a generated question about `scene`.
/// Throws InvalidArgument for text outside the question grammar.
std::string answer_question(const Scene& scene, const std::string& question);

/// Pure function of (seed, cfg); record i is generated from its own stream so
/// that corpora of different sizes share their prefixes.
Corpus generate_synthetic_corpus(std::uint64_t seed, const SyntheticConfig& cfg);

/// Seeded N(0, 1) vectors for every word the corpus uses (preprocessed),
/// standing in for pretrained word vectors.
FixedEmbeddingTable random_fixed_embeddings(const Corpus& corpus, std::size_t dim, std::uint64_t seed);

}  // namespace convdial
