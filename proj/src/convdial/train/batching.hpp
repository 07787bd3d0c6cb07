#pragma once

#include <span>
#include <vector>

#include "convdial/cvae/model.hpp"
#include "convdial/data/dataset.hpp"

namespace convdial {

/// One training example: a whole record for block models, one (record, turn)
/// answer for model A. `turn` is zero-based and ignored for block models.
struct SampleRef {
  std::size_t record = 0;
  std::size_t turn = 0;
};

/// Throws ConfigError if the dataset's T, L, feature or fixed-embedding
/// dimension disagrees with the model.
void check_compatible(const Dataset& data, const ModelSpec& spec);

std::vector<SampleRef> training_samples(const Dataset& data, const ModelSpec& spec,
                                        std::span<const std::size_t> records);
std::vector<SampleRef> training_samples(const Dataset& data, const ModelSpec& spec);

/// Condition (image and caption) of `record` appended to `batch`; size is bumped.
void append_condition(ModelBatch& batch, const PreparedRecord& record);
/// A's context h+_t, 2T-1 sequences of length L.
void append_context(ModelBatch& batch, const std::vector<TokenSequence>& context);
void append_target(ModelBatch& batch, const std::vector<TokenSequence>& entries);

/// Ground-truth context h+_t for zero-based `turn` of `record`.
std::vector<TokenSequence> ground_truth_context(const PreparedRecord& record, std::size_t turn);

/// Teacher-forced batch: ground-truth context and target for every sample.
ModelBatch make_batch(const Dataset& data, const ModelSpec& spec, std::span<const SampleRef> samples);

}  // namespace convdial
