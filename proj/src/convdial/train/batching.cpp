#include "convdial/train/batching.hpp"

#include <numeric>

#include "convdial/util/error.hpp"

namespace convdial {

namespace {

void expect_dim(const char* what, std::size_t data, std::size_t model) {
  if (data != model) {
    throw ConfigError(std::string("dataset ") + what + " is " + std::to_string(data) + " but the model expects " +
                      std::to_string(model));
  }
}

}  // namespace

void check_compatible(const Dataset& data, const ModelSpec& spec) {
  expect_dim("turn count", data.turns, spec.turns);
  expect_dim("sequence length", data.length, spec.length);
  expect_dim("feature dimension", data.feature_dim, spec.feature_dim);
  expect_dim("fixed embedding dimension", data.fixed_dim, spec.fixed_embed_dim);
}

std::vector<SampleRef> training_samples(const Dataset& data, const ModelSpec& spec,
                                        std::span<const std::size_t> records) {
  std::vector<SampleRef> out;
  for (std::size_t r : records) {
    if (r >= data.records.size()) throw InvalidArgument("record index out of range");
    if (spec.kind == ModelKind::kA) {
      for (std::size_t t = 0; t < data.turns; ++t) out.push_back({r, t});
    } else {
      out.push_back({r, 0});
    }
  }
  return out;
}

std::vector<SampleRef> training_samples(const Dataset& data, const ModelSpec& spec) {
  std::vector<std::size_t> all(data.records.size());
  std::iota(all.begin(), all.end(), 0);
  return training_samples(data, spec, all);
}

void append_condition(ModelBatch& batch, const PreparedRecord& record) {
  batch.image.insert(batch.image.end(), record.features.begin(), record.features.end());
  batch.caption.insert(batch.caption.end(), record.caption_fixed.begin(), record.caption_fixed.end());
  ++batch.size;
}

void append_context(ModelBatch& batch, const std::vector<TokenSequence>& context) {
  for (const auto& seq : context) batch.context.insert(batch.context.end(), seq.begin(), seq.end());
}

void append_target(ModelBatch& batch, const std::vector<TokenSequence>& entries) {
  for (const auto& seq : entries) batch.target.insert(batch.target.end(), seq.begin(), seq.end());
}

std::vector<TokenSequence> ground_truth_context(const PreparedRecord& record, std::size_t turn) {
  const DialogueBlock& d = record.dialogue;
  std::vector<TokenSequence> qs, as;
  for (std::size_t t = 0; t < d.turns; ++t) {
    qs.push_back(d.question(t));
    as.push_back(d.answer(t));
  }
  return answer_context(qs, as, turn + 1, d.turns, d.length);
}

ModelBatch make_batch(const Dataset& data, const ModelSpec& spec, std::span<const SampleRef> samples) {
  ModelBatch batch;
  for (const SampleRef& s : samples) {
    const PreparedRecord& rec = data.records.at(s.record);
    append_condition(batch, rec);
    if (spec.kind == ModelKind::kA) {
      append_context(batch, ground_truth_context(rec, s.turn));
      append_target(batch, {rec.dialogue.answer(s.turn)});
    } else {
      append_target(batch, rec.dialogue.entries);
    }
  }
  batch.validate(spec);
  return batch;
}

}  // namespace convdial
