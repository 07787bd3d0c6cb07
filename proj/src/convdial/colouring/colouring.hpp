#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "convdial/tensor/tensor.hpp"
#include "convdial/text/vocabulary.hpp"

namespace convdial {

/// T question/answer pairs stored as 2T channels, q before a within a turn:
/// channel 2t is q_{t+1}, channel 2t+1 is a_{t+1} (t zero-based).
struct DialogueBlock {
  std::size_t turns = 0;
  std::size_t length = 0;
  std::vector<TokenSequence> entries;

  static DialogueBlock padded(std::size_t turns, std::size_t length);

  TokenSequence& question(std::size_t turn) { return entries.at(2 * turn); }
  TokenSequence& answer(std::size_t turn) { return entries.at(2 * turn + 1); }
  const TokenSequence& question(std::size_t turn) const { return entries.at(2 * turn); }
  const TokenSequence& answer(std::size_t turn) const { return entries.at(2 * turn + 1); }

  /// Throws ShapeError unless there are exactly 2T entries of length L.
  void validate() const;
  /// Row-major [2T, L] ids.
  std::vector<TokenId> flat() const;
  bool operator==(const DialogueBlock&) const = default;
};

struct ChannelRef {
  std::size_t turn = 0;  // zero-based
  bool is_question = false;
};

/// Embedded stack, tensor shape [1, M, E, L] (the E x L x M volume with the
/// channel axis leading), plus which dialogue entry each channel holds.
struct ColouredBlock {
  Tensor tensor;
  std::vector<ChannelRef> channels;

  std::size_t channel_count() const { return channels.size(); }
};

/// Column l of the result is the embedding of token l: [E, L].
Tensor encode_tokens(const TokenSequence& seq, const Tensor& embedding_table);

ColouredBlock colour_sentence(const TokenSequence& seq, const Tensor& embedding_table);
ColouredBlock colour_dialogue(const DialogueBlock& block, const Tensor& embedding_table);

/// Batched colouring of row-major ids [N, M, L] into [N, M, E, L].
Tensor colour_batch(const Tensor& embedding_table, const std::vector<TokenId>& ids, std::size_t batch,
                    std::size_t channels, std::size_t length);

/// Nearest-embedding decode of each channel column back to token ids.
std::vector<TokenSequence> uncolour(const ColouredBlock& coloured, const Tensor& embedding_table);

enum class IterativeMode { kQA, kQAhat, kQhatAhat };
enum class Phase { kQuestion, kAnswer };

std::string to_string(IterativeMode mode);
/// Accepts "d-qa", "d-qhat-a", "d-qhat-ahat".
IterativeMode parse_iterative_mode(const std::string& text);

/// Predicted entries produced so far; index = zero-based turn.
struct DialogueHistory {
  std::vector<TokenSequence> questions;
  std::vector<TokenSequence> answers;
};

/// Input block for turn `turn` (1-based) of iterative evaluation: earlier turns
/// filled according to `mode`, the current turn partially, later turns PAD.
/// `ground_truth` may be null for D-q̂â, which never reads it.
DialogueBlock pad_future(const DialogueBlock* ground_truth, const DialogueHistory& predicted, std::size_t turn,
                         IterativeMode mode, Phase phase, std::size_t turns, std::size_t length);

/// Model A's context h+_t: the K = 2(t-1)+1 entries q1,a1,...,q_{t-1},a_{t-1},q_t,
/// right-aligned into 2T-1 channels with PAD channels in front.
std::vector<TokenSequence> answer_context(const std::vector<TokenSequence>& questions,
                                          const std::vector<TokenSequence>& answers, std::size_t turn,
                                          std::size_t turns, std::size_t length);

}  // namespace convdial
