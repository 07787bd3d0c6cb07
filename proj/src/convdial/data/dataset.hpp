#pragma once

#include <string>
#include <vector>

#include "convdial/colouring/colouring.hpp"
#include "convdial/data/corpus.hpp"
#include "convdial/text/fixed_embeddings.hpp"
#include "convdial/text/vocabulary.hpp"

namespace convdial {

using WordList = std::vector<std::string>;

/// A corpus record after preprocessing and encoding.
struct PreparedRecord {
  std::string image_id;
  std::vector<double> features;
  WordList caption_words;
  std::vector<double> caption_fixed;  // [E_fixed, L], zero columns past the caption
  DialogueBlock dialogue;             // ids, PAD-padded to L
  std::vector<WordList> question_words;
  std::vector<WordList> answer_words;
  std::vector<std::vector<WordList>> candidates;  // per turn; empty when the corpus has none
  std::vector<std::size_t> gt_index;
};

struct Dataset {
  std::size_t turns = 0;
  std::size_t length = 0;
  std::size_t feature_dim = 0;
  std::size_t fixed_dim = 0;
  std::vector<PreparedRecord> records;
};

/// Vocabulary over dialogue questions and answers (captions and candidates
/// are excluded: captions use the fixed table).
Vocabulary vocabulary_from_corpus(const Corpus& corpus, std::size_t min_freq);

/// Fixed-embedding matrix [E_fixed, L] of a word list; column l is the word's
/// vector, columns past the end are zero.
std::vector<double> fixed_sentence_matrix(const WordList& words, const FixedEmbeddingTable& table, std::size_t length);

Dataset prepare_dataset(const Corpus& corpus, const Vocabulary& vocab, const FixedEmbeddingTable& fixed,
                        std::size_t length);

}  // namespace convdial
