#include "convdial/data/dataset.hpp"

#include "convdial/text/preprocess.hpp"
#include "convdial/util/error.hpp"

namespace convdial {

Vocabulary vocabulary_from_corpus(const Corpus& corpus, std::size_t min_freq) {
  std::vector<WordList> sentences;
  for (const auto& r : corpus.records) {
    for (const auto& t : r.dialog) {
      sentences.push_back(preprocess_sentence(t.question));
      sentences.push_back(preprocess_sentence(t.answer));
    }
  }
  return Vocabulary::build(sentences, min_freq);
}

std::vector<double> fixed_sentence_matrix(const WordList& words, const FixedEmbeddingTable& table, std::size_t length) {
  const std::size_t dim = table.dim();
  std::vector<double> m(dim * length, 0.0);
  for (std::size_t l = 0; l < std::min(length, words.size()); ++l) {
    auto v = table.lookup(words[l]);
    for (std::size_t e = 0; e < dim; ++e) m[e * length + l] = v[e];
  }
  return m;
}

Dataset prepare_dataset(const Corpus& corpus, const Vocabulary& vocab, const FixedEmbeddingTable& fixed,
                        std::size_t length) {
  if (length == 0) throw InvalidArgument("sequence length must be positive");
  Dataset ds;
  ds.turns = corpus.header.turns;
  ds.length = length;
  ds.feature_dim = corpus.header.feature_dim;
  ds.fixed_dim = fixed.dim();
  for (const auto& r : corpus.records) {
    PreparedRecord p;
    p.image_id = r.image_id;
    p.features = r.features;
    p.caption_words = preprocess_sentence(r.caption);
    p.caption_fixed = fixed_sentence_matrix(p.caption_words, fixed, length);
    p.dialogue = DialogueBlock::padded(ds.turns, length);
    for (std::size_t t = 0; t < r.dialog.size(); ++t) {
      const auto& turn = r.dialog[t];
      p.question_words.push_back(preprocess_sentence(turn.question));
      p.answer_words.push_back(preprocess_sentence(turn.answer));
      p.dialogue.question(t) = vocab.encode(p.question_words.back(), length);
      p.dialogue.answer(t) = vocab.encode(p.answer_words.back(), length);
      std::vector<WordList> cands;
      for (const auto& o : turn.options) cands.push_back(preprocess_sentence(o));
      p.candidates.push_back(std::move(cands));
      p.gt_index.push_back(turn.gt_index);
    }
    ds.records.push_back(std::move(p));
  }
  return ds;
}

}  // namespace convdial
