#include "convdial/colouring/colouring.hpp"

#include <limits>

#include "convdial/tensor/ops.hpp"
#include "convdial/util/error.hpp"

namespace convdial {

DialogueBlock DialogueBlock::padded(std::size_t turns, std::size_t length) {
  DialogueBlock b;
  b.turns = turns;
  b.length = length;
  b.entries.assign(2 * turns, TokenSequence(length, kPadId));
  return b;
}

void DialogueBlock::validate() const {
  if (entries.size() != 2 * turns) {
    throw ShapeError("dialogue block needs " + std::to_string(2 * turns) + " entries, has " +
                     std::to_string(entries.size()));
  }
  for (const auto& e : entries) {
    if (e.size() != length) throw ShapeError("dialogue entry length " + std::to_string(e.size()) + " != L");
  }
}

std::vector<TokenId> DialogueBlock::flat() const {
  validate();
  std::vector<TokenId> out;
  out.reserve(entries.size() * length);
  for (const auto& e : entries) out.insert(out.end(), e.begin(), e.end());
  return out;
}

Tensor encode_tokens(const TokenSequence& seq, const Tensor& embedding_table) {
  return embedding(embedding_table, seq, {seq.size()});
}

ColouredBlock colour_sentence(const TokenSequence& seq, const Tensor& embedding_table) {
  ColouredBlock out;
  out.tensor = embedding(embedding_table, seq, {1, 1, seq.size()});
  out.channels = {ChannelRef{0, false}};
  return out;
}

ColouredBlock colour_dialogue(const DialogueBlock& block, const Tensor& embedding_table) {
  ColouredBlock out;
  out.tensor = colour_batch(embedding_table, block.flat(), 1, 2 * block.turns, block.length);
  for (std::size_t t = 0; t < block.turns; ++t) {
    out.channels.push_back({t, true});
    out.channels.push_back({t, false});
  }
  return out;
}

Tensor colour_batch(const Tensor& embedding_table, const std::vector<TokenId>& ids, std::size_t batch,
                    std::size_t channels, std::size_t length) {
  return embedding(embedding_table, ids, {batch, channels, length});
}

std::vector<TokenSequence> uncolour(const ColouredBlock& coloured, const Tensor& embedding_table) {
  const auto& shape = coloured.tensor.shape();
  if (shape.size() != 4 || shape[0] != 1) throw ShapeError("uncolour expects [1, M, E, L]");
  const std::size_t m = shape[1], e_dim = shape[2], len = shape[3];
  const std::size_t vocab = embedding_table.dim(0);
  if (embedding_table.dim(1) != e_dim) throw ShapeError("uncolour: embedding width mismatch");
  auto x = coloured.tensor.values();
  auto table = embedding_table.values();
  std::vector<TokenSequence> out(m, TokenSequence(len, kPadId));
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t l = 0; l < len; ++l) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t v = 0; v < vocab; ++v) {
        double d = 0.0;
        for (std::size_t e = 0; e < e_dim; ++e) {
          const double diff = x[(c * e_dim + e) * len + l] - table[v * e_dim + e];
          d += diff * diff;
        }
        if (d < best) {
          best = d;
          out[c][l] = static_cast<TokenId>(v);
        }
      }
    }
  }
  return out;
}

std::string to_string(IterativeMode mode) {
  switch (mode) {
    case IterativeMode::kQA:
      return "d-qa";
    case IterativeMode::kQAhat:
      return "d-qhat-a";
    case IterativeMode::kQhatAhat:
      return "d-qhat-ahat";
  }
  return "?";
}

IterativeMode parse_iterative_mode(const std::string& text) {
  if (text == "d-qa") return IterativeMode::kQA;
  if (text == "d-qhat-a") return IterativeMode::kQAhat;
  if (text == "d-qhat-ahat") return IterativeMode::kQhatAhat;
  throw InvalidArgument("unknown iterative mode '" + text + "'");
}

DialogueBlock pad_future(const DialogueBlock* ground_truth, const DialogueHistory& predicted, std::size_t turn,
                         IterativeMode mode, Phase phase, std::size_t turns, std::size_t length) {
  if (turn < 1 || turn > turns) {
    throw InvalidArgument("turn " + std::to_string(turn) + " outside 1.." + std::to_string(turns));
  }
  const std::size_t t = turn - 1;
  if (mode != IterativeMode::kQhatAhat && phase == Phase::kQuestion) {
    throw InvalidArgument("question phase only exists for " + to_string(IterativeMode::kQhatAhat));
  }
  if (mode != IterativeMode::kQhatAhat) {
    if (!ground_truth) throw InvalidArgument(to_string(mode) + " requires the ground-truth dialogue");
    ground_truth->validate();
    if (ground_truth->turns != turns || ground_truth->length != length) {
      throw ShapeError("ground-truth block does not match T/L");
    }
  }
  auto need = [](const std::vector<TokenSequence>& v, std::size_t count, const char* what) {
    if (v.size() < count) {
      throw InvalidArgument(std::string("missing predicted ") + what + " for turn " + std::to_string(count));
    }
  };
  DialogueBlock out = DialogueBlock::padded(turns, length);
  switch (mode) {
    case IterativeMode::kQA:
      for (std::size_t k = 0; k < t; ++k) {
        out.question(k) = ground_truth->question(k);
        out.answer(k) = ground_truth->answer(k);
      }
      out.question(t) = ground_truth->question(t);
      break;
    case IterativeMode::kQAhat:
      need(predicted.answers, t, "answer");
      for (std::size_t k = 0; k < t; ++k) {
        out.question(k) = ground_truth->question(k);
        out.answer(k) = predicted.answers[k];
      }
      out.question(t) = ground_truth->question(t);
      break;
    case IterativeMode::kQhatAhat:
      need(predicted.answers, t, "answer");
      need(predicted.questions, phase == Phase::kAnswer ? t + 1 : t, "question");
      for (std::size_t k = 0; k < t; ++k) {
        out.question(k) = predicted.questions[k];
        out.answer(k) = predicted.answers[k];
      }
      if (phase == Phase::kAnswer) out.question(t) = predicted.questions[t];
      break;
  }
  for (const auto& e : out.entries) {
    if (e.size() != length) throw ShapeError("history entry has wrong length");
  }
  return out;
}

std::vector<TokenSequence> answer_context(const std::vector<TokenSequence>& questions,
                                          const std::vector<TokenSequence>& answers, std::size_t turn,
                                          std::size_t turns, std::size_t length) {
  if (turn < 1 || turn > turns) throw InvalidArgument("turn outside 1..T");
  if (questions.size() < turn || answers.size() + 1 < turn) throw InvalidArgument("history shorter than turn");
  const std::size_t slots = 2 * turns - 1;
  const std::size_t used = 2 * (turn - 1) + 1;
  std::vector<TokenSequence> out(slots, TokenSequence(length, kPadId));
  std::size_t c = slots - used;
  for (std::size_t k = 0; k + 1 < turn; ++k) {
    out[c++] = questions[k];
    out[c++] = answers[k];
  }
  out[c] = questions[turn - 1];
  return out;
}

}  // namespace convdial
