#include <gtest/gtest.h>

#include "convdial/colouring/colouring.hpp"
#include "convdial/util/error.hpp"
#include "convdial/util/rng.hpp"

using namespace convdial;

namespace {

Tensor random_table(std::size_t vocab, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  return Tensor({vocab, dim}, rng.normal_vector(vocab * dim));
}

DialogueBlock numbered_block(std::size_t turns, std::size_t length) {
  DialogueBlock b = DialogueBlock::padded(turns, length);
  for (std::size_t c = 0; c < b.entries.size(); ++c) {
    for (std::size_t l = 0; l < length; ++l) b.entries[c][l] = static_cast<TokenId>(2 + (c * 3 + l) % 20);
  }
  return b;
}

bool all_pad(const TokenSequence& s) {
  for (TokenId id : s) {
    if (id != kPadId) return false;
  }
  return true;
}

}  // namespace

TEST(Colouring, SentenceShapeAndColumns) {
  Tensor table = random_table(10, 4, 1);
  TokenSequence seq{5, 0, 0};
  ColouredBlock b = colour_sentence(seq, table);
  ASSERT_EQ(b.tensor.shape(), (Shape{1, 1, 4, 3}));
  for (std::size_t e = 0; e < 4; ++e) {
    EXPECT_EQ(b.tensor.at(e * 3 + 0), table.at(5 * 4 + e));
    EXPECT_EQ(b.tensor.at(e * 3 + 1), table.at(e));
    EXPECT_EQ(b.tensor.at(e * 3 + 2), table.at(e));
  }
}

TEST(Colouring, FullScaleShapes) {
  Tensor table = random_table(12, 256, 2);
  EXPECT_EQ(colour_sentence(TokenSequence(64, kPadId), table).tensor.shape(), (Shape{1, 1, 256, 64}));
  EXPECT_EQ(colour_dialogue(DialogueBlock::padded(10, 64), table).tensor.shape(), (Shape{1, 20, 256, 64}));
  Tensor desk = random_table(30, 32, 3);
  EXPECT_EQ(colour_dialogue(numbered_block(5, 16), desk).tensor.shape(), (Shape{1, 10, 32, 16}));
}

TEST(Colouring, SentenceMatchesDialogueChannel) {
  Tensor table = random_table(30, 6, 4);
  DialogueBlock block = numbered_block(3, 5);
  ColouredBlock all = colour_dialogue(block, table);
  for (std::size_t c = 0; c < 6; ++c) {
    ColouredBlock one = colour_sentence(block.entries[c], table);
    for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(one.tensor.at(i), all.tensor.at(c * 30 + i));
  }
  EXPECT_TRUE(all.channels[4].is_question);
  EXPECT_EQ(all.channels[5].turn, 2u);
}

TEST(Colouring, SwappingTurnsPermutesChannels) {
  Tensor table = random_table(30, 3, 5);
  DialogueBlock block = numbered_block(4, 4);
  DialogueBlock swapped = block;
  std::swap(swapped.entries[2], swapped.entries[6]);
  std::swap(swapped.entries[3], swapped.entries[7]);
  ColouredBlock a = colour_dialogue(block, table), b = colour_dialogue(swapped, table);
  const std::size_t per = 12;
  const std::vector<std::size_t> map{0, 1, 6, 7, 4, 5, 2, 3};
  for (std::size_t c = 0; c < 8; ++c) {
    for (std::size_t i = 0; i < per; ++i) EXPECT_EQ(b.tensor.at(c * per + i), a.tensor.at(map[c] * per + i));
  }
}

TEST(Colouring, UncolourRoundTrip) {
  Tensor table = random_table(30, 8, 6);
  DialogueBlock block = numbered_block(2, 7);
  EXPECT_EQ(uncolour(colour_dialogue(block, table), table), block.entries);
}

TEST(Colouring, RejectsMalformedBlock) {
  Tensor table = random_table(30, 2, 7);
  DialogueBlock block = numbered_block(2, 3);
  block.entries[1].push_back(2);
  EXPECT_THROW(colour_dialogue(block, table), ShapeError);
  block.entries.pop_back();
  EXPECT_THROW(colour_dialogue(block, table), ShapeError);
}

TEST(PadFuture, QaFirstTurn) {
  DialogueBlock gt = numbered_block(3, 4);
  DialogueBlock b = pad_future(&gt, {}, 1, IterativeMode::kQA, Phase::kAnswer, 3, 4);
  EXPECT_EQ(b.entries[0], gt.entries[0]);
  for (std::size_t c = 1; c < 6; ++c) EXPECT_TRUE(all_pad(b.entries[c])) << c;
}

TEST(PadFuture, QhatAhatQuestionPhaseFirstTurnIsAllPad) {
  DialogueBlock b = pad_future(nullptr, {}, 1, IterativeMode::kQhatAhat, Phase::kQuestion, 3, 4);
  for (const auto& e : b.entries) EXPECT_TRUE(all_pad(e));
}

TEST(PadFuture, ModesFillHistory) {
  DialogueBlock gt = numbered_block(3, 4);
  DialogueHistory pred;
  pred.questions = {TokenSequence(4, 40), TokenSequence(4, 41), TokenSequence(4, 42)};
  pred.answers = {TokenSequence(4, 50), TokenSequence(4, 51)};

  DialogueBlock qa = pad_future(&gt, pred, 3, IterativeMode::kQA, Phase::kAnswer, 3, 4);
  for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(qa.entries[c], gt.entries[c]);
  EXPECT_TRUE(all_pad(qa.entries[5]));

  DialogueBlock qahat = pad_future(&gt, pred, 3, IterativeMode::kQAhat, Phase::kAnswer, 3, 4);
  EXPECT_EQ(qahat.question(0), gt.question(0));
  EXPECT_EQ(qahat.answer(0), pred.answers[0]);
  EXPECT_EQ(qahat.answer(1), pred.answers[1]);
  EXPECT_EQ(qahat.question(2), gt.question(2));
  EXPECT_TRUE(all_pad(qahat.answer(2)));

  DialogueBlock q = pad_future(nullptr, pred, 3, IterativeMode::kQhatAhat, Phase::kQuestion, 3, 4);
  EXPECT_EQ(q.question(1), pred.questions[1]);
  EXPECT_TRUE(all_pad(q.question(2)));
  DialogueBlock a = pad_future(nullptr, pred, 3, IterativeMode::kQhatAhat, Phase::kAnswer, 3, 4);
  EXPECT_EQ(a.question(2), pred.questions[2]);
  EXPECT_TRUE(all_pad(a.answer(2)));
}

TEST(PadFuture, FutureTurnsArePad) {
  DialogueBlock gt = numbered_block(5, 3);
  for (std::size_t t = 1; t <= 5; ++t) {
    DialogueBlock b = pad_future(&gt, {}, t, IterativeMode::kQA, Phase::kAnswer, 5, 3);
    for (std::size_t k = t; k < 5; ++k) {
      EXPECT_TRUE(all_pad(b.question(k)));
      EXPECT_TRUE(all_pad(b.answer(k)));
    }
  }
}

TEST(PadFuture, FirstTurnSameForQaAndQahat) {
  DialogueBlock gt = numbered_block(4, 3);
  EXPECT_EQ(pad_future(&gt, {}, 1, IterativeMode::kQA, Phase::kAnswer, 4, 3),
            pad_future(&gt, {}, 1, IterativeMode::kQAhat, Phase::kAnswer, 4, 3));
}

TEST(PadFuture, Errors) {
  DialogueBlock gt = numbered_block(3, 4);
  EXPECT_THROW(pad_future(&gt, {}, 2, IterativeMode::kQAhat, Phase::kAnswer, 3, 4), InvalidArgument);
  EXPECT_THROW(pad_future(&gt, {}, 1, IterativeMode::kQA, Phase::kQuestion, 3, 4), InvalidArgument);
  EXPECT_THROW(pad_future(nullptr, {}, 1, IterativeMode::kQA, Phase::kAnswer, 3, 4), InvalidArgument);
  EXPECT_THROW(pad_future(nullptr, {}, 1, IterativeMode::kQhatAhat, Phase::kAnswer, 3, 4), InvalidArgument);
  EXPECT_THROW(pad_future(&gt, {}, 0, IterativeMode::kQA, Phase::kAnswer, 3, 4), InvalidArgument);
  EXPECT_THROW(pad_future(&gt, {}, 4, IterativeMode::kQA, Phase::kAnswer, 3, 4), InvalidArgument);
}

TEST(AnswerContext, RightAligned) {
  std::vector<TokenSequence> q{TokenSequence(2, 10), TokenSequence(2, 11), TokenSequence(2, 12)};
  std::vector<TokenSequence> a{TokenSequence(2, 20), TokenSequence(2, 21)};
  auto first = answer_context(q, a, 1, 3, 2);
  ASSERT_EQ(first.size(), 5u);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_TRUE(all_pad(first[c]));
  EXPECT_EQ(first[4], q[0]);
  auto third = answer_context(q, a, 3, 3, 2);
  EXPECT_EQ(third, (std::vector<TokenSequence>{q[0], a[0], q[1], a[1], q[2]}));
}

TEST(IterativeMode, ParseRoundTrip) {
  for (auto m : {IterativeMode::kQA, IterativeMode::kQAhat, IterativeMode::kQhatAhat}) {
    EXPECT_EQ(parse_iterative_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_iterative_mode("block"), InvalidArgument);
}
