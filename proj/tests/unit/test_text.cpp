#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "convdial/text/fixed_embeddings.hpp"
#include "convdial/text/preprocess.hpp"
#include "convdial/text/vocabulary.hpp"
#include "convdial/util/error.hpp"

using namespace convdial;
using Tokens = std::vector<std::string>;

TEST(Preprocess, Apostrophes) { EXPECT_EQ(preprocess_sentence("What's that?"), (Tokens{"whats", "that"})); }

TEST(Preprocess, Numbers) {
  EXPECT_EQ(preprocess_sentence("2 dogs"), (Tokens{"two", "dogs"}));
  EXPECT_EQ(preprocess_sentence("42"), (Tokens{"forty", "two"}));
  EXPECT_EQ(preprocess_sentence("100"), (Tokens{"one", "hundred"}));
  EXPECT_EQ(preprocess_sentence("305"), (Tokens{"three", "zero", "five"}));
  EXPECT_EQ(preprocess_sentence("20"), (Tokens{"twenty"}));
}

TEST(Preprocess, Empty) {
  EXPECT_TRUE(preprocess_sentence("").empty());
  EXPECT_TRUE(preprocess_sentence("  ?! ").empty());
}

TEST(Preprocess, CurlyApostropheAndCase) {
  EXPECT_EQ(preprocess_sentence("Isn\xE2\x80\x99t it RED, really?"), (Tokens{"isnt", "it", "red", "really"}));
}

TEST(Preprocess, Idempotent) {
  for (const char* s : {"What's that?", "3 cats, 12 DOGS!", "a-b c_d", "it's 100% red", ""}) {
    auto once = preprocess_sentence(s);
    EXPECT_EQ(preprocess_sentence(join_tokens(once)), once) << s;
  }
}

TEST(Vocabulary, MinFrequency) {
  std::vector<Tokens> corpus{Tokens(6, "a"), Tokens(4, "b")};
  Vocabulary v = Vocabulary::build(corpus, 5);
  EXPECT_EQ(v.size(), 3u);
  EXPECT_EQ(v.token(kPadId), kPadToken);
  EXPECT_EQ(v.token(kUnkId), kUnkToken);
  EXPECT_EQ(v.id("a"), 2);
  EXPECT_EQ(v.id("b"), kUnkId);
}

TEST(Vocabulary, MinFrequencyOneKeepsEverything) {
  Vocabulary v = Vocabulary::build({{"x", "y"}, {"z"}}, 1);
  EXPECT_EQ(v.size(), 5u);
}

TEST(Vocabulary, TiesAreAlphabetical) {
  Vocabulary v = Vocabulary::build({{"pear", "apple", "fig", "fig"}}, 1);
  EXPECT_EQ(v.id("fig"), 2);
  EXPECT_EQ(v.id("apple"), 3);
  EXPECT_EQ(v.id("pear"), 4);
}

TEST(Vocabulary, Deterministic) {
  std::vector<Tokens> corpus{{"c", "b", "a", "b"}, {"d", "a"}};
  EXPECT_EQ(Vocabulary::build(corpus, 1).tokens(), Vocabulary::build(corpus, 1).tokens());
}

TEST(Vocabulary, Errors) {
  EXPECT_THROW(Vocabulary::build({}, 1), InvalidArgument);
  EXPECT_THROW(Vocabulary::build({{"a"}}, 0), InvalidArgument);
}

TEST(Vocabulary, EncodeDecodeAndJson) {
  Vocabulary v = Vocabulary::build({{"red", "ball"}}, 1);
  TokenSequence s = v.encode({"red", "ball", "blue"}, 5);
  EXPECT_EQ(s, (TokenSequence{v.id("red"), v.id("ball"), kUnkId, kPadId, kPadId}));
  EXPECT_EQ(v.encode({"red", "ball", "red"}, 2).size(), 2u);
  EXPECT_EQ(v.decode(s), (Tokens{"red", "ball", "<unk>"}));
  EXPECT_EQ(Vocabulary::from_json(v.to_json()).tokens(), v.tokens());
}

namespace {

FixedEmbeddingTable small_table() {
  return FixedEmbeddingTable({"x", "y", "z"}, {{1.0, 0.0}, {0.0, 1.0}, {2.0, 2.0}});
}

}  // namespace

TEST(FixedEmbeddings, Averaging) {
  auto t = small_table();
  EXPECT_EQ(sentence_embedding_avg({"x"}, t), (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(sentence_embedding_avg({"x", "y"}, t), (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(sentence_embedding_avg({"<pad>", "<pad>"}, t), (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(sentence_embedding_avg({"<unk>", "x", "<pad>"}, t), (std::vector<double>{1.0, 0.0}));
}

TEST(FixedEmbeddings, UnknownTokenUsesMean) {
  auto t = small_table();
  auto v = t.lookup("nope");
  EXPECT_DOUBLE_EQ(v[0], 1.0);
  EXPECT_DOUBLE_EQ(v[1], 1.0);
}

TEST(FixedEmbeddings, ScalingIsLinear) {
  FixedEmbeddingTable a({"p", "q"}, {{1.0, 2.0}, {3.0, -1.0}});
  FixedEmbeddingTable b({"p", "q"}, {{2.5, 5.0}, {7.5, -2.5}});
  auto ea = sentence_embedding_avg({"p", "q"}, a);
  auto eb = sentence_embedding_avg({"p", "q"}, b);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_DOUBLE_EQ(eb[i], 2.5 * ea[i]);
  const std::vector<double> ref{1.0, 1.0};
  EXPECT_NEAR(cosine_similarity(ea, ref), cosine_similarity(eb, ref), 1e-15);
}

TEST(FixedEmbeddings, FileRoundTripAndErrors) {
  auto dir = std::filesystem::temp_directory_path() / "convdial_text_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "emb.txt").string();
  small_table().save(path);
  auto back = FixedEmbeddingTable::load(path);
  EXPECT_EQ(back.tokens(), small_table().tokens());
  EXPECT_EQ(back.lookup("z")[1], 2.0);

  {
    std::ofstream bad(path);
    bad << "2 2\nx 1 0\ny 1\n";
  }
  try {
    FixedEmbeddingTable::load(path);
    FAIL() << "expected parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
  EXPECT_THROW(FixedEmbeddingTable::load((dir / "missing.txt").string()), IoError);
}

TEST(Cosine, Examples) {
  std::vector<double> u{1.0, 2.0, -0.5};
  std::vector<double> neg{-1.0, -2.0, 0.5};
  EXPECT_DOUBLE_EQ(cosine_similarity(u, u), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(u, neg), -1.0);
  EXPECT_EQ(cosine_similarity(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 3.0}), 0.0);
  EXPECT_EQ(cosine_similarity(std::vector<double>{0.0, 0.0}, std::vector<double>{0.0, 3.0}), 0.0);
  EXPECT_THROW(cosine_similarity(u, std::vector<double>{1.0}), ShapeError);
}
