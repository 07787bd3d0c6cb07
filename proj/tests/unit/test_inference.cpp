#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "convdial/inference/evaluator.hpp"
#include "convdial/train/trainer.hpp"
#include "convdial/util/error.hpp"
#include "helpers.hpp"

using namespace convdial;
using namespace testutil;

namespace {

std::vector<std::size_t> first_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// A small world with a briefly trained model, shared by the tests below.
struct Trained {
  SmallWorld world;
  std::unique_ptr<Model> model;
};

Trained trained(ModelKind kind, bool dirac = false) {
  Trained t{small_world(16, 3, 8, 8), nullptr};
  ModelSpec s = spec_for(t.world, kind);
  s.dirac = dirac;
  t.model = std::make_unique<Model>(s, 3);
  TrainConfig c;
  c.epochs = 2;
  c.ramp_epochs = 1;
  c.batch_size = 8;
  c.lr = 3e-3;
  train_model(*t.model, t.world.data, first_n(12), c);
  return t;
}

FixedEmbeddingTable plane_table() {
  return FixedEmbeddingTable({"east", "north", "diag", "west"},
                             {{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}, {-1.0, 0.0}});
}

RankingMetrics brute_force(const std::vector<std::size_t>& ranks) {
  RankingMetrics m;
  for (std::size_t r : ranks) {
    m.mr += static_cast<double>(r);
    m.mrr += 1.0 / static_cast<double>(r);
    m.r1 += r <= 1 ? 1.0 : 0.0;
    m.r5 += r <= 5 ? 1.0 : 0.0;
    m.r10 += r <= 10 ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(ranks.size());
  return {m.mr / n, m.mrr / n, m.r1 / n, m.r5 / n, m.r10 / n};
}

}  // namespace

TEST(Ranking, HandComputedExample) {
  const std::vector<std::size_t> ranks{1, 3, 2};
  RankingMetrics m = ranking_metrics(ranks);
  EXPECT_DOUBLE_EQ(m.mr, 2.0);
  EXPECT_NEAR(m.mrr, 0.6111, 1e-4);
  EXPECT_NEAR(m.r1, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(m.r5, 1.0);
  EXPECT_EQ(m.r10, 1.0);
}

TEST(Ranking, MatchesBruteForce) {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::size_t> ranks(1 + rng.index(40));
    for (auto& r : ranks) r = 1 + rng.index(100);
    RankingMetrics a = ranking_metrics(ranks), b = brute_force(ranks);
    EXPECT_EQ(a.mr, b.mr);
    EXPECT_EQ(a.mrr, b.mrr);
    EXPECT_EQ(a.r1, b.r1);
    EXPECT_EQ(a.r5, b.r5);
    EXPECT_EQ(a.r10, b.r10);
  }
}

TEST(Ranking, RejectsBadInput) {
  EXPECT_THROW(ranking_metrics(std::vector<std::size_t>{}), InvalidArgument);
  EXPECT_THROW(ranking_metrics(std::vector<std::size_t>{1, 0}), InvalidArgument);
  const std::vector<double> scores{0.1, std::nan(""), 0.3};
  EXPECT_THROW(ground_truth_rank(scores, 0), NumericError);
  EXPECT_THROW(ground_truth_rank(std::vector<double>{1.0}, 1), InvalidArgument);
}

TEST(Ranking, TiesFavourEarlierCandidates) {
  const std::vector<double> s{0.5, 0.9, 0.5, 0.5, 0.1};
  EXPECT_EQ(ground_truth_rank(s, 1), 1u);
  EXPECT_EQ(ground_truth_rank(s, 0), 2u);
  EXPECT_EQ(ground_truth_rank(s, 2), 3u);
  EXPECT_EQ(ground_truth_rank(s, 3), 4u);
  EXPECT_EQ(ground_truth_rank(s, 4), 5u);
}

TEST(Word2VecScore, OrdersByCosine) {
  const FixedEmbeddingTable t = plane_table();
  std::vector<double> s = score_candidates_w2v({"east"}, {{"north"}, {"diag"}, {"east"}, {"west"}}, t);
  ASSERT_EQ(s.size(), 4u);
  EXPECT_NEAR(s[0], 0.0, 1e-15);
  EXPECT_NEAR(s[1], std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(s[2], 1.0, 1e-15);
  EXPECT_NEAR(s[3], -1.0, 1e-15);
  EXPECT_EQ(ground_truth_rank(s, 2), 1u);
  EXPECT_EQ(ground_truth_rank(s, 1), 2u);
  EXPECT_EQ(ground_truth_rank(s, 0), 3u);
  EXPECT_EQ(ground_truth_rank(s, 3), 4u);
  // Averaging: "east north" points the same way as "diag".
  std::vector<double> avg = score_candidates_w2v({"east", "north"}, {{"diag"}}, t);
  EXPECT_NEAR(avg[0], 1.0, 1e-15);
}

TEST(Similarity, CaptionAsQuestionsScoresOne) {
  const FixedEmbeddingTable t = plane_table();
  const std::vector<std::string> caption{"east", "diag"};
  EXPECT_NEAR(sim_cq({caption, caption, caption}, caption, t), 1.0, 1e-12);
  EXPECT_NEAR(sim_cq({{"west"}}, {"east"}, t), -1.0, 1e-12);
}

TEST(Similarity, DispersionOfATrueDialogueIsZero) {
  Trained t = trained(ModelKind::kB);
  const PreparedRecord& r = t.world.data.records[13];
  EXPECT_EQ(sim_dispersion(*t.model, r, r.dialogue, r.dialogue), 0.0);
  const DialogueBlock other = t.world.data.records[14].dialogue;
  EXPECT_GT(sim_dispersion(*t.model, r, other, r.dialogue), 0.0);
}

TEST(Generation, BlockIsDeterministicAndShaped) {
  Trained t = trained(ModelKind::kB);
  const PreparedRecord& r = t.world.data.records[12];
  DialogueBlock a = generate_block(*t.model, r), b = generate_block(*t.model, r);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.turns, 3u);
  EXPECT_EQ(a.entries.size(), 6u);
  for (const auto& e : a.entries) EXPECT_EQ(e.size(), 8u);
  // Batched and single-record generation agree.
  const PreparedRecord* recs[] = {&t.world.data.records[12], &t.world.data.records[13]};
  std::vector<DialogueBlock> batch = generate_blocks(*t.model, recs);
  EXPECT_EQ(batch[0], a);
  // Sampling with one seed is reproducible.
  Rng r1(5), r2(5);
  EXPECT_EQ(generate_block(*t.model, r, &r1), generate_block(*t.model, r, &r2));
}

TEST(Generation, BlockGenerationRejectsModelA) {
  Trained t = trained(ModelKind::kA);
  EXPECT_THROW(generate_block(*t.model, t.world.data.records[0]), InvalidArgument);
}

TEST(Generation, AnswersForModelA) {
  Trained t = trained(ModelKind::kA);
  std::vector<SampleRef> refs{{12, 0}, {12, 2}, {13, 1}};
  std::vector<TokenSequence> out = generate_answers(*t.model, t.world.data, refs);
  ASSERT_EQ(out.size(), 3u);
  for (const auto& a : out) EXPECT_EQ(a.size(), 8u);
  EXPECT_EQ(out, generate_answers(*t.model, t.world.data, refs));
}

TEST(Iterative, FirstTurnAgreesAcrossGroundTruthModes) {
  Trained t = trained(ModelKind::kB);
  const PreparedRecord& r = t.world.data.records[12];
  IterativeResult qa = generate_iterative(*t.model, r, IterativeMode::kQA, &r.dialogue);
  IterativeResult qahat = generate_iterative(*t.model, r, IterativeMode::kQAhat, &r.dialogue);
  ASSERT_EQ(qa.steps.size(), 3u);
  ASSERT_EQ(qahat.steps.size(), 3u);
  EXPECT_EQ(qa.steps[0].input, qahat.steps[0].input);
  EXPECT_EQ(qa.steps[0].predicted, qahat.steps[0].predicted);
  EXPECT_EQ(qa.steps[0].ce, qahat.steps[0].ce);
  EXPECT_EQ(qa.steps[0].kld, qahat.steps[0].kld);
}

TEST(Iterative, GroundTruthModesKeepTheQuestions) {
  Trained t = trained(ModelKind::kB);
  const PreparedRecord& r = t.world.data.records[12];
  for (IterativeMode mode : {IterativeMode::kQA, IterativeMode::kQAhat}) {
    IterativeResult res = generate_iterative(*t.model, r, mode, &r.dialogue);
    for (std::size_t turn = 0; turn < 3; ++turn) {
      EXPECT_EQ(res.dialogue.question(turn), r.dialogue.question(turn));
      EXPECT_EQ(res.dialogue.answer(turn), res.steps[turn].predicted);
      EXPECT_TRUE(std::isfinite(res.steps[turn].ce));
      EXPECT_GE(res.steps[turn].kld, 0.0);
    }
    // D-qa feeds earlier ground-truth answers back in; D-qâ feeds its own.
    const DialogueBlock& in = res.steps[2].input;
    const TokenSequence& expected = mode == IterativeMode::kQA ? r.dialogue.answer(0) : res.steps[0].predicted;
    EXPECT_EQ(in.answer(0), expected);
    EXPECT_EQ(in.question(2), r.dialogue.question(2));
    EXPECT_EQ(in.answer(2), TokenSequence(8, kPadId));
  }
}

TEST(Iterative, FullyPredictedModeNeverReadsGroundTruth) {
  Trained t = trained(ModelKind::kBAR);
  PreparedRecord r = t.world.data.records[12];
  IterativeResult reference = generate_iterative(*t.model, r, IterativeMode::kQhatAhat, nullptr);
  ASSERT_EQ(reference.steps.size(), 6u);
  for (const auto& s : reference.steps) EXPECT_TRUE(std::isnan(s.ce));

  PreparedRecord scrambled = r;
  for (auto& e : scrambled.dialogue.entries) std::fill(e.begin(), e.end(), static_cast<TokenId>(3));
  IterativeResult blind = generate_iterative(*t.model, scrambled, IterativeMode::kQhatAhat, nullptr);
  EXPECT_EQ(blind.dialogue, reference.dialogue);

  // Supplying ground truth only adds scores.
  IterativeResult scored = generate_iterative(*t.model, r, IterativeMode::kQhatAhat, &r.dialogue);
  EXPECT_EQ(scored.dialogue, reference.dialogue);
  for (const auto& s : scored.steps) EXPECT_TRUE(std::isfinite(s.ce));
  for (std::size_t turn = 0; turn < 3; ++turn) {
    EXPECT_EQ(scored.dialogue.question(turn), scored.history.questions[turn]);
  }
}

TEST(ModelScore, DiracLikelihoodWeightingIsTheDirectLikelihood) {
  Trained t = trained(ModelKind::kA, true);
  const PreparedRecord& r = t.world.data.records[12];
  std::vector<TokenSequence> cands;
  for (const auto& words : r.candidates[1]) cands.push_back(t.world.vocab.encode(words, 8));
  const std::vector<double> direct = candidate_log_likelihood_at_prior_mean(*t.model, r, 1, cands);
  for (std::size_t k : {std::size_t{1}, std::size_t{7}, std::size_t{50}}) {
    Rng rng(k);
    EXPECT_EQ(score_candidates_model(*t.model, r, 1, cands, ScoreMethod::kLikelihoodWeighting, k, rng), direct);
  }
}

TEST(ModelScore, DuplicateCandidatesScoreEqually) {
  Trained t = trained(ModelKind::kA);
  const PreparedRecord& r = t.world.data.records[13];
  std::vector<TokenSequence> cands;
  for (const auto& words : r.candidates[0]) cands.push_back(t.world.vocab.encode(words, 8));
  cands.push_back(cands[0]);
  for (ScoreMethod m : {ScoreMethod::kElbo, ScoreMethod::kLikelihoodWeighting}) {
    Rng rng(4);
    std::vector<double> s = score_candidates_model(*t.model, r, 0, cands, m, 10, rng);
    EXPECT_EQ(s.front(), s.back()) << to_string(m);
    for (double v : s) EXPECT_LT(v, 0.0);
  }
}

TEST(ModelScore, LikelihoodWeightingIsReproducible) {
  Trained t = trained(ModelKind::kA);
  const PreparedRecord& r = t.world.data.records[13];
  std::vector<TokenSequence> cands{t.world.vocab.encode(r.answer_words[0], 8)};
  Rng rng(9);
  const double lw = score_candidates_model(*t.model, r, 0, cands, ScoreMethod::kLikelihoodWeighting, 1, rng)[0];
  Rng same(9);
  EXPECT_EQ(score_candidates_model(*t.model, r, 0, cands, ScoreMethod::kLikelihoodWeighting, 1, same)[0], lw);
  EXPECT_TRUE(std::isfinite(lw));
}

TEST(EvalSetup, ParsingAndValidation) {
  EXPECT_TRUE(parse_eval_mode("block").block);
  EXPECT_EQ(parse_eval_mode("d-qhat-a").iterative, IterativeMode::kQAhat);
  EXPECT_EQ(to_string(parse_eval_mode("d-qhat-ahat")), "d-qhat-ahat");
  EXPECT_THROW(parse_eval_mode("d-q"), InvalidArgument);
  EXPECT_EQ(parse_score_method("lw"), ScoreMethod::kLikelihoodWeighting);
  EXPECT_EQ(score_tag(ScoreMethod::kWord2Vec), "S_w2v");
  EXPECT_THROW(parse_score_method("bleu"), InvalidArgument);

  EvalConfig c;
  c.mode = parse_eval_mode("d-qa");
  EXPECT_THROW(c.check_model(tiny_spec(ModelKind::kA)), ConfigError);
  EXPECT_NO_THROW(c.check_model(tiny_spec(ModelKind::kB)));
  c.score = ScoreMethod::kElbo;
  EXPECT_THROW(c.check_model(tiny_spec(ModelKind::kB)), ConfigError);
  c.mode = parse_eval_mode("block");
  EXPECT_NO_THROW(c.check_model(tiny_spec(ModelKind::kA)));
  c.lw_samples = 0;
  c.score = ScoreMethod::kLikelihoodWeighting;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(EvalConfig::from_json({{"mode", "block"}, {"bogus", 1}}), ConfigError);
}

TEST(Evaluate, ModelAReportHasRankingOnly) {
  Trained t = trained(ModelKind::kA);
  EvalConfig c;
  c.mode = parse_eval_mode("block");
  FixedEmbeddingTable fixed = random_fixed_embeddings(t.world.corpus, 8, 6);
  EvalOutput out = evaluate(*t.model, t.world.data, std::vector<std::size_t>{12, 13, 14, 15}, t.world.vocab, fixed, c);
  EXPECT_EQ(out.report.model, "A");
  EXPECT_EQ(out.report.records, 4u);
  EXPECT_EQ(out.report.ranked, 12u);
  ASSERT_TRUE(out.report.ranking.has_value());
  EXPECT_GE(out.report.ranking->mr, 1.0);
  EXPECT_LE(out.report.ranking->mr, 5.0);
  EXPECT_FALSE(out.report.sim_cq.has_value());
  EXPECT_EQ(out.transcripts.size(), 4u);
  EXPECT_EQ(EvalReport::from_json(out.report.to_json()).to_json(), out.report.to_json());
  EXPECT_NE(out.report.to_text().find("sim_cq\tn/a"), std::string::npos);
}

TEST(Evaluate, BlockModelReportsSimilarities) {
  Trained t = trained(ModelKind::kB);
  FixedEmbeddingTable fixed = random_fixed_embeddings(t.world.corpus, 8, 6);
  for (const char* mode : {"block", "d-qa", "d-qhat-ahat"}) {
    EvalConfig c;
    c.mode = parse_eval_mode(mode);
    EvalOutput out = evaluate(*t.model, t.world.data, std::vector<std::size_t>{12, 13, 14}, t.world.vocab, fixed, c);
    EXPECT_TRUE(out.report.sim_cq.has_value()) << mode;
    ASSERT_TRUE(out.report.sim_dispersion.has_value()) << mode;
    EXPECT_GE(*out.report.sim_dispersion, 0.0);
    EXPECT_GT(out.report.ce, 0.0);
    EvalOutput again = evaluate(*t.model, t.world.data, std::vector<std::size_t>{12, 13, 14}, t.world.vocab, fixed, c);
    EXPECT_EQ(again.report.to_json(), out.report.to_json()) << mode;
  }
}

TEST(Evaluate, ReportTableHasOneRowPerReport) {
  EvalReport a;
  a.model = "A";
  a.mode = "block";
  a.score = "S_w2v";
  a.ranking = RankingMetrics{2.0, 0.6, 0.3, 1.0, 1.0};
  EvalReport b = a;
  b.model = "B";
  b.mode = "d-qa";
  b.ranking.reset();
  b.sim_cq = 0.4;
  const std::string table = render_report_table({a, b});
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 4);
  EXPECT_NE(table.find("| B "), std::string::npos);
}
