#include "convdial/inference/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "convdial/tensor/ops.hpp"
#include "convdial/train/batching.hpp"
#include "convdial/util/error.hpp"

namespace convdial {

ScoreMethod parse_score_method(const std::string& text) {
  if (text == "elbo") return ScoreMethod::kElbo;
  if (text == "lw") return ScoreMethod::kLikelihoodWeighting;
  if (text == "w2v") return ScoreMethod::kWord2Vec;
  throw InvalidArgument("unknown score function '" + text + "' (expected elbo, lw or w2v)");
}

std::string to_string(ScoreMethod method) {
  switch (method) {
    case ScoreMethod::kElbo:
      return "elbo";
    case ScoreMethod::kLikelihoodWeighting:
      return "lw";
    case ScoreMethod::kWord2Vec:
      return "w2v";
  }
  return "?";
}

std::string score_tag(ScoreMethod method) {
  switch (method) {
    case ScoreMethod::kElbo:
      return "S_M-ELBO";
    case ScoreMethod::kLikelihoodWeighting:
      return "S_M-LW";
    case ScoreMethod::kWord2Vec:
      return "S_w2v";
  }
  return "?";
}

namespace {

ModelBatch candidate_batch(const Model& model, const PreparedRecord& record, std::size_t turn,
                           const std::vector<TokenSequence>& candidates) {
  const ModelSpec& spec = model.spec();
  if (spec.kind != ModelKind::kA) throw InvalidArgument("model-based candidate scoring needs model A");
  if (candidates.empty()) throw InvalidArgument("no candidates to score");
  const std::vector<TokenSequence> context = ground_truth_context(record, turn);
  ModelBatch b;
  for (const TokenSequence& c : candidates) {
    if (c.size() != spec.length) throw ShapeError("candidate length differs from L");
    append_condition(b, record);
    append_context(b, context);
    append_target(b, {c});
  }
  b.validate(spec);
  return b;
}

double log_mean_exp(const std::vector<double>& xs) {
  const double m = *std::max_element(xs.begin(), xs.end());
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s / static_cast<double>(xs.size()));
}

}  // namespace

std::vector<double> score_candidates_model(Model& model, const PreparedRecord& record, std::size_t turn,
                                           const std::vector<TokenSequence>& candidates, ScoreMethod method,
                                           std::size_t samples, Rng& rng) {
  ModelBatch b = candidate_batch(model, record, turn, candidates);
  const std::size_t n = b.size, z_dim = model.spec().latent;
  NoGradGuard no_grad;

  if (method == ScoreMethod::kElbo) {
    ElboResult r = elbo(model, b, Tensor(), 1.0, Mode::kEval);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = -(r.ce_per_example[i] + r.kld_per_example[i]);
    return out;
  }
  if (method != ScoreMethod::kLikelihoodWeighting) {
    throw InvalidArgument("score_candidates_model takes elbo or lw");
  }
  if (samples < 1) throw InvalidArgument("likelihood weighting needs at least one sample");

  PriorOutput p = model.prior_forward(b, Mode::kEval);
  std::vector<std::vector<double>> per_candidate(n, std::vector<double>(samples));
  for (std::size_t k = 0; k < samples; ++k) {
    const std::vector<double> eps = rng.normal_vector(z_dim);
    std::vector<double> tiled;
    for (std::size_t i = 0; i < n; ++i) tiled.insert(tiled.end(), eps.begin(), eps.end());
    Tensor z = sample_latent(p.prior, Tensor({n, z_dim}, tiled));
    std::vector<double> ll = conditional_log_likelihood(model, b, z, p.condition);
    for (std::size_t i = 0; i < n; ++i) per_candidate[i][k] = ll[i];
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = log_mean_exp(per_candidate[i]);
  return out;
}

std::vector<double> candidate_log_likelihood_at_prior_mean(Model& model, const PreparedRecord& record,
                                                           std::size_t turn,
                                                           const std::vector<TokenSequence>& candidates) {
  ModelBatch b = candidate_batch(model, record, turn, candidates);
  NoGradGuard no_grad;
  PriorOutput p = model.prior_forward(b, Mode::kEval);
  return conditional_log_likelihood(model, b, p.prior.mu, p.condition);
}

std::vector<double> score_candidates_w2v(const std::vector<std::string>& predicted,
                                         const std::vector<std::vector<std::string>>& candidates,
                                         const FixedEmbeddingTable& table) {
  const std::vector<double> pv = sentence_embedding_avg(predicted, table);
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) out.push_back(cosine_similarity(pv, sentence_embedding_avg(c, table)));
  return out;
}

std::size_t ground_truth_rank(std::span<const double> scores, std::size_t truth) {
  if (truth >= scores.size()) throw InvalidArgument("ground-truth index out of range");
  for (double s : scores) {
    if (std::isnan(s)) throw NumericError("NaN candidate score");
  }
  const double g = scores[truth];
  std::size_t rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > g || (scores[j] == g && j < truth)) ++rank;
  }
  return rank;
}

RankingMetrics ranking_metrics(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw InvalidArgument("ranking_metrics: no ranks");
  RankingMetrics m;
  for (std::size_t r : ranks) {
    if (r == 0) throw InvalidArgument("ranking_metrics: ranks are 1-based");
    m.mr += static_cast<double>(r);
    m.mrr += 1.0 / static_cast<double>(r);
    m.r1 += r <= 1 ? 1.0 : 0.0;
    m.r5 += r <= 5 ? 1.0 : 0.0;
    m.r10 += r <= 10 ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(ranks.size());
  m.mr /= n;
  m.mrr /= n;
  m.r1 /= n;
  m.r5 /= n;
  m.r10 /= n;
  return m;
}

double sim_cq(const std::vector<std::vector<std::string>>& questions, const std::vector<std::string>& caption,
              const FixedEmbeddingTable& table) {
  if (questions.empty()) throw InvalidArgument("sim_cq: no questions");
  const std::vector<double> cv = sentence_embedding_avg(caption, table);
  double total = 0.0;
  for (const auto& q : questions) total += cosine_similarity(sentence_embedding_avg(q, table), cv);
  return total / static_cast<double>(questions.size());
}

std::vector<double> sim_dispersion(Model& model, std::span<const PreparedRecord* const> records,
                                   std::span<const DialogueBlock> generated, std::span<const DialogueBlock> truth) {
  const ModelSpec& spec = model.spec();
  if (spec.kind == ModelKind::kA) throw InvalidArgument("sim_dispersion needs a block model (B or B_AR)");
  const std::size_t n = records.size();
  if (generated.size() != n || truth.size() != n) throw InvalidArgument("sim_dispersion: length mismatch");
  if (n == 0) return {};
  ModelBatch b;
  std::vector<TokenId> gen_ids, true_ids;
  for (std::size_t i = 0; i < n; ++i) {
    append_condition(b, *records[i]);
    const std::vector<TokenId> g = generated[i].flat(), t = truth[i].flat();
    if (g.size() != spec.channels() * spec.length || t.size() != g.size()) {
      throw ShapeError("sim_dispersion: dialogue does not match T/L");
    }
    gen_ids.insert(gen_ids.end(), g.begin(), g.end());
    true_ids.insert(true_ids.end(), t.begin(), t.end());
  }
  b.validate(spec, false);

  NoGradGuard no_grad;
  PriorOutput p = model.prior_forward(b, Mode::kEval);
  // Two passes of the same shape, so identical dialogues encode identically.
  GaussianParams qg = model.encoder_forward(gen_ids, n, p.condition, Mode::kEval);
  GaussianParams qt = model.encoder_forward(true_ids, n, p.condition, Mode::kEval);
  std::vector<double> out(n, 0.0);
  if (qg.point_mass()) return out;
  Tensor kl = latent_kl(qg, qt);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::max(0.0, kl.at(i));
  return out;
}

double sim_dispersion(Model& model, const PreparedRecord& record, const DialogueBlock& generated,
                      const DialogueBlock& truth) {
  const PreparedRecord* one[] = {&record};
  return sim_dispersion(model, one, std::span(&generated, 1), std::span(&truth, 1)).front();
}

}  // namespace convdial
