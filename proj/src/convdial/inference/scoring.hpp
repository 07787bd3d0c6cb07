#pragma once

#include <span>
#include <string>
#include <vector>

#include "convdial/colouring/colouring.hpp"
#include "convdial/cvae/model.hpp"
#include "convdial/data/dataset.hpp"
#include "convdial/text/fixed_embeddings.hpp"
#include "convdial/util/rng.hpp"

namespace convdial {

enum class ScoreMethod { kElbo, kLikelihoodWeighting, kWord2Vec };

/// "elbo", "lw", "w2v".
ScoreMethod parse_score_method(const std::string& text);
std::string to_string(ScoreMethod method);
/// Report tag: "S_M-ELBO", "S_M-LW", "S_w2v".
std::string score_tag(ScoreMethod method);

inline constexpr std::size_t kDefaultLwSamples = 50;

/// Model A's marginal-likelihood estimate of each candidate answer to turn
/// `turn` (zero-based) of `record`, under the ground-truth context.
///  - kElbo: the conditional ELBO at the posterior mean (eps = 0).
///  - kLikelihoodWeighting: log-mean-exp over `samples` prior draws of
///    log p(a | z, y). The draws are shared across candidates.
std::vector<double> score_candidates_model(Model& model, const PreparedRecord& record, std::size_t turn,
                                           const std::vector<TokenSequence>& candidates, ScoreMethod method,
                                           std::size_t samples, Rng& rng);

/// log p(a | mu_p, y) for every candidate: the direct conditional likelihood
/// of a point-mass prior.
std::vector<double> candidate_log_likelihood_at_prior_mean(Model& model, const PreparedRecord& record,
                                                           std::size_t turn,
                                                           const std::vector<TokenSequence>& candidates);

/// Cosine similarity between the averaged fixed embeddings of the prediction
/// and of each candidate.
std::vector<double> score_candidates_w2v(const std::vector<std::string>& predicted,
                                         const std::vector<std::vector<std::string>>& candidates,
                                         const FixedEmbeddingTable& table);

/// 1-based rank of candidate `truth` under descending scores. Ties go to the
/// earlier candidate. Throws on NaN scores or an invalid index.
std::size_t ground_truth_rank(std::span<const double> scores, std::size_t truth);

struct RankingMetrics {
  double mr = 0.0;
  double mrr = 0.0;
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
};

/// Mean rank, mean reciprocal rank and recall@{1,5,10}. Throws on an empty
/// list or a rank of 0.
RankingMetrics ranking_metrics(std::span<const std::size_t> ranks);

/// Mean over questions of cos(avg(q_t), avg(caption)).
double sim_cq(const std::vector<std::vector<std::string>>& questions, const std::vector<std::string>& caption,
              const FixedEmbeddingTable& table);

/// KL(q(z | generated, y) || q(z | truth, y)) per record, for block models.
std::vector<double> sim_dispersion(Model& model, std::span<const PreparedRecord* const> records,
                                   std::span<const DialogueBlock> generated, std::span<const DialogueBlock> truth);
double sim_dispersion(Model& model, const PreparedRecord& record, const DialogueBlock& generated,
                      const DialogueBlock& truth);

}  // namespace convdial
