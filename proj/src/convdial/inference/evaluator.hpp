#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "convdial/inference/generation.hpp"
#include "convdial/inference/scoring.hpp"

namespace convdial {

/// Block evaluation or one of the iterative modes.
struct EvalMode {
  bool block = true;
  IterativeMode iterative = IterativeMode::kQA;
};

/// Accepts "block", "d-qa", "d-qhat-a", "d-qhat-ahat".
EvalMode parse_eval_mode(const std::string& text);
std::string to_string(const EvalMode& mode);

struct EvalConfig {
  EvalMode mode;
  ScoreMethod score = ScoreMethod::kWord2Vec;
  std::size_t lw_samples = kDefaultLwSamples;
  /// Draw z from the prior for generation instead of taking its mean.
  bool sample = false;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;

  void validate() const;
  /// Throws ConfigError when the mode or score function does not apply to
  /// the model kind: A is evaluated in block mode only, and B / B_AR rank
  /// with S_w2v only.
  void check_model(const ModelSpec& spec) const;
  nlohmann::json to_json() const;
  static EvalConfig from_json(const nlohmann::json& j);
};

struct EvalReport {
  std::string model;
  std::string mode;
  std::string score;
  std::uint64_t seed = 0;
  std::size_t records = 0;
  std::size_t ranked = 0;  // answers that had a candidate set
  double ce = 0.0;
  double kld = 0.0;
  std::optional<RankingMetrics> ranking;
  std::optional<double> sim_cq;
  std::optional<double> sim_dispersion;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  /// "key<TAB>value" lines; absent values print as "n/a".
  std::string to_text() const;
};

/// One image's dialogue as generated, next to the ground truth.
struct Transcript {
  std::string image_id;
  WordList caption;
  std::vector<WordList> questions;
  std::vector<WordList> answers;
  std::vector<WordList> truth_questions;
  std::vector<WordList> truth_answers;
  std::vector<std::size_t> ranks;  // empty without candidates
};

std::string render_transcripts(const std::vector<Transcript>& transcripts);

struct EvalOutput {
  EvalReport report;
  std::vector<Transcript> transcripts;
};

EvalOutput evaluate(Model& model, const Dataset& data, std::span<const std::size_t> records, const Vocabulary& vocab,
                    const FixedEmbeddingTable& table, const EvalConfig& cfg);

/// Markdown table with one row per report: method x mode x metrics.
std::string render_report_table(const std::vector<EvalReport>& reports);

}  // namespace convdial
