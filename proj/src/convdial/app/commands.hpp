#pragma once

#include <memory>
#include <string>
#include <vector>

#include "convdial/app/run_config.hpp"
#include "convdial/cvae/model.hpp"
#include "convdial/inference/evaluator.hpp"

namespace convdial {

/// Writes the synthetic corpus and its fixed-embedding table into output_dir.
void cmd_synth(const RunConfig& cfg);

/// Trains on the leading split; writes model.ckpt (with the vocabulary in its
/// manifest) and train_log.jsonl.
std::vector<EpochLog> cmd_train(const RunConfig& cfg);

/// Evaluates the checkpoint on the held-out split; writes
/// report-<mode>-<score>.{json,txt} and a transcript.
EvalReport cmd_eval(const RunConfig& cfg);

/// Writes generated-<mode>.txt transcripts for the held-out split.
void cmd_generate(const RunConfig& cfg);

/// Markdown table over JSON reports.
std::string cmd_report(const std::vector<std::string>& report_paths);

/// A trained model with the vocabulary it was trained with.
struct LoadedModel {
  std::unique_ptr<Model> model;
  Vocabulary vocab;
  nlohmann::json meta;
};
LoadedModel load_trained_model(const std::string& checkpoint_path);

/// Record indices of the two splits: [0, train) and [train, train + eval).
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;
};
Split split_records(const RunConfig& cfg, std::size_t total);

/// The corpus named by the config (synthetic output, JSON-lines or VisDial).
Corpus load_run_corpus(const RunConfig& cfg);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace convdial
