#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "convdial/cvae/spec.hpp"
#include "convdial/data/synthetic.hpp"
#include "convdial/inference/evaluator.hpp"
#include "convdial/train/trainer.hpp"

namespace convdial {

inline constexpr const char* kRunConfigFormat = "convdial-run";
inline constexpr int kRunConfigVersion = 1;

enum class DataSource { kSynthetic, kCorpus, kVisdial };

/// Everything one experiment needs. Relative paths in the file resolve
/// against the file's directory. The top-level seed is the only seed: the
/// corpus, the fixed embeddings, model init, training and evaluation each
/// get a stream derived from it.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir;

  DataSource source = DataSource::kSynthetic;
  SyntheticConfig synthetic;
  std::string corpus_path;        // kCorpus
  std::string visdial_json;       // kVisdial
  std::string visdial_features;   // kVisdial, optional
  std::string fixed_embeddings;   // optional for synthetic data
  std::size_t fixed_dim = 32;
  std::size_t min_freq = 1;
  std::size_t train_records = 0;  // leading records used for training (0: all but the eval split)
  std::size_t eval_records = 0;   // records following the training split

  ModelSpec model;  // V comes from the vocabulary at training time
  TrainConfig train;
  EvalConfig eval;

  /// Reads and validates a config file.
  static RunConfig load(const std::string& path);
  static RunConfig from_json(const nlohmann::json& j, const std::string& base_dir);
  nlohmann::json to_json() const;
  void validate() const;
  /// Replaces the top-level seed and re-derives the train and eval streams.
  void set_seed(std::uint64_t s);

  /// Derived seeds.
  std::uint64_t corpus_seed() const;
  std::uint64_t fixed_seed() const;
  std::uint64_t init_seed() const;
  std::uint64_t train_seed() const;
  std::uint64_t eval_seed() const;

  /// Files inside output_dir.
  std::string synthetic_corpus_file() const;
  std::string synthetic_fixed_file() const;
  std::string checkpoint_file() const;
  std::string train_log_file() const;
  std::string report_stem() const;  // report-<mode>-<score>
  std::string transcript_file(const std::string& stem) const;

  /// The corpus and fixed table this run reads.
  std::string corpus_file() const;
  std::string fixed_file() const;
};

nlohmann::json synthetic_config_to_json(const SyntheticConfig& cfg);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);

}  // namespace convdial
