#include "convdial/app/commands.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "convdial/data/dataset.hpp"
#include "convdial/tensor/checkpoint.hpp"
#include "convdial/util/error.hpp"
#include "convdial/util/format.hpp"
#include "convdial/util/log.hpp"

namespace convdial {

namespace fs = std::filesystem;

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << content;
  if (!out) throw IoError("write failed for '" + path + "'");
}

namespace {

void ensure_output_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + cfg.output_dir + "': " + ec.message());
}

FixedEmbeddingTable load_run_fixed(const RunConfig& cfg) {
  const std::string path = cfg.fixed_file();
  if (!fs::is_regular_file(path)) throw IoError("fixed embeddings '" + path + "' not found (run synth first?)");
  return FixedEmbeddingTable::load(path);
}

Corpus leading_records(const Corpus& corpus, std::size_t count) {
  Corpus sub;
  sub.header = corpus.header;
  sub.records.assign(corpus.records.begin(), corpus.records.begin() + static_cast<std::ptrdiff_t>(count));
  return sub;
}

struct EvalInputs {
  LoadedModel loaded;
  Dataset data;
  FixedEmbeddingTable fixed;
  Split split;
};

EvalInputs prepare_eval(const RunConfig& cfg) {
  cfg.eval.check_model(cfg.model);
  EvalInputs in;
  in.loaded = load_trained_model(cfg.checkpoint_file());
  const ModelSpec& spec = in.loaded.model->spec();
  cfg.eval.check_model(spec);
  Corpus corpus = load_run_corpus(cfg);
  in.fixed = load_run_fixed(cfg);
  in.data = prepare_dataset(corpus, in.loaded.vocab, in.fixed, spec.length);
  in.split = split_records(cfg, corpus.records.size());
  if (in.split.eval.empty()) throw ConfigError("data.eval_records must be positive to evaluate");
  return in;
}

}  // namespace

Corpus load_run_corpus(const RunConfig& cfg) {
  switch (cfg.source) {
    case DataSource::kSynthetic: {
      const std::string path = cfg.synthetic_corpus_file();
      if (!fs::is_regular_file(path)) throw IoError("corpus '" + path + "' not found (run synth first?)");
      return load_corpus(path);
    }
    case DataSource::kCorpus:
      return load_corpus(cfg.corpus_path);
    case DataSource::kVisdial:
      return load_visdial(cfg.visdial_json, cfg.visdial_features);
  }
  throw ConfigError("unknown data source");
}

Split split_records(const RunConfig& cfg, std::size_t total) {
  if (cfg.eval_records > total) throw ConfigError("eval_records exceeds the corpus size");
  const std::size_t train = cfg.train_records ? cfg.train_records : total - cfg.eval_records;
  if (train + cfg.eval_records > total) {
    throw ConfigError("train_records + eval_records (" + std::to_string(train + cfg.eval_records) +
                      ") exceeds the corpus size (" + std::to_string(total) + ")");
  }
  Split s;
  for (std::size_t i = 0; i < train; ++i) s.train.push_back(i);
  for (std::size_t i = train; i < train + cfg.eval_records; ++i) s.eval.push_back(i);
  return s;
}

LoadedModel load_trained_model(const std::string& checkpoint_path) {
  if (!fs::is_regular_file(checkpoint_path)) {
    throw IoError("checkpoint '" + checkpoint_path + "' not found (run train first?)");
  }
  CheckpointInfo info = read_checkpoint_info(checkpoint_path);
  LoadedModel lm;
  try {
    lm.vocab = Vocabulary::from_json(info.meta.at("vocab"));
    ModelSpec spec = ModelSpec::from_json(info.meta.at("spec"));
    lm.model = std::make_unique<Model>(spec, 0);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint '" + checkpoint_path + "' has no usable spec/vocab: " + e.what());
  }
  load_checkpoint(checkpoint_path, lm.model->parameters(), lm.model->architecture_hash());
  lm.meta = info.meta;
  return lm;
}

void cmd_synth(const RunConfig& cfg) {
  if (cfg.source != DataSource::kSynthetic) throw ConfigError("synth needs data.source = synthetic");
  ensure_output_dir(cfg);
  Corpus corpus = generate_synthetic_corpus(cfg.corpus_seed(), cfg.synthetic);
  save_corpus(cfg.synthetic_corpus_file(), corpus);
  log_info("wrote " + std::to_string(corpus.records.size()) + " synthetic records");
  if (cfg.fixed_embeddings.empty()) {
    FixedEmbeddingTable fixed = random_fixed_embeddings(corpus, cfg.fixed_dim, cfg.fixed_seed());
    fixed.save(cfg.synthetic_fixed_file());
    log_info("wrote fixed embeddings for " + std::to_string(fixed.size()) + " words");
  }
}

std::vector<EpochLog> cmd_train(const RunConfig& cfg) {
  ensure_output_dir(cfg);
  Corpus corpus = load_run_corpus(cfg);
  FixedEmbeddingTable fixed = load_run_fixed(cfg);
  Split split = split_records(cfg, corpus.records.size());
  if (split.train.empty()) throw ConfigError("no training records");

  Vocabulary vocab = vocabulary_from_corpus(leading_records(corpus, split.train.size()), cfg.min_freq);
  ModelSpec spec = cfg.model;
  spec.vocab = vocab.size();
  Dataset data = prepare_dataset(corpus, vocab, fixed, spec.length);
  Model model(spec, cfg.init_seed());
  log_info("model " + to_string(spec.kind) + " V=" + std::to_string(spec.vocab) + " params=" +
           std::to_string(model.parameters().parameter_count()) + " train_records=" +
           std::to_string(split.train.size()));

  std::ostringstream log_lines;
  std::vector<EpochLog> log = train_model(model, data, split.train, cfg.train, [&](const EpochLog& e) {
    log_lines << e.to_json().dump() << "\n";
    log_info("epoch " + std::to_string(e.epoch) + " alpha=" + format_fixed(e.alpha, 3) +
             " ce=" + format_fixed(e.ce, 4) + " kld=" + format_fixed(e.kld, 4));
  });
  write_text_file(cfg.train_log_file(), log_lines.str());

  CheckpointInfo info;
  info.arch_hash = model.architecture_hash();
  info.seed = cfg.seed;
  info.meta = {{"spec", spec.to_json()},
               {"vocab", vocab.to_json()},
               {"train", cfg.train.to_json()},
               {"train_records", split.train.size()},
               {"epochs_run", log.size()}};
  save_checkpoint(cfg.checkpoint_file(), model.parameters(), info);
  log_info("saved checkpoint");
  return log;
}

EvalReport cmd_eval(const RunConfig& cfg) {
  ensure_output_dir(cfg);
  EvalInputs in = prepare_eval(cfg);
  EvalOutput out = evaluate(*in.loaded.model, in.data, in.split.eval, in.loaded.vocab, in.fixed, cfg.eval);
  out.report.seed = cfg.seed;
  const std::string stem = cfg.report_stem();
  write_text_file((fs::path(cfg.output_dir) / (stem + ".json")).string(), out.report.to_json().dump(2) + "\n");
  write_text_file((fs::path(cfg.output_dir) / (stem + ".txt")).string(), out.report.to_text());
  write_text_file(cfg.transcript_file("transcripts-" + to_string(cfg.eval.mode) + "-" + to_string(cfg.eval.score)),
                  render_transcripts(out.transcripts));
  log_info("evaluated " + std::to_string(out.report.records) + " records (" + out.report.mode + ", " +
           out.report.score + ")");
  return out.report;
}

void cmd_generate(const RunConfig& cfg) {
  ensure_output_dir(cfg);
  RunConfig gen_cfg = cfg;
  gen_cfg.eval.score = ScoreMethod::kWord2Vec;
  EvalInputs in = prepare_eval(gen_cfg);
  EvalOutput out = evaluate(*in.loaded.model, in.data, in.split.eval, in.loaded.vocab, in.fixed, gen_cfg.eval);
  write_text_file(cfg.transcript_file("generated-" + to_string(cfg.eval.mode)), render_transcripts(out.transcripts));
  log_info("generated dialogues for " + std::to_string(out.transcripts.size()) + " images");
}

std::string cmd_report(const std::vector<std::string>& report_paths) {
  if (report_paths.empty()) throw InvalidArgument("report needs at least one report file");
  std::vector<EvalReport> reports;
  for (const std::string& p : report_paths) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open report '" + p + "'");
    try {
      reports.push_back(EvalReport::from_json(nlohmann::json::parse(in)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("report '" + p + "': " + e.what());
    }
  }
  return render_report_table(reports);
}

}  // namespace convdial
