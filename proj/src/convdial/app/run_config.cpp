#include "convdial/app/run_config.hpp"

#include <filesystem>
#include <fstream>

#include "convdial/util/error.hpp"
#include "convdial/util/rng.hpp"

namespace convdial {

namespace fs = std::filesystem;

namespace {

std::string resolve(const std::string& base_dir, const std::string& p) {
  if (p.empty()) return p;
  fs::path path(p);
  if (path.is_absolute() || base_dir.empty()) return path.lexically_normal().string();
  return (fs::path(base_dir) / path).lexically_normal().string();
}

void require_file(const std::string& what, const std::string& path) {
  if (path.empty()) throw ConfigError(what + " path is missing");
  if (!fs::is_regular_file(path)) throw ConfigError(what + " '" + path + "' does not exist");
}

nlohmann::json without_seed(const nlohmann::json& section, const char* name) {
  if (section.is_object() && section.contains("seed")) {
    throw ConfigError(std::string(name) + ".seed is not allowed; the top-level seed drives every stream");
  }
  return section;
}

const char* source_name(DataSource s) {
  switch (s) {
    case DataSource::kSynthetic:
      return "synthetic";
    case DataSource::kCorpus:
      return "corpus";
    case DataSource::kVisdial:
      return "visdial";
  }
  return "?";
}

}  // namespace

nlohmann::json synthetic_config_to_json(const SyntheticConfig& c) {
  return {{"records", c.records},         {"turns", c.turns},         {"candidates", c.candidates},
          {"feature_dim", c.feature_dim}, {"spatial", c.spatial},     {"min_objects", c.min_objects},
          {"max_objects", c.max_objects}, {"question_types", c.question_types}};
}

SyntheticConfig synthetic_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("data.synthetic must be an object");
  SyntheticConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "records") c.records = value.get<std::size_t>();
      else if (key == "turns") c.turns = value.get<std::size_t>();
      else if (key == "candidates") c.candidates = value.get<std::size_t>();
      else if (key == "feature_dim") c.feature_dim = value.get<std::size_t>();
      else if (key == "spatial") c.spatial = value.get<std::size_t>();
      else if (key == "min_objects") c.min_objects = value.get<std::size_t>();
      else if (key == "max_objects") c.max_objects = value.get<std::size_t>();
      else if (key == "question_types") c.question_types = value.get<std::vector<std::string>>();
      else throw ConfigError("unknown data.synthetic key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("data.synthetic: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config '" + path + "': " + e.what());
  }
  return from_json(j, fs::path(path).parent_path().string());
}

RunConfig RunConfig::from_json(const nlohmann::json& j, const std::string& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (j.value("format", std::string()) != kRunConfigFormat) {
    throw ConfigError(std::string("config format must be '") + kRunConfigFormat + "'");
  }
  if (j.value("version", 0) != kRunConfigVersion) {
    throw ConfigError("unsupported config version (expected " + std::to_string(kRunConfigVersion) + ")");
  }
  RunConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "format" || key == "version") continue;
      if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "output_dir") c.output_dir = resolve(base_dir, value.get<std::string>());
      else if (key == "data") {
        for (const auto& [dk, dv] : value.items()) {
          if (dk == "source") {
            const std::string s = dv.get<std::string>();
            if (s == "synthetic") c.source = DataSource::kSynthetic;
            else if (s == "corpus") c.source = DataSource::kCorpus;
            else if (s == "visdial") c.source = DataSource::kVisdial;
            else throw ConfigError("data.source must be synthetic, corpus or visdial");
          } else if (dk == "synthetic") c.synthetic = synthetic_config_from_json(dv);
          else if (dk == "corpus") c.corpus_path = resolve(base_dir, dv.get<std::string>());
          else if (dk == "visdial_json") c.visdial_json = resolve(base_dir, dv.get<std::string>());
          else if (dk == "visdial_features") c.visdial_features = resolve(base_dir, dv.get<std::string>());
          else if (dk == "fixed_embeddings") c.fixed_embeddings = resolve(base_dir, dv.get<std::string>());
          else if (dk == "fixed_dim") c.fixed_dim = dv.get<std::size_t>();
          else if (dk == "min_freq") c.min_freq = dv.get<std::size_t>();
          else if (dk == "train_records") c.train_records = dv.get<std::size_t>();
          else if (dk == "eval_records") c.eval_records = dv.get<std::size_t>();
          else throw ConfigError("unknown data key '" + dk + "'");
        }
      } else if (key == "model") {
        if (value.contains("V")) throw ConfigError("model.V is set from the vocabulary and may not be given");
        c.model = ModelSpec::from_json(value);
      } else if (key == "train") c.train = TrainConfig::from_json(without_seed(value, "train"));
      else if (key == "eval") c.eval = EvalConfig::from_json(without_seed(value, "eval"));
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.set_seed(c.seed);
  c.validate();
  return c;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json data = {{"source", source_name(source)}, {"fixed_dim", fixed_dim},       {"min_freq", min_freq},
                         {"train_records", train_records}, {"eval_records", eval_records}};
  if (source == DataSource::kSynthetic) data["synthetic"] = synthetic_config_to_json(synthetic);
  if (!corpus_path.empty()) data["corpus"] = corpus_path;
  if (!visdial_json.empty()) data["visdial_json"] = visdial_json;
  if (!visdial_features.empty()) data["visdial_features"] = visdial_features;
  if (!fixed_embeddings.empty()) data["fixed_embeddings"] = fixed_embeddings;
  nlohmann::json model_json = model.to_json();
  model_json.erase("V");
  nlohmann::json train_json = train.to_json();
  train_json.erase("seed");
  nlohmann::json eval_json = eval.to_json();
  eval_json.erase("seed");
  return {{"format", kRunConfigFormat}, {"version", kRunConfigVersion}, {"seed", seed}, {"output_dir", output_dir},
          {"data", data}, {"model", model_json}, {"train", train_json}, {"eval", eval_json}};
}

void RunConfig::validate() const {
  if (output_dir.empty()) throw ConfigError("output_dir is required");
  if (fixed_dim == 0) throw ConfigError("data.fixed_dim must be positive");
  if (min_freq == 0) throw ConfigError("data.min_freq must be at least 1");
  switch (source) {
    case DataSource::kSynthetic:
      synthetic.validate();
      if (train_records + eval_records > synthetic.records) {
        throw ConfigError("train_records + eval_records exceeds the synthetic corpus size");
      }
      break;
    case DataSource::kCorpus:
      require_file("data.corpus", corpus_path);
      break;
    case DataSource::kVisdial:
      require_file("data.visdial_json", visdial_json);
      if (!visdial_features.empty()) require_file("data.visdial_features", visdial_features);
      if (fixed_embeddings.empty()) throw ConfigError("visdial data needs data.fixed_embeddings");
      break;
  }
  if (source == DataSource::kCorpus && fixed_embeddings.empty()) {
    throw ConfigError("corpus data needs data.fixed_embeddings");
  }
  if (!fixed_embeddings.empty()) require_file("data.fixed_embeddings", fixed_embeddings);
  train.validate();
  eval.validate();
}

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  train.seed = train_seed();
  eval.seed = eval_seed();
}

std::uint64_t RunConfig::corpus_seed() const { return Rng::derive(seed, 100); }
std::uint64_t RunConfig::fixed_seed() const { return Rng::derive(seed, 101); }
std::uint64_t RunConfig::init_seed() const { return Rng::derive(seed, 102); }
std::uint64_t RunConfig::train_seed() const { return Rng::derive(seed, 103); }
std::uint64_t RunConfig::eval_seed() const { return Rng::derive(seed, 104); }

std::string RunConfig::synthetic_corpus_file() const { return (fs::path(output_dir) / "corpus.jsonl").string(); }
std::string RunConfig::synthetic_fixed_file() const {
  return (fs::path(output_dir) / "fixed_embeddings.txt").string();
}
std::string RunConfig::checkpoint_file() const { return (fs::path(output_dir) / "model.ckpt").string(); }
std::string RunConfig::train_log_file() const { return (fs::path(output_dir) / "train_log.jsonl").string(); }
std::string RunConfig::report_stem() const {
  return "report-" + to_string(eval.mode) + "-" + to_string(eval.score);
}
std::string RunConfig::transcript_file(const std::string& stem) const {
  return (fs::path(output_dir) / (stem + ".txt")).string();
}

std::string RunConfig::corpus_file() const {
  return source == DataSource::kSynthetic ? synthetic_corpus_file() : corpus_path;
}
std::string RunConfig::fixed_file() const {
  if (!fixed_embeddings.empty()) return fixed_embeddings;
  return synthetic_fixed_file();
}

}  // namespace convdial
