#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace convdial {

struct SceneObject {
  std::string shape;
  std::string color;
  std::string size;
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const SceneObject&) const = default;
};

struct Scene {
  std::vector<SceneObject> objects;
  bool operator==(const Scene&) const = default;
};

struct DialogueTurn {
  std::string question;
  std::string answer;
  std::vector<std::string> options;  // candidate answers; may be empty on ingest
  std::size_t gt_index = 0;
  bool operator==(const DialogueTurn&) const = default;
};

struct CorpusRecord {
  std::string image_id;
  std::vector<double> features;
  std::string caption;
  std::vector<DialogueTurn> dialog;
  std::optional<Scene> scene;
  bool operator==(const CorpusRecord&) const = default;
};

struct CorpusHeader {
  int version = 1;
  std::size_t turns = 0;
  std::size_t candidates = 0;
  std::size_t feature_dim = 0;
  bool operator==(const CorpusHeader&) const = default;
};

struct Corpus {
  CorpusHeader header;
  std::vector<CorpusRecord> records;
  bool operator==(const Corpus&) const = default;
};

inline constexpr const char* kCorpusFormat = "convdial-corpus";
inline constexpr int kCorpusVersion = 1;

/// Throws ParseError naming the record if it violates the header.
void validate_record(const CorpusRecord& record, const CorpusHeader& header, const std::string& where);

/// JSON-lines corpus: one header object, then one record per line. With
/// `sidecar` set, features go to `<path>.features` and records carry a row index.
void save_corpus(const std::string& path, const Corpus& corpus, bool sidecar = false);
Corpus load_corpus(const std::string& path);

/// Loads the public visual-dialogue JSON layout ({"data": {"questions",
/// "answers", "dialogs"}}). Features come from an optional sidecar whose row i
/// belongs to dialog i.
Corpus load_visdial(const std::string& json_path, const std::string& features_path = "");

/// Sidecar: u64 count, u64 dim, then count*dim little-endian float64, row-major.
void write_feature_sidecar(const std::string& path, const std::vector<std::vector<double>>& rows);
std::vector<std::vector<double>> read_feature_sidecar(const std::string& path);

nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);

}  // namespace convdial
