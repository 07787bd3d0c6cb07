#include "convdial/data/corpus.hpp"

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "convdial/util/bytes.hpp"
#include "convdial/util/error.hpp"

namespace convdial {

using nlohmann::json;

namespace {

std::string sidecar_path(const std::string& corpus_path) { return corpus_path + ".features"; }

json turn_to_json(const DialogueTurn& t) {
  json j = {{"question", t.question}, {"answer", t.answer}};
  if (!t.options.empty()) {
    j["answer_options"] = t.options;
    j["gt_index"] = t.gt_index;
  }
  return j;
}

DialogueTurn turn_from_json(const json& j) {
  DialogueTurn t;
  t.question = j.at("question").get<std::string>();
  t.answer = j.at("answer").get<std::string>();
  if (j.contains("answer_options")) {
    t.options = j.at("answer_options").get<std::vector<std::string>>();
    t.gt_index = j.at("gt_index").get<std::size_t>();
  }
  return t;
}

}  // namespace

json scene_to_json(const Scene& scene) {
  json objs = json::array();
  for (const auto& o : scene.objects) {
    objs.push_back({{"shape", o.shape}, {"color", o.color}, {"size", o.size}, {"row", o.row}, {"col", o.col}});
  }
  return {{"objects", objs}};
}

Scene scene_from_json(const json& j) {
  Scene s;
  for (const auto& o : j.at("objects")) {
    s.objects.push_back({o.at("shape").get<std::string>(), o.at("color").get<std::string>(),
                         o.at("size").get<std::string>(), o.at("row").get<std::size_t>(),
                         o.at("col").get<std::size_t>()});
  }
  return s;
}

void validate_record(const CorpusRecord& record, const CorpusHeader& header, const std::string& where) {
  const std::string who = where + ": record '" + record.image_id + "'";
  if (record.dialog.size() != header.turns) {
    throw ParseError(who + " has " + std::to_string(record.dialog.size()) + " dialogue turns, expected T=" +
                     std::to_string(header.turns));
  }
  if (record.features.size() != header.feature_dim) {
    throw ParseError(who + " has feature dimension " + std::to_string(record.features.size()) + ", expected " +
                     std::to_string(header.feature_dim));
  }
  for (double v : record.features) {
    if (!std::isfinite(v)) throw ParseError(who + " has a non-finite feature value");
  }
  for (std::size_t t = 0; t < record.dialog.size(); ++t) {
    const auto& turn = record.dialog[t];
    if (turn.options.empty()) continue;
    if (header.candidates != 0 && turn.options.size() != header.candidates) {
      throw ParseError(who + " turn " + std::to_string(t + 1) + " has " + std::to_string(turn.options.size()) +
                       " candidates, expected C=" + std::to_string(header.candidates));
    }
    if (turn.gt_index >= turn.options.size()) {
      throw ParseError(who + " turn " + std::to_string(t + 1) + " has gt_index out of range");
    }
  }
}

void write_feature_sidecar(const std::string& path, const std::vector<std::vector<double>>& rows) {
  const std::size_t dim = rows.empty() ? 0 : rows.front().size();
  std::string out;
  out.reserve(16 + rows.size() * dim * 8);
  put_u64(out, rows.size());
  put_u64(out, dim);
  for (const auto& r : rows) {
    if (r.size() != dim) throw ShapeError("feature sidecar rows differ in dimension");
    for (double v : r) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write feature file " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::vector<std::vector<double>> read_feature_sidecar(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open feature file " + path);
  std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (raw.size() < 16) throw ParseError(path + ": truncated feature header");
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
  const std::uint64_t count = get_u64(p), dim = get_u64(p + 8);
  if (dim != 0 && count > (raw.size() - 16) / 8 / dim) throw ParseError(path + ": feature file shorter than header");
  if (raw.size() != 16 + count * dim * 8) {
    throw ParseError(path + ": expected " + std::to_string(count) + "x" + std::to_string(dim) +
                     " float64 values, file size disagrees");
  }
  std::vector<std::vector<double>> rows(count, std::vector<double>(dim));
  std::size_t off = 16;
  for (auto& r : rows) {
    for (auto& v : r) {
      v = std::bit_cast<double>(get_u64(p + off));
      off += 8;
    }
  }
  return rows;
}

void save_corpus(const std::string& path, const Corpus& corpus, bool sidecar) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write corpus " + path);
  json header = {{"format", kCorpusFormat},
                 {"version", corpus.header.version},
                 {"turns", corpus.header.turns},
                 {"candidates", corpus.header.candidates},
                 {"feature_dim", corpus.header.feature_dim}};
  if (sidecar) header["features_file"] = std::filesystem::path(sidecar_path(path)).filename().string();
  out << header.dump() << '\n';
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& r = corpus.records[i];
    json j;
    j["image_id"] = r.image_id;
    j["caption"] = r.caption;
    json dialog = json::array();
    for (const auto& t : r.dialog) dialog.push_back(turn_to_json(t));
    j["dialog"] = dialog;
    if (sidecar) {
      j["feature_row"] = i;
      rows.push_back(r.features);
    } else {
      j["features"] = r.features;
    }
    if (r.scene) j["scene"] = scene_to_json(*r.scene);
    out << j.dump() << '\n';
  }
  if (sidecar) write_feature_sidecar(sidecar_path(path), rows);
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus " + path);
  std::string line;
  std::size_t line_no = 0;
  Corpus corpus;
  std::vector<std::vector<double>> rows;
  bool has_sidecar = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": malformed JSON (" + e.what() + ")");
    }
    if (line_no == 1) {
      try {
        if (j.at("format").get<std::string>() != kCorpusFormat) throw ParseError(where + ": not a corpus file");
        corpus.header.version = j.at("version").get<int>();
        if (corpus.header.version != kCorpusVersion) {
          throw ParseError(where + ": unsupported corpus version " + std::to_string(corpus.header.version));
        }
        corpus.header.turns = j.at("turns").get<std::size_t>();
        corpus.header.candidates = j.value("candidates", std::size_t{0});
        corpus.header.feature_dim = j.at("feature_dim").get<std::size_t>();
        if (j.contains("features_file") && !j["features_file"].is_null()) {
          auto side = std::filesystem::path(path).parent_path() / j["features_file"].get<std::string>();
          rows = read_feature_sidecar(side.string());
          has_sidecar = true;
        }
      } catch (const json::exception& e) {
        throw ParseError(where + ": bad corpus header (" + e.what() + ")");
      }
      continue;
    }
    CorpusRecord r;
    try {
      r.image_id = j.at("image_id").is_string() ? j["image_id"].get<std::string>() : j["image_id"].dump();
      r.caption = j.at("caption").get<std::string>();
      for (const auto& t : j.at("dialog")) r.dialog.push_back(turn_from_json(t));
      if (j.contains("features")) {
        r.features = j["features"].get<std::vector<double>>();
      } else if (has_sidecar) {
        const auto row = j.at("feature_row").get<std::size_t>();
        if (row >= rows.size()) throw ParseError(where + ": feature_row " + std::to_string(row) + " out of range");
        r.features = rows[row];
      } else {
        throw ParseError(where + ": record has neither inline features nor a features file");
      }
      if (j.contains("scene")) r.scene = scene_from_json(j["scene"]);
    } catch (const json::exception& e) {
      throw ParseError(where + ": malformed record (" + e.what() + ")");
    }
    validate_record(r, corpus.header, where);
    corpus.records.push_back(std::move(r));
  }
  if (line_no == 0) throw ParseError(path + ": empty corpus file");
  return corpus;
}

Corpus load_visdial(const std::string& json_path, const std::string& features_path) {
  std::ifstream in(json_path);
  if (!in) throw IoError("cannot open " + json_path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(json_path + ": malformed JSON (" + e.what() + ")");
  }
  Corpus corpus;
  std::vector<std::vector<double>> rows;
  if (!features_path.empty()) rows = read_feature_sidecar(features_path);
  try {
    const json& data = doc.at("data");
    const auto questions = data.at("questions").get<std::vector<std::string>>();
    const auto answers = data.at("answers").get<std::vector<std::string>>();
    const json& dialogs = data.at("dialogs");
    if (!rows.empty() && rows.size() != dialogs.size()) {
      throw ParseError(features_path + ": " + std::to_string(rows.size()) + " feature rows for " +
                       std::to_string(dialogs.size()) + " dialogs");
    }
    auto pick = [](const std::vector<std::string>& pool, std::size_t idx, const std::string& what) {
      if (idx >= pool.size()) throw ParseError(what + " index " + std::to_string(idx) + " out of range");
      return pool[idx];
    };
    for (std::size_t i = 0; i < dialogs.size(); ++i) {
      const json& d = dialogs[i];
      CorpusRecord r;
      r.image_id = d.at("image_id").is_string() ? d["image_id"].get<std::string>() : d["image_id"].dump();
      r.caption = d.at("caption").get<std::string>();
      for (const auto& t : d.at("dialog")) {
        DialogueTurn turn;
        turn.question = pick(questions, t.at("question").get<std::size_t>(), "question");
        turn.answer = pick(answers, t.at("answer").get<std::size_t>(), "answer");
        if (t.contains("answer_options")) {
          for (const auto& o : t["answer_options"]) turn.options.push_back(pick(answers, o.get<std::size_t>(), "answer"));
          turn.gt_index = t.at("gt_index").get<std::size_t>();
        }
        r.dialog.push_back(std::move(turn));
      }
      if (!rows.empty()) r.features = rows[i];
      if (i == 0) {
        corpus.header.turns = r.dialog.size();
        corpus.header.feature_dim = r.features.size();
        corpus.header.candidates = r.dialog.empty() ? 0 : r.dialog.front().options.size();
      }
      validate_record(r, corpus.header, json_path + ": dialog " + std::to_string(i));
      corpus.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw ParseError(json_path + ": not in the expected dialog layout (" + e.what() + ")");
  }
  return corpus;
}

}  // namespace convdial
