#include "convdial/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "convdial/text/preprocess.hpp"
#include "convdial/util/error.hpp"

namespace convdial {

namespace {

const std::vector<std::string> kRowWords{"top", "middle", "bottom"};
const std::vector<std::string> kColWords{"left", "center", "right"};

enum class QuestionType {
  kCount,
  kColorOf,
  kWhere,
  kExists,
  kSizeOf,
  kShapeOf,
  kColorAt,
  kShapeAt,
  kSizeAt,
  kExistsColor,
  kExistsShape
};

const std::vector<std::pair<std::string, QuestionType>>& type_table() {
  static const std::vector<std::pair<std::string, QuestionType>> t{
      {"count", QuestionType::kCount},          {"color_of", QuestionType::kColorOf},
      {"where", QuestionType::kWhere},          {"exists", QuestionType::kExists},
      {"size_of", QuestionType::kSizeOf},       {"shape_of", QuestionType::kShapeOf},
      {"color_at", QuestionType::kColorAt},     {"shape_at", QuestionType::kShapeAt},
      {"size_at", QuestionType::kSizeAt},       {"exists_color", QuestionType::kExistsColor},
      {"exists_shape", QuestionType::kExistsShape}};
  return t;
}

QuestionType parse_type(const std::string& name) {
  for (const auto& [n, t] : type_table()) {
    if (n == name) return t;
  }
  throw ConfigError("unknown synthetic question type '" + name + "'");
}

std::size_t position_of(const std::vector<std::string>& pool, const std::string& word) {
  auto it = std::find(pool.begin(), pool.end(), word);
  if (it == pool.end()) throw InvalidArgument("unknown word '" + word + "'");
  return static_cast<std::size_t>(it - pool.begin());
}

const SceneObject* find_by(const Scene& scene, const std::string& shape, const std::string& color) {
  for (const auto& o : scene.objects) {
    if ((shape.empty() || o.shape == shape) && (color.empty() || o.color == color)) return &o;
  }
  return nullptr;
}

const SceneObject& require(const SceneObject* o, const std::string& what) {
  if (!o) throw InvalidArgument("scene has no " + what);
  return *o;
}

// Every answer the grammar can produce for one question type.
std::vector<std::string> answer_pool(QuestionType type) {
  std::vector<std::string> out;
  switch (type) {
    case QuestionType::kColorOf:
    case QuestionType::kColorAt:
      for (const auto& c : synthetic_colors()) out.push_back("it is " + c);
      break;
    case QuestionType::kWhere:
      for (const auto& r : kRowWords) {
        for (const auto& c : kColWords) out.push_back(r + " " + c);
      }
      break;
    case QuestionType::kCount:
      for (std::size_t n = 1; n <= synthetic_shapes().size(); ++n) out.push_back("there are " + std::to_string(n));
      break;
    case QuestionType::kExists:
    case QuestionType::kExistsColor:
    case QuestionType::kExistsShape:
      out = {"yes", "no"};
      break;
    case QuestionType::kSizeOf:
    case QuestionType::kSizeAt:
      for (const auto& s : synthetic_sizes()) out.push_back("it is " + s);
      break;
    case QuestionType::kShapeOf:
    case QuestionType::kShapeAt:
      for (const auto& s : synthetic_shapes()) out.push_back("a " + s);
      break;
  }
  return out;
}

// Distinct answers across all question types.
std::vector<std::string> all_answers() {
  std::vector<std::string> all;
  std::set<std::string> seen;
  for (const auto& entry : type_table()) {
    for (auto& a : answer_pool(entry.second)) {
      if (seen.insert(a).second) all.push_back(a);
    }
  }
  return all;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ull;
  return h;
}

std::string make_question(QuestionType type, const Scene& scene, Rng& rng) {
  const SceneObject& o = scene.objects[rng.index(scene.objects.size())];
  const std::string at = kRowWords[o.row] + " " + kColWords[o.col];
  const auto& colors = synthetic_colors();
  const auto& shapes = synthetic_shapes();
  switch (type) {
    case QuestionType::kCount:
      return "How many objects are there?";
    case QuestionType::kColorOf:
      return "What color is the " + o.shape + "?";
    case QuestionType::kWhere:
      return "Where is the " + o.shape + "?";
    case QuestionType::kExists:
      // Half the time about an object in the scene, otherwise a random pair.
      if (rng.index(2) == 0) return "Is there a " + o.color + " " + o.shape + "?";
      return "Is there a " + colors[rng.index(colors.size())] + " " + shapes[rng.index(shapes.size())] + "?";
    case QuestionType::kSizeOf:
      return "How big is the " + o.shape + "?";
    case QuestionType::kShapeOf:
      return "What is the " + o.color + " object?";
    case QuestionType::kColorAt:
      return "What color is the " + at + " object?";
    case QuestionType::kShapeAt:
      return "What shape is the " + at + " object?";
    case QuestionType::kSizeAt:
      return "How big is the " + at + " object?";
    case QuestionType::kExistsColor:
      if (rng.index(2) == 0) return "Is there a " + o.color + " object?";
      return "Is there a " + colors[rng.index(colors.size())] + " object?";
    case QuestionType::kExistsShape:
      if (rng.index(2) == 0) return "Is there a " + o.shape + "?";
      return "Is there a " + shapes[rng.index(shapes.size())] + "?";
  }
  return {};
}

std::vector<std::string> make_candidates(const std::string& truth, QuestionType type, std::size_t count,
                                         Rng& rng, std::size_t& gt_index) {
  std::vector<std::string> picked{truth};
  std::set<std::string> used{truth};
  auto take = [&](std::vector<std::string> pool, std::size_t limit) {
    rng.shuffle(pool);
    for (const auto& a : pool) {
      if (picked.size() >= count || limit == 0) return;
      if (used.insert(a).second) {
        picked.push_back(a);
        --limit;
      }
    }
  };
  // similar (same question type), popular, then random answers
  take(answer_pool(type), 4);
  take({"yes", "no"}, 2);
  take(all_answers(), count);
  rng.shuffle(picked);
  gt_index = static_cast<std::size_t>(std::find(picked.begin(), picked.end(), truth) - picked.begin());
  return picked;
}

}  // namespace

const std::vector<std::string>& synthetic_shapes() {
  static const std::vector<std::string> v{"circle", "square", "triangle", "star", "heart", "cross"};
  return v;
}

const std::vector<std::string>& synthetic_colors() {
  static const std::vector<std::string> v{"red", "green", "blue", "yellow", "purple", "orange", "white", "black"};
  return v;
}

const std::vector<std::string>& synthetic_sizes() {
  static const std::vector<std::string> v{"small", "large"};
  return v;
}

std::vector<std::string> synthetic_question_types() {
  std::vector<std::string> out;
  for (const auto& entry : type_table()) out.push_back(entry.first);
  return out;
}

std::size_t synthetic_slot_count() {
  return synthetic_shapes().size() + synthetic_colors().size() + synthetic_sizes().size();
}

void SyntheticConfig::validate() const {
  if (records == 0 || turns == 0) throw ConfigError("synthetic corpus needs records and turns");
  if (spatial < kGridSize) throw ConfigError("synthetic features need spatial >= 3");
  if (feature_dim < synthetic_slot_count() * spatial * spatial) {
    throw ConfigError("synthetic features need feature_dim >= " +
                      std::to_string(synthetic_slot_count() * spatial * spatial));
  }
  if (min_objects < 1 || min_objects > max_objects || max_objects > synthetic_shapes().size()) {
    throw ConfigError("synthetic object count range is invalid");
  }
  if (candidates < 1 || candidates > all_answers().size()) {
    throw ConfigError("synthetic candidates must be in 1.." + std::to_string(all_answers().size()));
  }
  if (question_types.empty()) throw ConfigError("synthetic corpus needs at least one question type");
  for (const auto& q : question_types) parse_type(q);
}

Scene random_scene(Rng& rng, const SyntheticConfig& cfg) {
  const std::size_t count = cfg.min_objects + rng.index(cfg.max_objects - cfg.min_objects + 1);
  std::vector<std::size_t> shapes(synthetic_shapes().size()), colors(synthetic_colors().size()),
      cells(kGridSize * kGridSize);
  for (std::size_t i = 0; i < shapes.size(); ++i) shapes[i] = i;
  for (std::size_t i = 0; i < colors.size(); ++i) colors[i] = i;
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = i;
  rng.shuffle(shapes);
  rng.shuffle(colors);
  rng.shuffle(cells);
  std::vector<std::size_t> order(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(order.begin(), order.end());
  Scene scene;
  for (std::size_t i = 0; i < count; ++i) {
    SceneObject o;
    o.shape = synthetic_shapes()[shapes[i]];
    o.color = synthetic_colors()[colors[i]];
    o.size = synthetic_sizes()[rng.index(2)];
    o.row = order[i] / kGridSize;
    o.col = order[i] % kGridSize;
    scene.objects.push_back(o);
  }
  return scene;
}

std::vector<double> render_features(const Scene& scene, std::size_t feature_dim, std::size_t spatial) {
  const std::size_t plane = spatial * spatial;
  if (feature_dim < synthetic_slot_count() * plane) throw ShapeError("feature_dim too small for the scene layout");
  std::vector<double> f(feature_dim, 0.0);
  const std::size_t n_shapes = synthetic_shapes().size(), n_colors = synthetic_colors().size();
  for (const auto& o : scene.objects) {
    if (o.row >= kGridSize || o.col >= kGridSize) throw InvalidArgument("object outside the grid");
    const std::size_t cell = o.row * spatial + o.col;
    f[position_of(synthetic_shapes(), o.shape) * plane + cell] = 1.0;
    f[(n_shapes + position_of(synthetic_colors(), o.color)) * plane + cell] = 1.0;
    f[(n_shapes + n_colors + position_of(synthetic_sizes(), o.size)) * plane + cell] = 1.0;
  }
  double norm = 0.0;
  for (double v : f) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (auto& v : f) v /= norm;
  }
  return f;
}

Scene decode_scene(const std::vector<double>& features, std::size_t spatial) {
  const std::size_t plane = spatial * spatial;
  const std::size_t n_shapes = synthetic_shapes().size(), n_colors = synthetic_colors().size();
  if (features.size() < synthetic_slot_count() * plane) throw ShapeError("feature vector too small to decode");
  auto strongest = [&](std::size_t first, std::size_t count, std::size_t cell) -> std::ptrdiff_t {
    std::ptrdiff_t best = -1;
    double best_v = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
      const double v = features[(first + k) * plane + cell];
      if (v > best_v) {
        best_v = v;
        best = static_cast<std::ptrdiff_t>(k);
      }
    }
    return best;
  };
  Scene scene;
  for (std::size_t r = 0; r < kGridSize; ++r) {
    for (std::size_t c = 0; c < kGridSize; ++c) {
      const std::size_t cell = r * spatial + c;
      const auto shape = strongest(0, n_shapes, cell);
      if (shape < 0) continue;
      const auto color = strongest(n_shapes, n_colors, cell);
      const auto size = strongest(n_shapes + n_colors, synthetic_sizes().size(), cell);
      if (color < 0 || size < 0) throw InvalidArgument("feature cell has a shape but no colour or size");
      scene.objects.push_back({synthetic_shapes()[static_cast<std::size_t>(shape)],
                               synthetic_colors()[static_cast<std::size_t>(color)],
                               synthetic_sizes()[static_cast<std::size_t>(size)], r, c});
    }
  }
  return scene;
}

std::string describe_scene(const Scene& scene) {
  std::string out = "there is ";
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    if (i > 0) out += i + 1 == scene.objects.size() ? " and " : ", ";
    out += "a " + o.size + " " + o.color + " " + o.shape;
  }
  return out;
}

std::string answer_question(const Scene& scene, const std::string& question) {
  const auto w = preprocess_sentence(question);
  auto is = [&](std::initializer_list<const char*> prefix) {
    if (w.size() < prefix.size()) return false;
    std::size_t i = 0;
    for (const char* p : prefix) {
      if (w[i++] != p) return false;
    }
    return true;
  };
  auto at = [&](std::size_t i) -> const SceneObject& {
    for (const auto& o : scene.objects) {
      if (kRowWords[o.row] == w[i] && kColWords[o.col] == w[i + 1]) return o;
    }
    throw InvalidArgument("scene has no object at the " + w[i] + " " + w[i + 1]);
  };
  if (w.size() == 7 && w[6] == "object") {
    if (is({"what", "color", "is", "the"})) return "it is " + at(4).color;
    if (is({"what", "shape", "is", "the"})) return "a " + at(4).shape;
    if (is({"how", "big", "is", "the"})) return "it is " + at(4).size;
  }
  if (w.size() == 5 && is({"what", "color", "is", "the"})) {
    return "it is " + require(find_by(scene, w[4], ""), w[4]).color;
  }
  if (w.size() == 4 && is({"where", "is", "the"})) {
    const auto& o = require(find_by(scene, w[3], ""), w[3]);
    return kRowWords[o.row] + " " + kColWords[o.col];
  }
  if (w == std::vector<std::string>{"how", "many", "objects", "are", "there"}) {
    return "there are " + std::to_string(scene.objects.size());
  }
  if (w.size() == 5 && is({"is", "there", "a"})) {
    if (w[4] == "object") return find_by(scene, "", w[3]) ? "yes" : "no";
    return find_by(scene, w[4], w[3]) ? "yes" : "no";
  }
  if (w.size() == 4 && is({"is", "there", "a"})) return find_by(scene, w[3], "") ? "yes" : "no";
  if (w.size() == 5 && is({"how", "big", "is", "the"})) {
    return "it is " + require(find_by(scene, w[4], ""), w[4]).size;
  }
  if (w.size() == 5 && is({"what", "is", "the"}) && w[4] == "object") {
    return "a " + require(find_by(scene, "", w[3]), w[3] + " object").shape;
  }
  throw InvalidArgument("question outside the synthetic grammar: '" + question + "'");
}

Corpus generate_synthetic_corpus(std::uint64_t seed, const SyntheticConfig& cfg) {
  cfg.validate();
  Corpus corpus;
  corpus.header = {kCorpusVersion, cfg.turns, cfg.candidates, cfg.feature_dim};
  std::vector<QuestionType> types;
  for (const auto& q : cfg.question_types) types.push_back(parse_type(q));
  for (std::size_t i = 0; i < cfg.records; ++i) {
    Rng rng(Rng::derive(seed, i));
    CorpusRecord r;
    r.image_id = "synth-" + std::to_string(seed) + "-" + std::to_string(i);
    Scene scene = random_scene(rng, cfg);
    r.features = render_features(scene, cfg.feature_dim, cfg.spatial);
    r.caption = describe_scene(scene);
    for (std::size_t t = 0; t < cfg.turns; ++t) {
      const auto type = types[rng.index(types.size())];
      DialogueTurn turn;
      turn.question = make_question(type, scene, rng);
      turn.answer = answer_question(scene, turn.question);
      turn.options = make_candidates(turn.answer, type, cfg.candidates, rng, turn.gt_index);
      r.dialog.push_back(std::move(turn));
    }
    r.scene = std::move(scene);
    corpus.records.push_back(std::move(r));
  }
  return corpus;
}

FixedEmbeddingTable random_fixed_embeddings(const Corpus& corpus, std::size_t dim, std::uint64_t seed) {
  std::set<std::string> words;
  auto add = [&](const std::string& text) {
    for (auto& tok : preprocess_sentence(text)) words.insert(tok);
  };
  for (const auto& r : corpus.records) {
    add(r.caption);
    for (const auto& t : r.dialog) {
      add(t.question);
      add(t.answer);
      for (const auto& o : t.options) add(o);
    }
  }
  // Each word's vector depends only on the word, so tables built from
  // different corpora agree on shared words.
  std::vector<std::string> tokens(words.begin(), words.end());
  std::vector<std::vector<double>> vectors;
  for (const auto& w : tokens) {
    Rng rng(Rng::derive(seed, fnv1a(w)));
    vectors.push_back(rng.normal_vector(dim));
  }
  return FixedEmbeddingTable(std::move(tokens), std::move(vectors));
}

}  // namespace convdial
