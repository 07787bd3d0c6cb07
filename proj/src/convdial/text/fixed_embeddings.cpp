#include "convdial/text/fixed_embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "convdial/text/vocabulary.hpp"
#include "convdial/util/error.hpp"
#include "convdial/util/format.hpp"

namespace convdial {

FixedEmbeddingTable::FixedEmbeddingTable(std::vector<std::string> tokens, std::vector<std::vector<double>> vectors) {
  if (tokens.size() != vectors.size()) throw InvalidArgument("embedding table: token/vector count mismatch");
  if (tokens.empty()) throw InvalidArgument("embedding table is empty");
  dim_ = vectors.front().size();
  if (dim_ == 0) throw InvalidArgument("embedding table: zero dimension");
  mean_.assign(dim_, 0.0);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (vectors[i].size() != dim_) {
      throw InvalidArgument("embedding for '" + tokens[i] + "' has dimension " + std::to_string(vectors[i].size()) +
                            ", expected " + std::to_string(dim_));
    }
    if (!index_.emplace(tokens[i], i).second) throw InvalidArgument("duplicate embedding token " + tokens[i]);
    for (std::size_t d = 0; d < dim_; ++d) mean_[d] += vectors[i][d];
  }
  for (auto& m : mean_) m /= static_cast<double>(tokens.size());
  tokens_ = std::move(tokens);
  vectors_ = std::move(vectors);
}

FixedEmbeddingTable FixedEmbeddingTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file " + path);
  std::string line;
  std::size_t count = 0, dim = 0;
  if (!std::getline(in, line)) throw ParseError(path + ":1: missing header");
  {
    std::istringstream hs(line);
    if (!(hs >> count >> dim) || dim == 0) throw ParseError(path + ":1: header must be 'V E'");
  }
  std::vector<std::string> tokens;
  std::vector<std::vector<double>> vectors;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok, field;
    ls >> tok;
    std::vector<double> vec;
    while (ls >> field) {
      try {
        vec.push_back(parse_double(field));
      } catch (const ParseError&) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": bad value '" + field + "'");
      }
    }
    if (vec.size() != dim) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim) + " values, got " +
                       std::to_string(vec.size()));
    }
    tokens.push_back(tok);
    vectors.push_back(std::move(vec));
  }
  if (tokens.size() != count) {
    throw ParseError(path + ": header declares " + std::to_string(count) + " tokens, file has " +
                     std::to_string(tokens.size()));
  }
  return FixedEmbeddingTable(std::move(tokens), std::move(vectors));
}

void FixedEmbeddingTable::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write embedding file " + path);
  out << tokens_.size() << ' ' << dim_ << '\n';
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out << tokens_[i];
    for (double v : vectors_[i]) out << ' ' << format_double(v);
    out << '\n';
  }
}

std::span<const double> FixedEmbeddingTable::lookup(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? std::span<const double>(mean_) : std::span<const double>(vectors_[it->second]);
}

std::vector<double> sentence_embedding_avg(const std::vector<std::string>& tokens, const FixedEmbeddingTable& table) {
  std::vector<double> out(table.dim(), 0.0);
  std::size_t used = 0;
  for (const auto& tok : tokens) {
    if (tok == kPadToken || tok == kUnkToken) continue;
    auto v = table.lookup(tok);
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += v[d];
    ++used;
  }
  if (used > 0) {
    for (auto& x : out) x /= static_cast<double>(used);
  }
  return out;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ShapeError("cosine_similarity: dimension " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(nu * nv), -1.0, 1.0);
}

}  // namespace convdial
