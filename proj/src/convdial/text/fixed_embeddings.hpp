#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace convdial {

/// Read-only token -> vector table standing in for pretrained word vectors.
///
/// File format: a header line "V E", then V lines "token v1 ... vE",
/// whitespace-separated. Tokens missing from the table map to the mean vector.
class FixedEmbeddingTable {
 public:
  FixedEmbeddingTable() = default;
  FixedEmbeddingTable(std::vector<std::string> tokens, std::vector<std::vector<double>> vectors);

  static FixedEmbeddingTable load(const std::string& path);
  void save(const std::string& path) const;

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  std::span<const double> lookup(const std::string& token) const;
  std::span<const double> mean_vector() const { return mean_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> tokens_;
  std::vector<std::vector<double>> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> mean_;
};

/// Mean of the tokens' fixed vectors, skipping <pad> and <unk>. A sentence with
/// nothing left embeds to the zero vector.
std::vector<double> sentence_embedding_avg(const std::vector<std::string>& tokens, const FixedEmbeddingTable& table);

/// u.v / (|u||v|); 0 when either norm is 0. Throws on dimension mismatch.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

}  // namespace convdial
