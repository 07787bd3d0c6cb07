#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace convdial {

using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kUnkToken = "<unk>";

/// Padded or truncated id sequence; model-facing sequences always have length L.
using TokenSequence = std::vector<TokenId>;

class Vocabulary {
 public:
  /// Keeps tokens seen at least `min_freq` times. Ids after the two reserved
  /// ones are assigned by descending frequency, ties alphabetically.
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus, std::size_t min_freq);
  static Vocabulary from_tokens(std::vector<std::string> id_to_token);

  std::size_t size() const { return id_to_token_.size(); }
  TokenId id(const std::string& token) const;
  const std::string& token(TokenId id) const;
  bool contains(const std::string& token) const { return token_to_id_.count(token) != 0; }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  TokenSequence encode(const std::vector<std::string>& tokens, std::size_t length) const;
  /// Token strings with PAD positions dropped (UNK kept as "<unk>").
  std::vector<std::string> decode(std::span<const TokenId> ids) const;

  nlohmann::json to_json() const { return id_to_token_; }
  static Vocabulary from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
};

}  // namespace convdial
