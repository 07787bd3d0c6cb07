#include "convdial/text/vocabulary.hpp"

#include <algorithm>
#include <map>

#include "convdial/util/error.hpp"

namespace convdial {

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpus, std::size_t min_freq) {
  if (min_freq < 1) throw InvalidArgument("min_freq must be at least 1");
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& sentence : corpus) {
    for (const auto& tok : sentence) {
      if (tok == kPadToken || tok == kUnkToken) continue;
      ++counts[tok];
      ++total;
    }
  }
  if (total == 0) throw InvalidArgument("cannot build a vocabulary from an empty corpus");
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_freq) kept.emplace_back(tok, n);
  }
  // std::map iteration is alphabetical, so a stable sort on count keeps ties alphabetical.
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> ids{kPadToken, kUnkToken};
  for (auto& [tok, n] : kept) ids.push_back(tok);
  return from_tokens(std::move(ids));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> id_to_token) {
  if (id_to_token.size() < 2 || id_to_token[0] != kPadToken || id_to_token[1] != kUnkToken) {
    throw InvalidArgument("vocabulary must start with <pad> and <unk>");
  }
  Vocabulary v;
  for (std::size_t i = 0; i < id_to_token.size(); ++i) {
    if (!v.token_to_id_.emplace(id_to_token[i], static_cast<TokenId>(i)).second) {
      throw InvalidArgument("duplicate vocabulary entry " + id_to_token[i]);
    }
  }
  v.id_to_token_ = std::move(id_to_token);
  return v;
}

TokenId Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw InvalidArgument("token id " + std::to_string(id) + " outside vocabulary");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

TokenSequence Vocabulary::encode(const std::vector<std::string>& tokens, std::size_t length) const {
  TokenSequence out(length, kPadId);
  for (std::size_t i = 0; i < std::min(length, tokens.size()); ++i) out[i] = id(tokens[i]);
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  for (auto id : ids) {
    if (id != kPadId) out.push_back(token(id));
  }
  return out;
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) { return from_tokens(j.get<std::vector<std::string>>()); }

}  // namespace convdial
