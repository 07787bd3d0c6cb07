#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace convdial {

/// Lower-cases, drops apostrophes, strips punctuation, splits on whitespace and
/// spells out all-digit tokens ("2" -> "two", "42" -> "forty two"; above 100
/// digit by digit). Bytes >= 0x80 are kept as word characters.
std::vector<std::string> preprocess_sentence(std::string_view raw);

/// "0".."100" in words; larger values digit by digit.
std::vector<std::string> number_to_words(std::string_view digits);

std::string join_tokens(const std::vector<std::string>& tokens);

}  // namespace convdial
