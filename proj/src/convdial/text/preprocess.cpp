#include "convdial/text/preprocess.hpp"

#include <array>
#include <cctype>

namespace convdial {

namespace {

constexpr std::array<const char*, 20> kOnes = {
    "zero",    "one",     "two",       "three",    "four",     "five",    "six",
    "seven",   "eight",   "nine",      "ten",      "eleven",   "twelve",  "thirteen",
    "fourteen", "fifteen", "sixteen",  "seventeen", "eighteen", "nineteen"};
constexpr std::array<const char*, 10> kTens = {"",      "",      "twenty",  "thirty", "forty",
                                               "fifty", "sixty", "seventy", "eighty", "ninety"};

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

}  // namespace

std::vector<std::string> number_to_words(std::string_view digits) {
  std::size_t first = digits.find_first_not_of('0');
  std::string_view significant = first == std::string_view::npos ? std::string_view("0") : digits.substr(first);
  if (significant.size() <= 3) {
    const int value = std::stoi(std::string(significant));
    if (value < 20) return {kOnes[value]};
    if (value < 100) {
      if (value % 10 == 0) return {kTens[value / 10]};
      return {kTens[value / 10], kOnes[value % 10]};
    }
    if (value == 100) return {"one", "hundred"};
  }
  std::vector<std::string> out;
  for (char c : digits) out.emplace_back(kOnes[c - '0']);
  return out;
}

std::vector<std::string> preprocess_sentence(std::string_view raw) {
  std::string cleaned;
  cleaned.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto c = static_cast<unsigned char>(raw[i]);
    if (c == '\'' || c == '`') continue;
    // U+2018 / U+2019 curly apostrophes.
    if (c == 0xE2 && i + 2 < raw.size() && static_cast<unsigned char>(raw[i + 1]) == 0x80 &&
        (static_cast<unsigned char>(raw[i + 2]) == 0x98 || static_cast<unsigned char>(raw[i + 2]) == 0x99)) {
      i += 2;
      continue;
    }
    if (c >= 0x80 || std::isalnum(c)) {
      cleaned.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    } else {
      cleaned.push_back(' ');
    }
  }
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos < cleaned.size()) {
    while (pos < cleaned.size() && cleaned[pos] == ' ') ++pos;
    std::size_t end = pos;
    while (end < cleaned.size() && cleaned[end] != ' ') ++end;
    if (end > pos) {
      std::string_view tok(cleaned.data() + pos, end - pos);
      if (all_digits(tok)) {
        for (auto& w : number_to_words(tok)) tokens.push_back(std::move(w));
      } else {
        tokens.emplace_back(tok);
      }
    }
    pos = end;
  }
  return tokens;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace convdial
