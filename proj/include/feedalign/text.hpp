#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace feedalign {

inline std::string to_lower(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (unsigned char c : s) out.push_back(static_cast<char>(std::tolower(c)));
  return out;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Word tokenizer used by ROUGE-L, the oracle judge and token-level embedding
// metrics: lowercase, punctuation stripped, whitespace split.
inline std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (std::isspace(c)) {
      if (!current.empty()) {
        tokens.push_back(current);
        current.clear();
      }
    }
    // other punctuation is dropped without breaking the token
  }
  if (!current.empty()) tokens.push_back(current);
  return tokens;
}

// True when the token sequence of `phrase` occurs contiguously in the token
// sequence of `text`. Matching is token-exact, so "try" does not fire on
// "country".
inline bool contains_token_phrase(std::string_view text, std::string_view phrase) {
  const std::vector<std::string> t = tokenize_words(text);
  const std::vector<std::string> p = tokenize_words(phrase);
  if (p.empty() || p.size() > t.size()) return false;
  for (std::size_t i = 0; i + p.size() <= t.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (t[i + j] != p[j]) {
        match = false;
        break;
      }
    }
    if (match) return true;
  }
  return false;
}

// Case-insensitive substring search. Returns npos when absent.
inline std::size_t find_ci(std::string_view haystack, std::string_view needle,
                           std::size_t from = 0) {
  if (needle.empty()) return from <= haystack.size() ? from : std::string_view::npos;
  if (haystack.size() < needle.size()) return std::string_view::npos;
  for (std::size_t i = from; i + needle.size() <= haystack.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < needle.size(); ++j) {
      if (std::tolower(static_cast<unsigned char>(haystack[i + j])) !=
          std::tolower(static_cast<unsigned char>(needle[j]))) {
        match = false;
        break;
      }
    }
    if (match) return i;
  }
  return std::string_view::npos;
}

}  // namespace feedalign
