#pragma once

#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pathforge::text {

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Bytes >= 0x80 count as word characters so UTF-8 sequences stay intact.
inline bool is_word_char(char c) {
  auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) != 0;
}

inline char to_lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

/// Trim and collapse internal whitespace runs to one space.
inline std::string collapse_space(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : s) {
    if (is_space(c)) {
      pending = !out.empty();
    } else {
      if (pending) out.push_back(' ');
      pending = false;
      out.push_back(c);
    }
  }
  return out;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = to_lower(c);
  return out;
}

/// Lowercase, trimmed, whitespace-collapsed form used for name matching.
inline std::string normalize_name(std::string_view s) { return lower(collapse_space(s)); }

/// Lowercase, punctuation replaced by spaces, whitespace collapsed.
inline std::string normalize_answer(std::string_view s) {
  std::string tmp;
  tmp.reserve(s.size());
  for (char c : s) tmp.push_back(is_word_char(c) ? to_lower(c) : ' ');
  return collapse_space(tmp);
}

/// Token-boundary containment of `needle` inside `haystack` after answer
/// normalization. An empty needle never matches.
inline bool contains_normalized(std::string_view haystack, std::string_view needle) {
  auto n = normalize_answer(needle);
  if (n.empty()) return false;
  auto h = " " + normalize_answer(haystack) + " ";
  return h.find(" " + n + " ") != std::string::npos;
}

/// Lowercase word tokens; punctuation and whitespace separate tokens.
inline std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (is_word_char(c)) {
      cur.push_back(to_lower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

inline bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (to_lower(s[i]) != to_lower(prefix[i])) return false;
  return true;
}

/// Drops a leading "Label:" (case-insensitive) if present, then trims.
inline std::string strip_label(std::string_view s, std::string_view label) {
  auto t = trim(s);
  if (starts_with_ci(t, label)) return trim(std::string_view(t).substr(label.size()));
  return t;
}

}  // namespace pathforge::text
