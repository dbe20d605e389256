#pragma once

// Shared basics: byte spans and the small string helpers the rest of the
// library leans on. All offsets everywhere in this project are byte offsets
// into UTF-8 text, and all spans are half-open [begin, end).

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace selfsearch {

struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  bool operator==(const CharSpan&) const = default;
};

/// True when two half-open spans share at least one byte.
inline bool spans_intersect(const CharSpan& a, const CharSpan& b) {
  return a.begin < b.end && b.begin < a.end;
}

namespace text {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

/// View of `s` with leading and trailing ASCII whitespace removed.
inline std::string_view strip(std::string_view s) {
  std::size_t b = 0;
  while (b < s.size() && is_space(s[b])) ++b;
  std::size_t e = s.size();
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

inline bool contains(std::string_view haystack, std::string_view needle) {
  return haystack.find(needle) != std::string_view::npos;
}

/// Non-overlapping occurrence count, scanning left to right.
inline std::size_t count_occurrences(std::string_view s, std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t n = 0;
  std::size_t pos = 0;
  while ((pos = s.find(needle, pos)) != std::string_view::npos) {
    ++n;
    pos += needle.size();
  }
  return n;
}

/// Whitespace-delimited tokens with their byte spans.
inline std::vector<CharSpan> whitespace_token_spans(std::string_view s) {
  std::vector<CharSpan> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    if (i >= s.size()) break;
    std::size_t b = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    out.push_back({b, i});
  }
  return out;
}

inline std::size_t whitespace_token_count(std::string_view s) {
  std::size_t n = 0;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    if (i >= s.size()) break;
    ++n;
    while (i < s.size() && !is_space(s[i])) ++i;
  }
  return n;
}

}  // namespace text

namespace rng {

/// splitmix64 mixer; used to derive independent per-item seeds from one base
/// seed so parallel work is order-independent.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(base ^ splitmix64(index + 1));
}

}  // namespace rng
}  // namespace selfsearch
