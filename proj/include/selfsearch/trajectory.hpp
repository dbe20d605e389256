#pragma once

/**
 * Trajectory grammar for self-search rollouts.
 *
 * A rollout is flat tagged text:
 *
 *   <think>...</think> <search>...</search> <information>...</information>
 *   ... <answer>...</answer>
 *
 * parse() extracts every tag pair in document order, records byte spans, and
 * validates the structural rules that the format reward enforces (scoring
 * lives in reward.hpp). Parsing is total: malformed input never throws, it
 * yields well_formed=false plus one violation per broken rule.
 *
 * Extraction semantics are deliberately flat and regex-like, matching the
 * reward function they feed:
 *  - tag pairs of each kind are found independently, left to right, pairing
 *    each opener with the nearest closer of the same kind;
 *  - nested or interleaved tags are not reconstructed; when malformed nesting
 *    makes pairs overlap, the earliest-starting pair wins so that segments
 *    stay non-overlapping and ordered.
 *
 * Spans are byte offsets into the original (unstripped) source. char_span
 * covers the content between the tags; tag_span additionally covers the tag
 * markers themselves.
 */

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "selfsearch/common.hpp"

namespace selfsearch::trajectory {

enum class SegmentKind { Think, Search, Information, Answer };

inline std::string_view kind_name(SegmentKind k) {
  switch (k) {
    case SegmentKind::Think: return "think";
    case SegmentKind::Search: return "search";
    case SegmentKind::Information: return "information";
    case SegmentKind::Answer: return "answer";
  }
  return "?";
}

struct Segment {
  SegmentKind kind = SegmentKind::Think;
  std::string content;   // equals source sliced by char_span
  CharSpan char_span;    // content only, tag markers excluded
  CharSpan tag_span;     // includes opening and closing tag
};

enum class ViolationCode {
  DisallowedTag,
  BadStartOrEnd,
  TooFewTags,
  EmptyContent,
  MultilineSearch,
  PlaceholderContent,
  BadThinkPrefix,
  BadAnswerSuffix,
  UnpairedSearchInfo,
  SearchInfoCountMismatch,
  TooManyThinks,
};

inline std::string_view violation_name(ViolationCode c) {
  switch (c) {
    case ViolationCode::DisallowedTag: return "DisallowedTag";
    case ViolationCode::BadStartOrEnd: return "BadStartOrEnd";
    case ViolationCode::TooFewTags: return "TooFewTags";
    case ViolationCode::EmptyContent: return "EmptyContent";
    case ViolationCode::MultilineSearch: return "MultilineSearch";
    case ViolationCode::PlaceholderContent: return "PlaceholderContent";
    case ViolationCode::BadThinkPrefix: return "BadThinkPrefix";
    case ViolationCode::BadAnswerSuffix: return "BadAnswerSuffix";
    case ViolationCode::UnpairedSearchInfo: return "UnpairedSearchInfo";
    case ViolationCode::SearchInfoCountMismatch: return "SearchInfoCountMismatch";
    case ViolationCode::TooManyThinks: return "TooManyThinks";
  }
  return "?";
}

struct Violation {
  ViolationCode code;
  std::string detail;
};

struct Trajectory {
  std::string source;
  std::vector<Segment> segments;
  bool well_formed = false;
  std::vector<Violation> violations;

  bool has_violation(ViolationCode c) const {
    for (const auto& v : violations) {
      if (v.code == c) return true;
    }
    return false;
  }
};

// Structural constants of the grammar.
inline constexpr std::size_t kMinTagCount = 4;
inline constexpr std::size_t kThinkUpperBound = 8;

namespace detail {

inline constexpr std::array<std::string_view, 4> kOpenTags = {
    "<think>", "<search>", "<information>", "<answer>"};
inline constexpr std::array<std::string_view, 4> kCloseTags = {
    "</think>", "</search>", "</information>", "</answer>"};
inline constexpr std::array<std::string_view, 4> kPlaceholders = {
    "your thoughts", "your query", "your information", "your answer"};

inline constexpr std::array<std::string_view, 8> kAllowedTagNames = {
    "think", "search", "information", "answer",
    "/think", "/search", "/information", "/answer"};

// One of the eight recognized tag tokens, in document order.
struct TagToken {
  SegmentKind kind;
  bool closing;
  CharSpan span;
};

struct RawTag {
  std::string name;  // text between '<' and '>'
  CharSpan span;
};

/// Every <...> group in the text: for each '<', the nearest following '>',
/// with at least one byte in between. Scanning resumes after a match, or at
/// the next character after a failed "<>" candidate.
inline std::vector<RawTag> scan_raw_tags(std::string_view s) {
  std::vector<RawTag> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t lt = s.find('<', pos);
    if (lt == std::string_view::npos) break;
    std::size_t gt = s.find('>', lt + 1);
    if (gt == std::string_view::npos) break;
    if (gt == lt + 1) {
      pos = lt + 1;
      continue;
    }
    out.push_back({std::string(s.substr(lt + 1, gt - lt - 1)), {lt, gt + 1}});
    pos = gt + 1;
  }
  return out;
}

/// The eight recognized tag literals in document order.
inline std::vector<TagToken> scan_known_tags(std::string_view s) {
  std::vector<TagToken> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t lt = s.find('<', pos);
    if (lt == std::string_view::npos) break;
    bool matched = false;
    for (std::size_t k = 0; k < 4 && !matched; ++k) {
      const auto open = kOpenTags[k];
      const auto close = kCloseTags[k];
      if (s.compare(lt, open.size(), open) == 0) {
        out.push_back({static_cast<SegmentKind>(k), false, {lt, lt + open.size()}});
        pos = lt + open.size();
        matched = true;
      } else if (s.compare(lt, close.size(), close) == 0) {
        out.push_back({static_cast<SegmentKind>(k), true, {lt, lt + close.size()}});
        pos = lt + close.size();
        matched = true;
      }
    }
    if (!matched) pos = lt + 1;
  }
  return out;
}

struct TagPair {
  CharSpan tag_span;
  CharSpan char_span;
};

/// Non-greedy pairing for one tag kind: each opener pairs with the nearest
/// closer after it, and scanning resumes past the closer.
inline std::vector<TagPair> scan_pairs(std::string_view s, std::string_view open,
                                       std::string_view close) {
  std::vector<TagPair> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t o = s.find(open, pos);
    if (o == std::string_view::npos) break;
    std::size_t content_begin = o + open.size();
    std::size_t c = s.find(close, content_begin);
    if (c == std::string_view::npos) break;
    out.push_back({{o, c + close.size()}, {content_begin, c}});
    pos = c + close.size();
  }
  return out;
}

}  // namespace detail

/// Parse raw generated text into tagged segments plus structural diagnostics.
/// Total and deterministic; never throws on malformed input.
inline Trajectory parse(std::string_view source) {
  Trajectory t;
  t.source = std::string(source);
  const std::string_view src = t.source;
  const std::string_view stripped = text::strip(src);

  // Per-kind tag pairs. These also drive the content checks below, which run
  // on the full per-kind lists before any overlap resolution.
  std::array<std::vector<detail::TagPair>, 4> pairs;
  for (std::size_t k = 0; k < 4; ++k) {
    pairs[k] = detail::scan_pairs(src, detail::kOpenTags[k], detail::kCloseTags[k]);
  }

  // Merge pairs into document-ordered, non-overlapping segments.
  struct Cand {
    SegmentKind kind;
    detail::TagPair pair;
  };
  std::vector<Cand> cands;
  for (std::size_t k = 0; k < 4; ++k) {
    for (const auto& p : pairs[k]) cands.push_back({static_cast<SegmentKind>(k), p});
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    return a.pair.tag_span.begin < b.pair.tag_span.begin;
  });
  std::size_t last_end = 0;
  for (const auto& c : cands) {
    if (!t.segments.empty() && c.pair.tag_span.begin < last_end) continue;
    Segment seg;
    seg.kind = c.kind;
    seg.char_span = c.pair.char_span;
    seg.tag_span = c.pair.tag_span;
    seg.content = std::string(src.substr(seg.char_span.begin, seg.char_span.size()));
    t.segments.push_back(std::move(seg));
    last_end = c.pair.tag_span.end;
  }

  auto flag = [&](ViolationCode code, std::string detail_text) {
    t.violations.push_back({code, std::move(detail_text)});
  };

  // Unknown tags anywhere.
  for (const auto& raw : detail::scan_raw_tags(src)) {
    bool ok = false;
    for (auto allowed : detail::kAllowedTagNames) {
      if (raw.name == allowed) {
        ok = true;
        break;
      }
    }
    if (!ok) flag(ViolationCode::DisallowedTag, "<" + raw.name + ">");
  }

  if (!(stripped.starts_with("<think>") && stripped.ends_with("</answer>"))) {
    flag(ViolationCode::BadStartOrEnd, "must start <think> and end </answer>");
  }

  const auto tags = detail::scan_known_tags(src);
  if (tags.size() < kMinTagCount) {
    flag(ViolationCode::TooFewTags, "found " + std::to_string(tags.size()) + " tags");
  }

  // Content rules, per kind in think/search/information/answer order.
  for (std::size_t k = 0; k < 4; ++k) {
    const auto kind = static_cast<SegmentKind>(k);
    for (const auto& p : pairs[k]) {
      const std::string_view content = src.substr(p.char_span.begin, p.char_span.size());
      if (text::strip(content).empty()) {
        flag(ViolationCode::EmptyContent, std::string(kind_name(kind)));
        continue;
      }
      if (kind == SegmentKind::Search && content.find('\n') != std::string_view::npos) {
        flag(ViolationCode::MultilineSearch, std::string(content));
      }
      if (text::contains(text::to_lower(content), detail::kPlaceholders[k])) {
        flag(ViolationCode::PlaceholderContent,
             std::string(kind_name(kind)) + ": " + std::string(detail::kPlaceholders[k]));
      }
    }
  }

  // Order rules need at least the leading think pair and trailing answer pair.
  if (tags.size() >= kMinTagCount) {
    const bool think_first = tags[0].kind == SegmentKind::Think && !tags[0].closing &&
                             tags[1].kind == SegmentKind::Think && tags[1].closing;
    if (!think_first) flag(ViolationCode::BadThinkPrefix, "first pair must be <think>");
    const std::size_t n = tags.size();
    const bool answer_last = tags[n - 2].kind == SegmentKind::Answer && !tags[n - 2].closing &&
                             tags[n - 1].kind == SegmentKind::Answer && tags[n - 1].closing;
    if (!answer_last) flag(ViolationCode::BadAnswerSuffix, "last pair must be <answer>");

    // Between those, every <search> must be immediately followed by its
    // </search><information></information> triple. The scan runs over the
    // middle region tags[2, n-2).
    for (std::size_t i = 2; i < n - 2;) {
      const auto& tok = tags[i];
      if (tok.kind == SegmentKind::Search && !tok.closing) {
        const bool paired =
            i + 3 < n - 2 &&
            tags[i + 1].kind == SegmentKind::Search && tags[i + 1].closing &&
            tags[i + 2].kind == SegmentKind::Information && !tags[i + 2].closing &&
            tags[i + 3].kind == SegmentKind::Information && tags[i + 3].closing;
        if (!paired) {
          flag(ViolationCode::UnpairedSearchInfo, "search not followed by information");
          break;
        }
        i += 4;
      } else {
        ++i;
      }
    }
  }

  const std::size_t think_n = text::count_occurrences(src, "<think>");
  const std::size_t search_n = text::count_occurrences(src, "<search>");
  const std::size_t info_n = text::count_occurrences(src, "<information>");
  if (search_n != info_n) {
    flag(ViolationCode::SearchInfoCountMismatch,
         std::to_string(search_n) + " search vs " + std::to_string(info_n) + " information");
  }
  if (think_n > kThinkUpperBound) {
    flag(ViolationCode::TooManyThinks, std::to_string(think_n) + " think blocks");
  }

  t.well_formed = t.violations.empty();
  return t;
}

/// Content of the last answer block, stripped. Reflection transcripts carry
/// several answer blocks; the final one reflects the post-reflection decision.
inline std::optional<std::string> extract_answer(const Trajectory& t) {
  for (auto it = t.segments.rbegin(); it != t.segments.rend(); ++it) {
    if (it->kind == SegmentKind::Answer) {
      return std::string(text::strip(it->content));
    }
  }
  return std::nullopt;
}

/// Content spans of every information block, in document order.
inline std::vector<CharSpan> information_spans(const Trajectory& t) {
  std::vector<CharSpan> out;
  for (const auto& s : t.segments) {
    if (s.kind == SegmentKind::Information) out.push_back(s.char_span);
  }
  return out;
}

/// Number of answer blocks; >1 flags multi-answer trajectories in diagnostics.
inline std::size_t answer_count(const Trajectory& t) {
  std::size_t n = 0;
  for (const auto& s : t.segments) {
    if (s.kind == SegmentKind::Answer) ++n;
  }
  return n;
}

}  // namespace selfsearch::trajectory
