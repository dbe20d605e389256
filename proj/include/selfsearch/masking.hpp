#pragma once

/**
 * Token-level loss masks over trajectories.
 *
 * information_mask() zeroes every token whose span intersects the content of
 * an information block, so copied or retrieved text receives no gradient on
 * the trainer side. Tag-marker tokens stay in the loss: "embraced by" the
 * tags is read as strictly between them. Intersection (not containment)
 * decides boundary-straddling tokens, erring toward excluding copied text.
 *
 * TokenSpanMap bridges tokenizer output to byte spans; when no real map is
 * available, whitespace_token_map() gives an approximate stand-in.
 */

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "selfsearch/common.hpp"
#include "selfsearch/trajectory.hpp"

namespace selfsearch::masking {

struct TokenSpan {
  std::size_t token_index = 0;
  CharSpan span;
};

struct TokenSpanMap {
  std::vector<TokenSpan> tokens;  // spans sorted and non-overlapping; gaps allowed

  std::size_t size() const { return tokens.size(); }
};

struct LossMask {
  std::vector<bool> keep;  // true = token contributes to loss

  std::size_t masked_count() const {
    std::size_t n = 0;
    for (bool k : keep) {
      if (!k) ++n;
    }
    return n;
  }
};

/// Validate map invariants against a source string.
inline void validate_map(const TokenSpanMap& map, std::string_view source) {
  std::size_t prev_end = 0;
  bool first = true;
  for (const auto& tok : map.tokens) {
    if (tok.span.end < tok.span.begin) {
      throw std::invalid_argument("token span map: inverted span");
    }
    if (tok.span.end > source.size()) {
      throw std::invalid_argument("token span map: span exceeds source length");
    }
    if (!first && tok.span.begin < prev_end) {
      throw std::invalid_argument("token span map: spans overlap or are unsorted");
    }
    prev_end = tok.span.end;
    first = false;
  }
}

/// keep=false for every token intersecting any information content span.
inline LossMask information_mask(const trajectory::Trajectory& t, const TokenSpanMap& map) {
  validate_map(map, t.source);
  const auto info = trajectory::information_spans(t);
  LossMask mask;
  mask.keep.assign(map.tokens.size(), true);
  for (std::size_t i = 0; i < map.tokens.size(); ++i) {
    for (const auto& span : info) {
      if (spans_intersect(map.tokens[i].span, span)) {
        mask.keep[i] = false;
        break;
      }
    }
  }
  return mask;
}

/// JSON array of 0/1 aligned to token indices, for trainer consumption.
inline std::string mask_to_json(const LossMask& mask) {
  std::string out = "[";
  for (std::size_t i = 0; i < mask.keep.size(); ++i) {
    if (i) out.push_back(',');
    out.push_back(mask.keep[i] ? '1' : '0');
  }
  out.push_back(']');
  return out;
}

/// Approximate map: one token per whitespace-delimited run.
inline TokenSpanMap whitespace_token_map(std::string_view source) {
  TokenSpanMap map;
  const auto spans = text::whitespace_token_spans(source);
  map.tokens.reserve(spans.size());
  for (std::size_t i = 0; i < spans.size(); ++i) {
    map.tokens.push_back({i, spans[i]});
  }
  return map;
}

}  // namespace selfsearch::masking
