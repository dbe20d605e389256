#pragma once

/**
 * Rule-based rewards over parsed trajectories.
 *
 * Three layers:
 *  - format_score: fractional grammar score in [0,1]. Any structural
 *    violation scores 0; otherwise min(think_count/max_turn, 1) scaled by the
 *    think/search balance ratio, with full credit exactly when
 *    think_count == search_count + 1 and 2 <= think_count <= 8.
 *  - is_equivalent / outcome_reward: answer correctness under exact-match or
 *    bidirectional-substring normalization (+1 / -1).
 *  - composite_reward: the four-case combination of correctness and a
 *    boolean format gate with weight lambda_f (default 0.1), yielding
 *    {1, 1-lambda_f, lambda_f, 0}.
 *
 * Answer normalization follows the usual open-domain QA convention:
 * lowercase, strip ASCII punctuation, drop English articles, collapse
 * whitespace. Case folding is ASCII-only.
 */

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "selfsearch/common.hpp"
#include "selfsearch/trajectory.hpp"

namespace selfsearch::reward {

enum class MatchMode { ExactMatch, SubstringMatch };

struct FormatParams {
  // Frozen grammar constants, surfaced for experimentation only.
  int max_turn = 2;
  std::size_t think_upper_bound = 8;
};

/// How the composite reward consumes the fractional format score.
enum class FormatCredit {
  Binary,      // format_ok = (format_score == 1.0), four-case table
  Fractional,  // interpolate the table corners by the raw score
};

struct RewardBreakdown {
  double format_score = 0.0;
  bool format_ok = false;
  bool correct = false;
  double composite = 0.0;
  double lambda_f = 0.1;
};

namespace detail {

/// Structure is acceptable for scoring when the only possible violation left
/// is the think-count bound, which the caller applies with its own params.
inline bool structurally_valid(const trajectory::Trajectory& t) {
  for (const auto& v : t.violations) {
    if (v.code != trajectory::ViolationCode::TooManyThinks) return false;
  }
  return true;
}

}  // namespace detail

/// Fractional grammar score of an already-parsed trajectory.
inline double format_score(const trajectory::Trajectory& t, const FormatParams& params = {}) {
  if (!detail::structurally_valid(t)) return 0.0;
  const std::size_t think_n = text::count_occurrences(t.source, "<think>");
  const std::size_t search_n = text::count_occurrences(t.source, "<search>");
  if (think_n > params.think_upper_bound) return 0.0;
  const double score = 1.0 / params.max_turn * static_cast<double>(think_n);
  double ratio = 1.0;
  if (think_n != search_n + 1) {
    const double lo = static_cast<double>(std::min(think_n, search_n + 1));
    const double hi = static_cast<double>(std::max(think_n, search_n + 1));
    ratio = lo / hi;
  }
  return std::min(score, 1.0) * ratio;
}

inline double format_score(std::string_view source, const FormatParams& params = {}) {
  return format_score(trajectory::parse(source), params);
}

/// Open-domain QA answer normalization: lowercase, remove ASCII punctuation,
/// drop a/an/the, collapse whitespace. Idempotent.
inline std::string normalize_answer(std::string_view s) {
  std::string cleaned;
  cleaned.reserve(s.size());
  for (char c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    const bool punct = (c >= '!' && c <= '/') || (c >= ':' && c <= '@') ||
                       (c >= '[' && c <= '`') || (c >= '{' && c <= '~');
    if (!punct) cleaned.push_back(c);
  }
  std::string out;
  out.reserve(cleaned.size());
  std::size_t i = 0;
  while (i < cleaned.size()) {
    while (i < cleaned.size() && text::is_space(cleaned[i])) ++i;
    if (i >= cleaned.size()) break;
    std::size_t b = i;
    while (i < cleaned.size() && !text::is_space(cleaned[i])) ++i;
    std::string_view tok(cleaned.data() + b, i - b);
    if (tok == "a" || tok == "an" || tok == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out.append(tok);
  }
  return out;
}

/// Prediction matches any gold answer under the given mode. Substring match
/// is bidirectional (prediction in gold or gold in prediction) and requires
/// both sides non-empty after normalization.
inline bool is_equivalent(std::string_view prediction, const std::vector<std::string>& golds,
                          MatchMode mode) {
  if (golds.empty()) {
    throw std::invalid_argument("is_equivalent: golds must be non-empty");
  }
  const std::string pred = normalize_answer(prediction);
  for (const auto& g : golds) {
    const std::string gold = normalize_answer(g);
    if (mode == MatchMode::ExactMatch) {
      if (pred == gold) return true;
    } else {
      if (pred.empty() || gold.empty()) continue;
      if (text::contains(gold, pred) || text::contains(pred, gold)) return true;
    }
  }
  return false;
}

/// +1 for an equivalent prediction, -1 otherwise.
inline double outcome_reward(std::string_view prediction, const std::vector<std::string>& golds,
                             MatchMode mode) {
  return is_equivalent(prediction, golds, mode) ? 1.0 : -1.0;
}

struct CompositeOptions {
  MatchMode mode = MatchMode::ExactMatch;
  double lambda_f = 0.1;
  FormatCredit credit = FormatCredit::Binary;
  FormatParams format;
};

/// Score a raw response against gold answers. A trajectory with no answer
/// block counts as incorrect, never as an error, so batch scoring does not
/// abort on malformed rollouts.
inline RewardBreakdown composite_reward(std::string_view source,
                                        const std::vector<std::string>& golds,
                                        const CompositeOptions& opts = {}) {
  if (golds.empty()) {
    throw std::invalid_argument("composite_reward: golds must be non-empty");
  }
  if (!(opts.lambda_f >= 0.0 && opts.lambda_f <= 0.5)) {
    throw std::invalid_argument("composite_reward: lambda_f must lie in [0, 0.5]");
  }
  const auto t = trajectory::parse(source);
  RewardBreakdown out;
  out.lambda_f = opts.lambda_f;
  out.format_score = format_score(t, opts.format);
  out.format_ok = out.format_score == 1.0;
  const auto answer = trajectory::extract_answer(t);
  out.correct = answer.has_value() && is_equivalent(*answer, golds, opts.mode);

  if (opts.credit == FormatCredit::Binary) {
    if (out.correct) {
      out.composite = out.format_ok ? 1.0 : 1.0 - opts.lambda_f;
    } else {
      out.composite = out.format_ok ? opts.lambda_f : 0.0;
    }
  } else {
    // Interpolates the four corners by the fractional score.
    out.composite = out.correct ? 1.0 - opts.lambda_f * (1.0 - out.format_score)
                                : opts.lambda_f * out.format_score;
  }
  return out;
}

inline RewardBreakdown composite_reward(std::string_view source,
                                        const std::vector<std::string>& golds, MatchMode mode,
                                        double lambda_f = 0.1) {
  CompositeOptions opts;
  opts.mode = mode;
  opts.lambda_f = lambda_f;
  return composite_reward(source, golds, opts);
}

}  // namespace selfsearch::reward
