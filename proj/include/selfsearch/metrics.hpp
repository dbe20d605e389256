#pragma once

/**
 * Sampling metrics: pass@k, maj@k, token-budget coverage curves, and the
 * per-trajectory token accounting they consume.
 *
 * pass@k uses the unbiased estimator
 *
 *   pass@k = 1 - C(K - C, k) / C(K, k)
 *
 * evaluated in product form for numerical stability. maj@k is exact at
 * k == K; for k < K it enumerates subsets when feasible and otherwise falls
 * back to seeded Monte-Carlo over uniform k-subsets. Mode ties break toward
 * the earliest sample index.
 */

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "selfsearch/common.hpp"
#include "selfsearch/masking.hpp"
#include "selfsearch/reward.hpp"
#include "selfsearch/trajectory.hpp"

namespace selfsearch::metrics {

struct TokenUsage {
  std::uint64_t total_tokens = 0;
  std::uint64_t thinking_tokens = 0;
  std::uint64_t search_tokens = 0;
  std::uint64_t information_tokens = 0;
  std::uint64_t answer_tokens = 0;
  bool approximate = false;  // true when derived from the whitespace fallback
};

struct SampleOutcome {
  std::optional<std::string> answer;
  bool correct = false;
  TokenUsage usage;
};

struct SampleResult {
  std::string question_id;
  std::vector<std::string> golds;
  std::size_t n_samples = 0;  // K
  std::size_t n_correct = 0;  // C
  std::vector<SampleOutcome> per_sample;  // optional detail; counts must agree when present

  static SampleResult from_samples(std::string question_id, std::vector<std::string> golds,
                                   std::vector<SampleOutcome> samples) {
    SampleResult r;
    r.question_id = std::move(question_id);
    r.golds = std::move(golds);
    r.per_sample = std::move(samples);
    r.n_samples = r.per_sample.size();
    for (const auto& s : r.per_sample) {
      if (s.correct) ++r.n_correct;
    }
    return r;
  }
};

/// Token accounting under the thinking-token counting rule: tokens inside
/// search/information/answer blocks (tags included) are attributed to those
/// blocks; everything else counts as thinking, so
/// thinking = total - (search + information + answer).
inline TokenUsage token_usage(const trajectory::Trajectory& t, const masking::TokenSpanMap& map) {
  masking::validate_map(map, t.source);
  TokenUsage u;
  u.total_tokens = map.tokens.size();
  for (const auto& tok : map.tokens) {
    bool assigned = false;
    for (const auto& seg : t.segments) {
      if (seg.kind == trajectory::SegmentKind::Think) continue;
      if (spans_intersect(tok.span, seg.tag_span)) {
        switch (seg.kind) {
          case trajectory::SegmentKind::Search: ++u.search_tokens; break;
          case trajectory::SegmentKind::Information: ++u.information_tokens; break;
          case trajectory::SegmentKind::Answer: ++u.answer_tokens; break;
          default: break;
        }
        assigned = true;
        break;
      }
    }
    if (!assigned) ++u.thinking_tokens;
  }
  return u;
}

/// Whitespace-token fallback, flagged approximate.
inline TokenUsage token_usage(const trajectory::Trajectory& t) {
  TokenUsage u = token_usage(t, masking::whitespace_token_map(t.source));
  u.approximate = true;
  return u;
}

/// Unbiased per-problem pass@k from K samples with C correct.
inline double pass_at_k(std::size_t n_samples, std::size_t n_correct, std::size_t k) {
  if (k < 1 || k > n_samples) {
    throw std::invalid_argument("pass_at_k: k must satisfy 1 <= k <= n_samples");
  }
  if (n_correct > n_samples) {
    throw std::invalid_argument("pass_at_k: n_correct exceeds n_samples");
  }
  double q = 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double numer = static_cast<double>(n_samples - n_correct) - static_cast<double>(i);
    if (numer <= 0.0) return 1.0;
    q *= numer / (static_cast<double>(n_samples) - static_cast<double>(i));
  }
  return 1.0 - q;
}

/// Benchmark coverage: mean per-problem pass@k.
inline double pass_at_k_benchmark(std::span<const SampleResult> results, std::size_t k) {
  if (results.empty()) {
    throw std::invalid_argument("pass_at_k_benchmark: no results");
  }
  double sum = 0.0;
  for (const auto& r : results) {
    sum += pass_at_k(r.n_samples, r.n_correct, k);
  }
  return sum / static_cast<double>(results.size());
}

struct MajAtKOptions {
  std::size_t trials = 10000;             // Monte-Carlo subsets when enumeration is infeasible
  std::uint64_t seed = 0;                 // split per problem; order-independent
  std::size_t enumeration_limit = 100000; // enumerate exactly when C(K,k) fits
  bool force_monte_carlo = false;
  reward::MatchMode mode = reward::MatchMode::ExactMatch;
};

namespace detail {

/// C(n, k), capped at limit + 1. Each step computes C(n-k+i, i) so the
/// division is exact; the cap keeps intermediates far from overflow for any
/// realistic enumeration limit.
inline std::uint64_t binomial_capped(std::size_t n, std::size_t k, std::uint64_t limit) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t result = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    result = result * (n - k + i) / i;
    if (result > limit) return limit + 1;
  }
  return result;
}

/// 1 when the modal answer of the chosen samples (indices ascending) matches
/// a gold. Ties break toward the group whose first vote has the smallest
/// sample index. Samples without an answer cast no vote.
inline double majority_indicator(const SampleResult& r,
                                 const std::vector<std::size_t>& chosen,
                                 const std::vector<std::string>& normalized,
                                 reward::MatchMode mode) {
  std::map<std::string_view, std::pair<std::size_t, std::size_t>> groups;  // key -> (count, first idx)
  for (std::size_t idx : chosen) {
    if (!r.per_sample[idx].answer.has_value()) continue;
    std::string_view key = normalized[idx];
    auto [it, inserted] = groups.try_emplace(key, 0, idx);
    ++it->second.first;
  }
  if (groups.empty()) return 0.0;
  std::size_t best_count = 0;
  std::size_t best_first = 0;
  std::size_t best_idx = 0;
  bool have = false;
  for (const auto& [key, cf] : groups) {
    const auto [count, first] = cf;
    if (!have || count > best_count || (count == best_count && first < best_first)) {
      best_count = count;
      best_first = first;
      best_idx = first;
      have = true;
    }
  }
  const std::string& representative = *r.per_sample[best_idx].answer;
  return reward::is_equivalent(representative, r.golds, mode) ? 1.0 : 0.0;
}

inline double maj_at_k_problem(const SampleResult& r, std::size_t k, const MajAtKOptions& opts,
                               std::uint64_t problem_seed) {
  const std::size_t n = r.per_sample.size();
  if (n != r.n_samples) {
    throw std::invalid_argument("maj_at_k: per-sample answers required");
  }
  if (k > n || k == 0) {
    throw std::invalid_argument("maj_at_k: k must satisfy 1 <= k <= n_samples");
  }
  std::vector<std::string> normalized(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (r.per_sample[i].answer.has_value()) {
      normalized[i] = reward::normalize_answer(*r.per_sample[i].answer);
    }
  }

  if (k == n) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    return majority_indicator(r, all, normalized, opts.mode);
  }

  const bool enumerate = !opts.force_monte_carlo &&
                         binomial_capped(n, k, opts.enumeration_limit) <= opts.enumeration_limit;
  if (enumerate) {
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = i;
    double sum = 0.0;
    std::uint64_t count = 0;
    while (true) {
      sum += majority_indicator(r, idx, normalized, opts.mode);
      ++count;
      // next combination in lexicographic order
      std::size_t i = k;
      while (i > 0 && idx[i - 1] == n - k + (i - 1)) --i;
      if (i == 0) break;
      ++idx[i - 1];
      for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
    return sum / static_cast<double>(count);
  }

  std::mt19937_64 gen(problem_seed);
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  double sum = 0.0;
  std::vector<std::size_t> chosen(k);
  for (std::size_t trial = 0; trial < opts.trials; ++trial) {
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> dist(i, n - 1);
      std::swap(pool[i], pool[dist(gen)]);
      chosen[i] = pool[i];
    }
    std::sort(chosen.begin(), chosen.end());
    sum += majority_indicator(r, chosen, normalized, opts.mode);
  }
  return sum / static_cast<double>(opts.trials);
}

}  // namespace detail

/// Benchmark maj@k: exact at k == K or when subsets are enumerable, seeded
/// Monte-Carlo otherwise.
inline double maj_at_k(std::span<const SampleResult> results, std::size_t k,
                       const MajAtKOptions& opts = {}) {
  if (results.empty()) {
    throw std::invalid_argument("maj_at_k: no results");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    sum += detail::maj_at_k_problem(results[i], k, opts, rng::derive_seed(opts.seed, i));
  }
  return sum / static_cast<double>(results.size());
}

/// Coverage under a shared token budget: per problem, include the maximal
/// prefix of samples whose cumulative total_tokens fits the budget, then
/// report the fraction of problems with at least one correct included sample.
inline std::vector<std::pair<std::uint64_t, double>> budget_curves(
    std::span<const SampleResult> results, std::span<const std::uint64_t> budget_grid) {
  if (budget_grid.empty()) {
    throw std::invalid_argument("budget_curves: empty budget grid");
  }
  if (results.empty()) {
    throw std::invalid_argument("budget_curves: no results");
  }
  std::vector<std::pair<std::uint64_t, double>> out;
  out.reserve(budget_grid.size());
  for (std::uint64_t budget : budget_grid) {
    double covered = 0.0;
    for (const auto& r : results) {
      std::uint64_t used = 0;
      bool any_correct = false;
      for (const auto& s : r.per_sample) {
        if (used + s.usage.total_tokens > budget) break;
        used += s.usage.total_tokens;
        any_correct = any_correct || s.correct;
      }
      if (any_correct) covered += 1.0;
    }
    out.emplace_back(budget, covered / static_cast<double>(results.size()));
  }
  return out;
}

}  // namespace selfsearch::metrics
