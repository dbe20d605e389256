#pragma once

/**
 * Text-generation backends.
 *
 * Policy is the one-method interface the rollout executor drives. Two
 * implementations live here:
 *  - MockPolicy: scripted rules (prompt substring -> canned output), with
 *    optional per-seed variants. Referentially transparent in
 *    (prompt, params); the test double everything deterministic builds on.
 *  - SelfSearchMock: procedural mock that emits grammar-valid self-search
 *    trajectories turn by turn, for end-to-end rollout tests and --mock runs.
 *
 * The HTTP client for real backends is in http_policy.hpp.
 *
 * Stop handling is client-side in addition to server-side: finalize_generation
 * scans for stop sequences and truncates, so behavior is identical across
 * backends. Entropy traces ride along per token when a backend supplies them.
 */

#include <algorithm>
#include <cstdint>
#include <functional>
#include <future>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "selfsearch/common.hpp"
#include "selfsearch/prompts.hpp"

namespace selfsearch::policy {

struct GenParams {
  double temperature = 0.7;
  double top_p = 0.95;
  int top_k = -1;  // -1 = unlimited
  std::size_t max_tokens = 8192;
  std::vector<std::string> stop_sequences;
  std::optional<std::uint64_t> seed;

  /// Sampling-run defaults: temperature 0.7, top-p 0.95, top-k unlimited,
  /// 8192 max tokens.
  static GenParams sampling_defaults() { return {}; }

  /// Evaluation defaults: greedy decoding.
  static GenParams eval_defaults() {
    GenParams p;
    p.temperature = 0.0;
    return p;
  }
};

enum class FinishReason { Stop, Length, StopSequence };

struct EntropyPoint {
  std::size_t token_index = 0;
  double entropy = 0.0;  // nats, >= 0
  CharSpan span;         // byte span of the token within Generation::text
};

struct Generation {
  std::string text;
  FinishReason finish_reason = FinishReason::Stop;
  std::optional<std::vector<EntropyPoint>> entropy_trace;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual Generation generate(const std::string& prompt, const GenParams& params) = 0;
};

namespace detail {

/// Truncate an entropy trace at a cut point: points past it go away, a
/// straddling point is clipped to the surviving prefix.
inline void clip_trace(std::optional<std::vector<EntropyPoint>>& trace, std::size_t cut) {
  if (!trace) return;
  std::erase_if(*trace, [&](const EntropyPoint& p) { return p.span.begin >= cut; });
  for (auto& p : *trace) p.span.end = std::min(p.span.end, cut);
}

}  // namespace detail

/// Client-side stop scan: truncate at the earliest stop sequence, clip the
/// entropy trace, and record the reason.
inline Generation finalize_generation(Generation g, const std::vector<std::string>& stops) {
  std::size_t cut = std::string::npos;
  for (const auto& s : stops) {
    if (s.empty()) continue;
    const std::size_t pos = g.text.find(s);
    if (pos != std::string::npos && pos < cut) cut = pos;
  }
  if (cut != std::string::npos) {
    g.text.resize(cut);
    g.finish_reason = FinishReason::StopSequence;
    detail::clip_trace(g.entropy_trace, cut);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Scripted mock
// ---------------------------------------------------------------------------

struct MockRule {
  std::string pattern;                 // substring of the prompt; empty matches everything
  std::vector<Generation> variants;    // params.seed % variants.size() selects
};

/// Deterministic scripted backend. Rules are checked in insertion order and
/// the first match wins; a default generation answers anything unmatched.
class MockPolicy : public Policy {
 public:
  MockPolicy() = default;
  explicit MockPolicy(Generation fallback) : fallback_(std::move(fallback)) {}

  MockPolicy& add_rule(std::string pattern, Generation g) {
    rules_.push_back({std::move(pattern), {std::move(g)}});
    return *this;
  }

  MockPolicy& add_rule(std::string pattern, std::vector<Generation> variants) {
    rules_.push_back({std::move(pattern), std::move(variants)});
    return *this;
  }

  MockPolicy& set_fallback(Generation g) {
    fallback_ = std::move(g);
    return *this;
  }

  /// When set, a matching prompt raises instead of generating (fault injection).
  MockPolicy& fail_on(std::string pattern) {
    fail_patterns_.push_back(std::move(pattern));
    return *this;
  }

  Generation generate(const std::string& prompt, const GenParams& params) override {
    for (const auto& p : fail_patterns_) {
      if (prompt.find(p) != std::string::npos) {
        throw std::runtime_error("mock backend failure on pattern: " + p);
      }
    }
    const std::uint64_t seed = params.seed.value_or(0);
    const Generation* chosen = nullptr;
    for (const auto& rule : rules_) {
      if (rule.pattern.empty() || prompt.find(rule.pattern) != std::string::npos) {
        chosen = &rule.variants[seed % rule.variants.size()];
        break;
      }
    }
    if (!chosen) chosen = &fallback_;
    return postprocess(*chosen, params);
  }

 private:
  static Generation postprocess(Generation g, const GenParams& params) {
    // Emulate the token budget on whitespace tokens, then scan stops.
    const auto spans = text::whitespace_token_spans(g.text);
    if (spans.size() > params.max_tokens) {
      g.text.resize(spans[params.max_tokens - 1].end);
      g.finish_reason = FinishReason::Length;
      detail::clip_trace(g.entropy_trace, g.text.size());
    }
    return finalize_generation(std::move(g), params.stop_sequences);
  }

  std::vector<MockRule> rules_;
  std::vector<std::string> fail_patterns_;
  Generation fallback_;
};

// ---------------------------------------------------------------------------
// Procedural self-search mock
// ---------------------------------------------------------------------------

/// Emits grammar-valid self-search trajectories for any question,
/// deterministically in (prompt, params). Continuation-aware: when asked to
/// stop at </search> it plays one turn at a time, keyed on how many
/// information blocks the prompt already contains; otherwise it emits a
/// complete trajectory. Synthetic entropy traces cover each search query so
/// routing logic can be exercised offline.
class SelfSearchMock : public Policy {
 public:
  enum class EntropyShape { Increasing, Decreasing, Hashed };

  struct Options {
    std::size_t min_searches = 1;
    std::size_t max_searches = 2;
    bool never_answer = false;       // keep searching forever (turn-bound tests)
    EntropyShape entropy = EntropyShape::Hashed;
    std::string answer_suffix;       // appended to the echoed answer
  };

  SelfSearchMock() = default;
  explicit SelfSearchMock(Options opts) : opts_(opts) {}

  Generation generate(const std::string& prompt, const GenParams& params) override {
    const std::uint64_t seed = params.seed.value_or(0);

    // The provide-information instruction asks for documents, not a rollout.
    if (prompt.find("Useful Output:") != std::string::npos) {
      return document_completion(prompt, params);
    }

    const std::size_t q_pos = question_position(prompt);
    const std::string question = extract_question(prompt, q_pos);
    const std::uint64_t mix = rng::derive_seed(seed, std::hash<std::string>{}(question));
    const std::size_t span = opts_.max_searches - opts_.min_searches + 1;
    const std::size_t n_searches = opts_.min_searches + static_cast<std::size_t>(mix % span);

    bool turn_mode = false;
    for (const auto& s : params.stop_sequences) {
      if (s == "</search>") turn_mode = true;
    }

    Generation g;
    if (turn_mode) {
      // Turn index = information blocks inserted so far, counted after the
      // question so the instruction's own tag mentions do not inflate it.
      const std::size_t turn =
          text::count_occurrences(std::string_view(prompt).substr(q_pos), "<information>");
      if (opts_.never_answer || turn < n_searches) {
        g.text = think_block(question, turn) + "\n<search>" + query(question, turn) +
                 "</search>\n";
        g.entropy_trace = trace_for(g.text, mix, turn);
      } else {
        g.text = answer_block(question);
      }
    } else {
      std::string text;
      for (std::size_t turn = 0; turn < n_searches; ++turn) {
        text += think_block(question, turn) + "\n<search>" + query(question, turn) +
                "</search>\n<information>Doc 1: Generated note about " + sanitize_line(question) +
                " (" + std::to_string(turn + 1) + ").</information>\n";
      }
      text += answer_block(question);
      g.text = std::move(text);
      g.entropy_trace = trace_for(g.text, mix, 0);
    }
    return postprocess(std::move(g), params);
  }

 private:
  static std::string sanitize_line(std::string_view q) {
    std::string out;
    for (char c : q) {
      if (c == '\n' || c == '\r') c = ' ';
      if (c == '<' || c == '>') c = ' ';
      out.push_back(c);
    }
    return std::string(text::strip(out));
  }

  /// Offset just past the question marker, or 0 when absent.
  static std::size_t question_position(const std::string& prompt) {
    const std::string marker = "Question: ";
    const std::size_t pos = prompt.rfind(marker);
    return pos == std::string::npos ? 0 : pos + marker.size();
  }

  /// The question runs from the marker to the first newline or tag; the
  /// transcript of earlier turns follows it directly.
  static std::string extract_question(const std::string& prompt, std::size_t q_pos) {
    std::string_view rest = std::string_view(prompt).substr(q_pos);
    const std::size_t cut = std::min(rest.find('\n'), rest.find('<'));
    if (cut != std::string_view::npos) rest = rest.substr(0, cut);
    return std::string(text::strip(rest));
  }

  Generation document_completion(const std::string& prompt, const GenParams& params) const {
    const std::string marker = "Query: ";
    std::string query;
    const std::size_t pos = prompt.rfind(marker);
    if (pos != std::string::npos) {
      std::string_view rest = std::string_view(prompt).substr(pos + marker.size());
      const std::size_t nl = rest.find('\n');
      if (nl != std::string_view::npos) rest = rest.substr(0, nl);
      query = std::string(text::strip(rest));
    }
    Generation g;
    g.text = "1. Generated reference stating what is known about " + sanitize_line(query) +
             ".\n2. Supporting note with background details on " + sanitize_line(query) +
             ".\n3. Additional context commonly associated with " + sanitize_line(query) + ".";
    return postprocess(std::move(g), params);
  }

  std::string think_block(const std::string& q, std::size_t turn) const {
    if (turn == 0) {
      return "<think>I need to find out: " + sanitize_line(q) + ".</think>";
    }
    return "<think>The information so far is not complete; I will refine the search.</think>";
  }

  std::string query(const std::string& q, std::size_t turn) const {
    std::string base = sanitize_line(q);
    if (turn == 0) return base;
    return base + " detail " + std::to_string(turn + 1);
  }

  std::string answer_block(const std::string& q) const {
    return "<think>I now have enough information to answer.</think>\n<answer>" +
           sanitize_line(q) + opts_.answer_suffix + "</answer>";
  }

  std::vector<EntropyPoint> trace_for(const std::string& text, std::uint64_t mix,
                                      std::size_t turn) const {
    std::vector<EntropyPoint> trace;
    const auto spans = text::whitespace_token_spans(text);
    bool increasing = true;
    switch (opts_.entropy) {
      case EntropyShape::Increasing: increasing = true; break;
      case EntropyShape::Decreasing: increasing = false; break;
      case EntropyShape::Hashed: increasing = (rng::derive_seed(mix, turn) % 2) == 0; break;
    }
    for (std::size_t i = 0; i < spans.size(); ++i) {
      const double step = 0.05 * static_cast<double>(i);
      const double e = increasing ? 0.5 + step
                                  : std::max(0.0, 0.5 + 0.05 * static_cast<double>(spans.size()) -
                                                      step);
      trace.push_back({i, e, spans[i]});
    }
    return trace;
  }

  static Generation postprocess(Generation g, const GenParams& params) {
    const auto spans = text::whitespace_token_spans(g.text);
    if (spans.size() > params.max_tokens) {
      g.text.resize(spans[params.max_tokens - 1].end);
      g.finish_reason = FinishReason::Length;
      detail::clip_trace(g.entropy_trace, g.text.size());
    }
    return finalize_generation(std::move(g), params.stop_sequences);
  }

  Options opts_;
};

// ---------------------------------------------------------------------------
// Batch execution
// ---------------------------------------------------------------------------

struct GenerationResult {
  std::optional<Generation> generation;
  std::string error;

  bool ok() const { return generation.has_value(); }
};

/// Run many prompts with bounded concurrency. Output order matches input
/// order regardless of completion order; per-item failures are recorded
/// in-place without aborting the batch.
inline std::vector<GenerationResult> batch_generate(Policy& policy,
                                                    const std::vector<std::string>& prompts,
                                                    const GenParams& params,
                                                    std::size_t concurrency_limit) {
  if (concurrency_limit < 1) {
    throw std::invalid_argument("batch_generate: concurrency_limit must be >= 1");
  }
  std::vector<GenerationResult> results(prompts.size());
  std::counting_semaphore<> slots(static_cast<std::ptrdiff_t>(concurrency_limit));
  std::vector<std::future<void>> futures;
  futures.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    slots.acquire();
    futures.push_back(std::async(std::launch::async, [&, i] {
      try {
        results[i].generation = policy.generate(prompts[i], params);
      } catch (const std::exception& e) {
        results[i].error = e.what();
      } catch (...) {
        results[i].error = "unknown generation error";
      }
      slots.release();
    }));
  }
  for (auto& f : futures) f.get();
  return results;
}

}  // namespace selfsearch::policy
