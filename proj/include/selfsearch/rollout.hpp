#pragma once

/**
 * Episode executor: runs question-answering rollouts in every supported mode
 * and records full trajectories, per-turn interaction logs, and token usage.
 *
 * Modes:
 *  - SinglePass: one generation; the model writes the whole trajectory,
 *    information blocks included.
 *  - MultiTurn: generation stops at </search>; the executor fetches documents
 *    for the query, splices an <information> block into the context, and
 *    resumes, up to max_turns.
 *  - Reflection: after a completed generation, append the reflection phrase
 *    and regenerate a continuation; the final answer is the last answer block.
 *  - Sim2Real: the multi-turn loop with the first K information blocks (or
 *    all, or a spliced first/last block in the two-stage variant) filled from
 *    an external retriever instead of self-search.
 *  - EntropyRouted: the first query always goes external; each later query
 *    goes external only when the OLS slope of per-token entropy over its
 *    <search> span exceeds the threshold (strict).
 *
 * Everything is deterministic given a deterministic policy and fixed seeds.
 */

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "selfsearch/common.hpp"
#include "selfsearch/metrics.hpp"
#include "selfsearch/policy.hpp"
#include "selfsearch/prompts.hpp"
#include "selfsearch/retrieval.hpp"
#include "selfsearch/reward.hpp"
#include "selfsearch/trajectory.hpp"

namespace selfsearch::rollout {

enum class RolloutMode { SinglePass, MultiTurn, Reflection, Sim2Real, EntropyRouted };

inline std::string_view mode_name(RolloutMode m) {
  switch (m) {
    case RolloutMode::SinglePass: return "single";
    case RolloutMode::MultiTurn: return "multi";
    case RolloutMode::Reflection: return "reflect";
    case RolloutMode::Sim2Real: return "sim2real";
    case RolloutMode::EntropyRouted: return "entropy";
  }
  return "?";
}

enum class ReplacePosition { UpToK, First, Last, All };

struct RolloutConfig {
  RolloutMode mode = RolloutMode::SinglePass;
  std::size_t max_turns = 10;                 // N
  std::size_t sim2real_budget = 1;            // K, used by ReplacePosition::UpToK
  ReplacePosition replace_position = ReplacePosition::UpToK;
  std::string reflection_phrase = std::string(prompts::kReflectionPhrase);
  std::size_t reflection_rounds = 1;
  policy::GenParams gen = policy::GenParams::sampling_defaults();
  std::string prompt_template = std::string(prompts::kSearchTemplate);
  std::size_t top_n = 3;                      // documents per information block
  std::size_t episode_token_cap = 8192;       // whitespace tokens across the transcript
  double entropy_slope_threshold = 0.0;       // strict: slope must exceed it
  bool always_first_external = true;
  bool external_on_missing_trace = true;      // fallback when no entropy trace
};

struct TurnRecord {
  std::string query;
  retrieval::InfoSourceKind info_source = retrieval::InfoSourceKind::SelfSearch;
  std::vector<std::string> documents;
  std::optional<double> entropy_slope;
};

struct Episode {
  std::string question;
  trajectory::Trajectory trajectory;
  std::vector<TurnRecord> per_turn;
  metrics::TokenUsage usage;
  std::optional<std::string> final_answer;
  std::vector<std::string> errors;
};

namespace detail {

inline std::string render_prompt(const RolloutConfig& cfg, const std::string& question) {
  return cfg.prompt_template + question;
}

inline std::string format_information_block(const std::vector<std::string>& docs) {
  std::string body;
  if (docs.empty()) {
    body = "No relevant documents found.";
  } else {
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (i) body += "\n";
      body += "Doc " + std::to_string(i + 1) + ": " + docs[i];
    }
  }
  return "\n<information>" + body + "</information>\n\n";
}

/// The query of the last (still open, already closed by the executor)
/// search block in a continuation chunk.
inline std::optional<std::string> last_search_query(std::string_view chunk) {
  const std::size_t open = chunk.rfind("<search>");
  if (open == std::string_view::npos) return std::nullopt;
  std::string_view rest = chunk.substr(open + 8);
  return std::string(text::strip(rest));
}

/// OLS slope of entropy over token order for points intersecting `span`.
inline std::optional<double> entropy_slope_over(
    const std::optional<std::vector<policy::EntropyPoint>>& trace, const CharSpan& span) {
  if (!trace) return std::nullopt;
  std::vector<double> ys;
  for (const auto& p : *trace) {
    if (spans_intersect(p.span, span)) ys.push_back(p.entropy);
  }
  if (ys.empty()) return std::nullopt;
  if (ys.size() == 1) return 0.0;
  const double n = static_cast<double>(ys.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const double x = static_cast<double>(i);
    sx += x;
    sy += ys[i];
    sxx += x * x;
    sxy += x * ys[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) return 0.0;
  return (n * sxy - sx * sy) / denom;
}

/// Content span of the last <search> block within `chunk`.
inline std::optional<CharSpan> last_search_span(std::string_view chunk) {
  const std::size_t open = chunk.rfind("<search>");
  if (open == std::string_view::npos) return std::nullopt;
  return CharSpan{open + 8, chunk.size()};
}

// Routing decision for one information block.
struct SourceChoice {
  retrieval::InfoSource* source = nullptr;  // null = self-search
  retrieval::InfoSourceKind kind = retrieval::InfoSourceKind::SelfSearch;
  std::optional<double> entropy_slope;
};

using SourceSelector = std::function<SourceChoice(std::size_t turn, const std::string& query,
                                                  std::optional<double> entropy_slope)>;

inline void finish_episode(Episode& ep, const std::string& transcript) {
  ep.trajectory = trajectory::parse(transcript);
  ep.final_answer = trajectory::extract_answer(ep.trajectory);
  ep.usage = metrics::token_usage(ep.trajectory);
}

/// Core multi-turn loop. Starting from an optional pre-seeded transcript,
/// alternate generation (stopped at </search>) with information insertion
/// until an answer appears, the turn budget runs out, or the token cap hits.
inline Episode run_loop(const std::string& question, policy::Policy& policy,
                        retrieval::SelfSearchSource& self_source, const SourceSelector& select,
                        const RolloutConfig& cfg, std::string transcript,
                        std::vector<TurnRecord> per_turn) {
  Episode ep;
  ep.question = question;
  ep.per_turn = std::move(per_turn);
  const std::string prompt = render_prompt(cfg, question);

  policy::GenParams params = cfg.gen;
  params.stop_sequences.push_back("</search>");

  while (true) {
    policy::Generation gen;
    try {
      gen = policy.generate(prompt + transcript, params);
    } catch (const std::exception& e) {
      ep.errors.push_back(std::string("generation failed: ") + e.what());
      break;
    }

    if (gen.finish_reason != policy::FinishReason::StopSequence) {
      transcript += gen.text;
      break;
    }

    // An answer inside the chunk concludes the episode even when a stray
    // search fragment follows it.
    const std::size_t answered = gen.text.find("</answer>");
    if (answered != std::string::npos) {
      transcript += gen.text.substr(0, answered + 9);
      break;
    }

    // A search query was produced; close the tag the stop sequence consumed.
    const auto query = last_search_query(gen.text);
    transcript += gen.text;
    transcript += "</search>";
    if (!query || query->empty()) {
      ep.errors.push_back("stop at </search> without a query");
      break;
    }
    if (ep.per_turn.size() >= cfg.max_turns) break;

    const auto slope = entropy_slope_over(gen.entropy_trace, *last_search_span(gen.text));
    const SourceChoice choice = select(ep.per_turn.size(), *query, slope);

    TurnRecord turn;
    turn.query = *query;
    turn.entropy_slope = choice.entropy_slope;
    std::vector<std::string> docs;
    try {
      if (choice.source) {
        auto result = choice.source->fetch(*query, cfg.top_n);
        docs = std::move(result.documents);
        turn.info_source = choice.kind;
      } else {
        auto result = self_source.fetch(*query, cfg.top_n);
        docs = std::move(result.documents);
        turn.info_source = retrieval::InfoSourceKind::SelfSearch;
      }
    } catch (const std::exception& e) {
      if (choice.source) {
        // External retriever failed: fall back to self-search for this block.
        ep.errors.push_back(std::string("external retrieval failed, fell back to self: ") +
                            e.what());
        try {
          auto result = self_source.fetch(*query, cfg.top_n);
          docs = std::move(result.documents);
          turn.info_source = retrieval::InfoSourceKind::SelfSearch;
        } catch (const std::exception& inner) {
          ep.errors.push_back(std::string("self-search also failed: ") + inner.what());
          ep.per_turn.push_back(std::move(turn));
          break;
        }
      } else {
        ep.errors.push_back(std::string("self-search failed: ") + e.what());
        ep.per_turn.push_back(std::move(turn));
        break;
      }
    }
    turn.documents = docs;
    ep.per_turn.push_back(std::move(turn));
    transcript += format_information_block(docs);

    if (text::whitespace_token_count(transcript) >= cfg.episode_token_cap) {
      ep.errors.push_back("episode token cap reached");
      break;
    }
    if (text::contains(transcript, "</answer>")) break;
  }

  finish_episode(ep, transcript);
  return ep;
}

}  // namespace detail

/// One generation; the model writes the entire trajectory.
inline Episode single_pass(const std::string& question, policy::Policy& policy,
                           const RolloutConfig& cfg) {
  Episode ep;
  ep.question = question;
  const auto gen = policy.generate(detail::render_prompt(cfg, question), cfg.gen);
  detail::finish_episode(ep, gen.text);
  return ep;
}

/// Multi-turn loop with a fixed information source (self-search when
/// `info_source` is null).
inline Episode multi_turn(const std::string& question, policy::Policy& policy,
                          retrieval::InfoSource* info_source, const RolloutConfig& cfg) {
  retrieval::SelfSearchOptions self_opts;
  self_opts.gen = cfg.gen;
  retrieval::SelfSearchSource self_source(policy, self_opts);
  detail::SourceSelector select = [&](std::size_t, const std::string&,
                                      std::optional<double> slope) {
    detail::SourceChoice c;
    c.entropy_slope = slope;
    if (info_source) {
      c.source = info_source;
      c.kind = info_source->kind();
    }
    return c;
  };
  return detail::run_loop(question, policy, self_source, select, cfg, "", {});
}

/// Multi-turn self-search: every information block generated by the policy.
inline Episode multi_turn(const std::string& question, policy::Policy& policy,
                          const RolloutConfig& cfg) {
  return multi_turn(question, policy, nullptr, cfg);
}

/// Reflection: complete a pass, then append the reflection phrase and let the
/// model reconsider; repeat for the configured number of rounds. The final
/// answer comes from the last answer block.
inline Episode reflect(const std::string& question, policy::Policy& policy,
                       const RolloutConfig& cfg) {
  Episode ep;
  ep.question = question;
  const std::string prompt = detail::render_prompt(cfg, question);
  std::string transcript;

  auto gen = policy.generate(prompt, cfg.gen);
  transcript += gen.text;
  for (std::size_t round = 0; round < cfg.reflection_rounds; ++round) {
    transcript += "\n" + cfg.reflection_phrase + "\n";
    gen = policy.generate(prompt + transcript, cfg.gen);
    transcript += gen.text;
  }
  detail::finish_episode(ep, transcript);
  return ep;
}

/// Sim2Real: run the multi-turn loop with the first K (or all) information
/// blocks filled from the external retriever. ReplacePosition::First/Last run
/// the two-stage variant: a full self-search pass, then the chosen block's
/// content is replaced with retrieved documents and the trajectory is
/// regenerated from immediately after the spliced </information>.
inline Episode sim2real(const std::string& question, policy::Policy& policy,
                        retrieval::InfoSource& retriever, const RolloutConfig& cfg) {
  retrieval::SelfSearchOptions self_opts;
  self_opts.gen = cfg.gen;
  retrieval::SelfSearchSource self_source(policy, self_opts);

  if (cfg.replace_position == ReplacePosition::UpToK ||
      cfg.replace_position == ReplacePosition::All) {
    detail::SourceSelector select = [&](std::size_t turn, const std::string&,
                                        std::optional<double> slope) {
      detail::SourceChoice c;
      c.entropy_slope = slope;
      const bool external = cfg.replace_position == ReplacePosition::All ||
                            turn < cfg.sim2real_budget;
      if (external) {
        c.source = &retriever;
        c.kind = retriever.kind();
      }
      return c;
    };
    return detail::run_loop(question, policy, self_source, select, cfg, "", {});
  }

  // Two-stage splice: self-search first.
  RolloutConfig stage1 = cfg;
  stage1.replace_position = ReplacePosition::UpToK;
  stage1.sim2real_budget = 0;
  Episode base = sim2real(question, policy, retriever, stage1);

  const auto& segments = base.trajectory.segments;
  std::vector<std::size_t> info_indices;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i].kind == trajectory::SegmentKind::Information) info_indices.push_back(i);
  }
  if (info_indices.empty()) {
    base.errors.push_back("no information block to replace");
    return base;
  }
  const std::size_t seg_idx = cfg.replace_position == ReplacePosition::First
                                  ? info_indices.front()
                                  : info_indices.back();
  const std::size_t turn_idx = cfg.replace_position == ReplacePosition::First
                                   ? 0
                                   : info_indices.size() - 1;
  const auto& target = segments[seg_idx];

  // Query of the paired search block (the nearest search before the target).
  std::string query;
  for (std::size_t i = seg_idx; i-- > 0;) {
    if (segments[i].kind == trajectory::SegmentKind::Search) {
      query = std::string(text::strip(segments[i].content));
      break;
    }
  }

  Episode ep;
  ep.question = question;
  std::vector<std::string> docs;
  retrieval::InfoSourceKind kind = retriever.kind();
  try {
    auto result = retriever.fetch(query, cfg.top_n);
    docs = std::move(result.documents);
  } catch (const std::exception& e) {
    ep.errors.push_back(std::string("external retrieval failed, fell back to self: ") + e.what());
    auto result = self_source.fetch(query, cfg.top_n);
    docs = std::move(result.documents);
    kind = retrieval::InfoSourceKind::SelfSearch;
  }

  std::string body;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (i) body += "\n";
    body += "Doc " + std::to_string(i + 1) + ": " + docs[i];
  }
  const std::string& src = base.trajectory.source;
  std::string prefix = src.substr(0, target.char_span.begin) + body + "</information>\n\n";

  std::vector<TurnRecord> turns(base.per_turn.begin(),
                                base.per_turn.begin() +
                                    static_cast<std::ptrdiff_t>(turn_idx + 1));
  if (!turns.empty()) {
    turns[turn_idx].info_source = kind;
    turns[turn_idx].documents = docs;
  }

  detail::SourceSelector select = [&](std::size_t, const std::string&,
                                      std::optional<double> slope) {
    detail::SourceChoice c;  // continuation searches stay on self-search
    c.entropy_slope = slope;
    return c;
  };
  Episode cont = detail::run_loop(question, policy, self_source, select, cfg,
                                  std::move(prefix), std::move(turns));
  cont.errors.insert(cont.errors.begin(), ep.errors.begin(), ep.errors.end());
  return cont;
}

/// Entropy-guided routing: first query external, later queries external only
/// when the per-token entropy slope over the query exceeds the threshold.
inline Episode entropy_routed(const std::string& question, policy::Policy& policy,
                              retrieval::InfoSource& retriever, const RolloutConfig& cfg) {
  retrieval::SelfSearchOptions self_opts;
  self_opts.gen = cfg.gen;
  retrieval::SelfSearchSource self_source(policy, self_opts);
  detail::SourceSelector select = [&](std::size_t turn, const std::string&,
                                      std::optional<double> slope) {
    detail::SourceChoice c;
    c.entropy_slope = slope;
    bool external;
    if (turn == 0 && cfg.always_first_external) {
      external = true;
    } else if (!slope.has_value()) {
      external = cfg.external_on_missing_trace;
    } else {
      external = *slope > cfg.entropy_slope_threshold;
    }
    if (external) {
      c.source = &retriever;
      c.kind = retriever.kind();
    }
    return c;
  };
  return detail::run_loop(question, policy, self_source, select, cfg, "", {});
}

/// Dispatch on cfg.mode. `retriever` may be null for the purely internal
/// modes.
inline Episode run_episode(const std::string& question, policy::Policy& policy,
                           retrieval::InfoSource* retriever, const RolloutConfig& cfg) {
  switch (cfg.mode) {
    case RolloutMode::SinglePass: return single_pass(question, policy, cfg);
    case RolloutMode::MultiTurn: return multi_turn(question, policy, cfg);
    case RolloutMode::Reflection: return reflect(question, policy, cfg);
    case RolloutMode::Sim2Real:
      if (!retriever) throw std::invalid_argument("sim2real mode requires a retriever");
      return sim2real(question, policy, *retriever, cfg);
    case RolloutMode::EntropyRouted:
      if (!retriever) throw std::invalid_argument("entropy mode requires a retriever");
      return entropy_routed(question, policy, *retriever, cfg);
  }
  throw std::logic_error("unknown rollout mode");
}

/// K independent episodes scored against the gold answers. Per-sample
/// failures are recorded as incorrect rather than aborting the batch.
inline metrics::SampleResult repeated_sampling(const std::string& question_id,
                                               const std::string& question,
                                               const std::vector<std::string>& golds,
                                               reward::MatchMode mode, policy::Policy& policy,
                                               retrieval::InfoSource* retriever,
                                               const RolloutConfig& cfg, std::size_t n_samples,
                                               std::uint64_t base_seed = 0) {
  if (n_samples < 1) {
    throw std::invalid_argument("repeated_sampling: n_samples must be >= 1");
  }
  std::vector<metrics::SampleOutcome> outcomes;
  outcomes.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    RolloutConfig sample_cfg = cfg;
    sample_cfg.gen.seed = base_seed + i;
    metrics::SampleOutcome outcome;
    try {
      const Episode ep = run_episode(question, policy, retriever, sample_cfg);
      outcome.answer = ep.final_answer;
      outcome.usage = ep.usage;
      outcome.correct =
          ep.final_answer.has_value() && reward::is_equivalent(*ep.final_answer, golds, mode);
    } catch (const std::exception&) {
      outcome.correct = false;  // failed sample counts as wrong
    }
    outcomes.push_back(std::move(outcome));
  }
  return metrics::SampleResult::from_samples(question_id, golds, std::move(outcomes));
}

}  // namespace selfsearch::rollout
