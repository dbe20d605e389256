#pragma once

/**
 * Information sources for rollouts: self-search (the policy writes its own
 * documents), a local JSONL corpus with lexical ranking, and a web search
 * API client with a recorded-fixture mode for offline tests.
 *
 * sanitize() is the rule-based post-processing applied before retrieved text
 * enters a trajectory: strip URLs, strip "Doc N:"-style prefixes, strip
 * markdown artifacts, escape angle brackets (an unescaped <search> inside an
 * information block would corrupt the grammar), collapse whitespace, and
 * truncate to a character budget. Each rule is idempotent and so is the
 * whole pipeline.
 */

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "selfsearch/common.hpp"
#include "selfsearch/policy.hpp"
#include "selfsearch/prompts.hpp"

namespace selfsearch::retrieval {

enum class InfoSourceKind { SelfSearch, Corpus, Web };

inline std::string_view source_name(InfoSourceKind k) {
  switch (k) {
    case InfoSourceKind::SelfSearch: return "self";
    case InfoSourceKind::Corpus: return "corpus";
    case InfoSourceKind::Web: return "web";
  }
  return "?";
}

struct InfoRequest {
  std::string query;       // single line
  std::size_t top_n = 3;
  InfoSourceKind source = InfoSourceKind::SelfSearch;
};

struct InfoResult {
  std::vector<std::string> documents;
  InfoSourceKind source = InfoSourceKind::SelfSearch;
  double latency_ms = 0.0;
  bool sanitized = false;
  bool flagged = false;   // degraded result (fallback, empty ranking, ...)
  std::string note;
};

struct RetrievalError : std::runtime_error {
  RetrievalError(const std::string& msg, int status_, int attempts_)
      : std::runtime_error(msg), status(status_), attempts(attempts_) {}
  int status = 0;
  int attempts = 0;
};

// ---------------------------------------------------------------------------
// Sanitation
// ---------------------------------------------------------------------------

struct SanitizeOptions {
  bool strip_urls = true;
  bool strip_doc_prefixes = true;
  bool strip_markdown = true;
  bool escape_angle_brackets = true;
  bool collapse_whitespace = true;
  std::size_t max_chars = 2000;
};

namespace detail {

inline bool is_url_char(char c) {
  return !text::is_space(c);
}

inline std::string strip_urls(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const bool http = s.compare(i, 7, "http://") == 0 || s.compare(i, 8, "https://") == 0;
    const bool www = s.compare(i, 4, "www.") == 0;
    if (http || www) {
      while (i < s.size() && is_url_char(s[i])) ++i;
      continue;
    }
    out.push_back(s[i]);
    ++i;
  }
  return out;
}

inline std::string strip_doc_prefixes(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  bool line_start = true;
  while (i < s.size()) {
    if (line_start) {
      std::size_t j = i;
      while (j < s.size() && (s[j] == ' ' || s[j] == '\t')) ++j;
      std::size_t p = j;
      if (s.compare(p, 4, "Doc ") == 0 || s.compare(p, 4, "doc ") == 0) p += 4;
      std::size_t digits = p;
      while (digits < s.size() && s[digits] >= '0' && s[digits] <= '9') ++digits;
      if (digits > p && p > j && digits < s.size() && (s[digits] == ':' || s[digits] == '.')) {
        std::size_t after = digits + 1;
        while (after < s.size() && s[after] == ' ') ++after;
        i = after;
        line_start = false;
        continue;
      }
    }
    line_start = s[i] == '\n';
    out.push_back(s[i]);
    ++i;
  }
  return out;
}

inline std::string strip_markdown(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  bool line_start = true;
  while (i < s.size()) {
    if (line_start) {
      std::size_t j = i;
      while (j < s.size() && s[j] == '#') ++j;
      if (j > i && j < s.size() && s[j] == ' ') {
        i = j + 1;
        line_start = false;
        continue;
      }
    }
    const char c = s[i];
    if (c == '*' || c == '`' || c == '_') {
      line_start = false;
      ++i;
      continue;
    }
    if (c == '[') {
      // [text](target) -> text
      const std::size_t close = s.find(']', i + 1);
      if (close != std::string::npos && close + 1 < s.size() && s[close + 1] == '(') {
        const std::size_t paren = s.find(')', close + 2);
        if (paren != std::string::npos) {
          out.append(s, i + 1, close - i - 1);
          i = paren + 1;
          line_start = false;
          continue;
        }
      }
    }
    line_start = c == '\n';
    out.push_back(c);
    ++i;
  }
  return out;
}

inline std::string escape_angle_brackets(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '<') {
      out += "&lt;";
    } else if (c == '>') {
      out += "&gt;";
    } else {
      out.push_back(c);
    }
  }
  return out;
}

inline std::string collapse_whitespace(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool in_space = false;
  for (char c : s) {
    if (text::is_space(c)) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out.push_back(' ');
    in_space = false;
    out.push_back(c);
  }
  return out;
}

}  // namespace detail

/// Apply the sanitation rules, in order, to one document. Markdown runs
/// before URL stripping so [text](url) links resolve before their targets
/// disappear.
inline std::string sanitize_document(const std::string& doc, const SanitizeOptions& opts = {}) {
  std::string s = doc;
  if (opts.strip_markdown) s = detail::strip_markdown(s);
  if (opts.strip_urls) s = detail::strip_urls(s);
  if (opts.strip_doc_prefixes) s = detail::strip_doc_prefixes(s);
  if (opts.escape_angle_brackets) s = detail::escape_angle_brackets(s);
  if (opts.collapse_whitespace) s = detail::collapse_whitespace(s);
  if (s.size() > opts.max_chars) s.resize(opts.max_chars);
  return std::string(text::strip(s));
}

inline std::vector<std::string> sanitize(const std::vector<std::string>& docs,
                                         const SanitizeOptions& opts = {}) {
  std::vector<std::string> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(sanitize_document(d, opts));
  return out;
}

// ---------------------------------------------------------------------------
// Source interface
// ---------------------------------------------------------------------------

class InfoSource {
 public:
  virtual ~InfoSource() = default;
  virtual InfoResult fetch(const std::string& query, std::size_t top_n) = 0;
  virtual InfoSourceKind kind() const = 0;
};

// ---------------------------------------------------------------------------
// Self-search: the policy writes the documents
// ---------------------------------------------------------------------------

/// Split a completion into documents: numbered-list items ("1. ..." or
/// "Doc 1: ...", possibly spanning lines) or, failing that, non-empty lines.
inline std::vector<std::string> split_documents(std::string_view completion) {
  std::vector<std::string> numbered;
  std::string current;
  bool any_marker = false;
  std::size_t pos = 0;
  while (pos <= completion.size()) {
    const std::size_t eol = std::min(completion.find('\n', pos), completion.size());
    std::string_view line = completion.substr(pos, eol - pos);
    std::string_view body = text::strip(line);
    std::string_view after_marker;
    bool is_marker = false;
    {
      std::string_view probe = body;
      if (probe.starts_with("Doc ") || probe.starts_with("doc ")) probe.remove_prefix(4);
      std::size_t d = 0;
      while (d < probe.size() && probe[d] >= '0' && probe[d] <= '9') ++d;
      if (d > 0 && d < probe.size() && (probe[d] == '.' || probe[d] == ')' || probe[d] == ':')) {
        is_marker = true;
        after_marker = text::strip(probe.substr(d + 1));
      }
    }
    if (is_marker) {
      any_marker = true;
      if (!text::strip(current).empty()) numbered.push_back(std::string(text::strip(current)));
      current = std::string(after_marker);
    } else if (!body.empty()) {
      if (!current.empty()) current += "\n";
      current += std::string(body);
    }
    if (eol >= completion.size()) break;
    pos = eol + 1;
  }
  if (!text::strip(current).empty()) numbered.push_back(std::string(text::strip(current)));

  if (any_marker) return numbered;
  // No list markers: fall back to one document per non-empty line.
  std::vector<std::string> lines;
  pos = 0;
  while (pos <= completion.size()) {
    const std::size_t eol = std::min(completion.find('\n', pos), completion.size());
    std::string_view body = text::strip(completion.substr(pos, eol - pos));
    if (!body.empty()) lines.push_back(std::string(body));
    if (eol >= completion.size()) break;
    pos = eol + 1;
  }
  return lines;
}

struct SelfSearchOptions {
  std::size_t default_top_n = 3;  // rollout insertion cap; the instruction asks for five
  policy::GenParams gen = policy::GenParams::sampling_defaults();
  SanitizeOptions sanitizer;
  bool apply_sanitizer = true;
};

/// Documents generated by the policy itself from the provide-information
/// instruction.
class SelfSearchSource : public InfoSource {
 public:
  SelfSearchSource(policy::Policy& policy, SelfSearchOptions opts = {})
      : policy_(policy), opts_(std::move(opts)) {}

  InfoSourceKind kind() const override { return InfoSourceKind::SelfSearch; }

  InfoResult fetch(const std::string& query, std::size_t top_n) override {
    if (query.empty() || query.find('\n') != std::string::npos) {
      throw std::invalid_argument("self_search: query must be a non-empty single line");
    }
    const auto start = std::chrono::steady_clock::now();
    const std::string prompt =
        prompts::render(prompts::kProvideInformationTemplate, {{"query", query}});
    policy::GenParams params = opts_.gen;
    params.stop_sequences.clear();
    const auto gen = policy_.generate(prompt, params);

    InfoResult out;
    out.source = InfoSourceKind::SelfSearch;
    auto docs = split_documents(gen.text);
    if (docs.empty()) {
      const auto raw = std::string(text::strip(gen.text));
      if (raw.empty()) {
        throw RetrievalError("self_search: empty completion", 0, 1);
      }
      docs = {raw};
      out.flagged = true;
      out.note = "unparsable completion; returned raw text";
    }
    if (docs.size() > top_n) docs.resize(top_n);
    if (opts_.apply_sanitizer) {
      docs = sanitize(docs, opts_.sanitizer);
      out.sanitized = true;
    }
    out.documents = std::move(docs);
    out.latency_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    return out;
  }

 private:
  policy::Policy& policy_;
  SelfSearchOptions opts_;
};

// ---------------------------------------------------------------------------
// Local corpus
// ---------------------------------------------------------------------------

struct CorpusDoc {
  std::string id;
  std::string title;
  std::string text;
};

/// JSONL corpus with simple lexical ranking: the score of a document is the
/// summed term frequency of the query terms; ties order by ascending doc id.
class CorpusSource : public InfoSource {
 public:
  CorpusSource() = default;

  static CorpusSource from_jsonl_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
      throw std::runtime_error("corpus: cannot open " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return from_jsonl(ss.str());
  }

  static CorpusSource from_jsonl(std::string_view jsonl) {
    CorpusSource c;
    std::size_t pos = 0;
    while (pos <= jsonl.size()) {
      const std::size_t eol = std::min(jsonl.find('\n', pos), jsonl.size());
      std::string_view line = text::strip(jsonl.substr(pos, eol - pos));
      if (!line.empty()) {
        const auto doc = nlohmann::json::parse(line);
        c.docs_.push_back({doc.value("id", ""), doc.value("title", ""), doc.value("text", "")});
      }
      if (eol >= jsonl.size()) break;
      pos = eol + 1;
    }
    return c;
  }

  void add(CorpusDoc doc) { docs_.push_back(std::move(doc)); }
  std::size_t size() const { return docs_.size(); }

  InfoSourceKind kind() const override { return InfoSourceKind::Corpus; }

  InfoResult fetch(const std::string& query, std::size_t top_n) override {
    if (docs_.empty()) {
      throw std::runtime_error("corpus: no documents loaded");
    }
    const auto start = std::chrono::steady_clock::now();
    const auto terms = tokenize(query);
    struct Scored {
      double score;
      std::size_t index;
    };
    std::vector<Scored> scored;
    for (std::size_t i = 0; i < docs_.size(); ++i) {
      const double s = score(terms, docs_[i]);
      if (s > 0.0) scored.push_back({s, i});
    }
    std::sort(scored.begin(), scored.end(), [this](const Scored& x, const Scored& y) {
      if (x.score != y.score) return x.score > y.score;
      return docs_[x.index].id < docs_[y.index].id;
    });

    InfoResult out;
    out.source = InfoSourceKind::Corpus;
    for (std::size_t i = 0; i < scored.size() && out.documents.size() < top_n; ++i) {
      const auto& d = docs_[scored[i].index];
      out.documents.push_back(d.title.empty() ? d.text : d.title + ". " + d.text);
    }
    if (out.documents.empty()) {
      out.flagged = true;
      out.note = "no overlapping terms";
    }
    out.documents = sanitize(out.documents);
    out.sanitized = true;
    out.latency_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    return out;
  }

 private:
  static std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
      if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
        cur.push_back(c);
      } else if (c >= 'A' && c <= 'Z') {
        cur.push_back(static_cast<char>(c - 'A' + 'a'));
      } else if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    }
    if (!cur.empty()) out.push_back(cur);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  static double score(const std::vector<std::string>& terms, const CorpusDoc& d) {
    const std::string haystack = text::to_lower(d.title + " " + d.text);
    const auto doc_terms = [&] {
      std::vector<std::string> out;
      std::string cur;
      for (char c : haystack) {
        if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
          cur.push_back(c);
        } else if (!cur.empty()) {
          out.push_back(cur);
          cur.clear();
        }
      }
      if (!cur.empty()) out.push_back(cur);
      return out;
    }();
    double s = 0.0;
    for (const auto& t : terms) {
      for (const auto& dt : doc_terms) {
        if (dt == t) s += 1.0;
      }
    }
    return s;
  }

  std::vector<CorpusDoc> docs_;
};

// ---------------------------------------------------------------------------
// Web search
// ---------------------------------------------------------------------------

struct WebSearchOptions {
  std::string base_url;            // e.g. "https://search.example.com"
  std::string path = "/search";    // GET path; query appended as ?q=...&num=...
  std::string api_key_env = "SSRL_SEARCH_API_KEY";
  int max_attempts = 3;
  int backoff_base_ms = 250;
  int timeout_seconds = 30;
  SanitizeOptions sanitizer;
};

/// HTTP JSON search client. Expects {"results": [{"title": ..., "snippet":
/// ...}, ...]} and returns title + snippet per document.
class WebSearchSource : public InfoSource {
 public:
  explicit WebSearchSource(WebSearchOptions opts) : opts_(std::move(opts)) {
    if (opts_.base_url.empty()) {
      throw std::invalid_argument("web_search: endpoint not configured");
    }
  }

  InfoSourceKind kind() const override { return InfoSourceKind::Web; }

  InfoResult fetch(const std::string& query, std::size_t top_n) override {
    const auto start = std::chrono::steady_clock::now();
    int attempt = 0;
    std::string body;
    for (;;) {
      ++attempt;
      httplib::Client client(opts_.base_url);
      client.set_connection_timeout(opts_.timeout_seconds, 0);
      client.set_read_timeout(opts_.timeout_seconds, 0);
      httplib::Headers headers;
      if (const char* key = std::getenv(opts_.api_key_env.c_str()); key && *key) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
      }
      httplib::Params params{{"q", query}, {"num", std::to_string(top_n)}};
      auto res = client.Get(opts_.path, params, headers);
      if (res && res->status == 200) {
        body = res->body;
        break;
      }
      const int status = res ? res->status : 0;
      const bool retryable = !res || status == 429 || status >= 500;
      if (!retryable || attempt >= opts_.max_attempts) {
        throw RetrievalError("web_search: request failed with status " + std::to_string(status),
                             status, attempt);
      }
      std::this_thread::sleep_for(
          std::chrono::milliseconds(opts_.backoff_base_ms * (1LL << (attempt - 1))));
    }

    InfoResult out;
    out.source = InfoSourceKind::Web;
    out.documents = parse_results(body, top_n);
    out.documents = sanitize(out.documents, opts_.sanitizer);
    out.sanitized = true;
    out.latency_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    return out;
  }

  static std::vector<std::string> parse_results(const std::string& body, std::size_t top_n) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw RetrievalError(std::string("web_search: invalid JSON response: ") + e.what(), 200, 1);
    }
    std::vector<std::string> docs;
    if (doc.contains("results") && doc["results"].is_array()) {
      for (const auto& r : doc["results"]) {
        if (docs.size() >= top_n) break;
        const std::string title = r.value("title", "");
        const std::string snippet = r.value("snippet", "");
        if (title.empty() && snippet.empty()) continue;
        docs.push_back(title.empty() ? snippet : (snippet.empty() ? title : title + ". " + snippet));
      }
    }
    return docs;
  }

 private:
  WebSearchOptions opts_;
};

/// Recorded-fixture search for offline runs: a JSONL file of
/// {"query": ..., "results": [{"title": ..., "snippet": ...}]} entries.
/// Unknown queries fall back to a deterministic synthetic document so mock
/// pipelines never stall.
class FixtureWebSource : public InfoSource {
 public:
  FixtureWebSource() = default;

  static FixtureWebSource from_jsonl_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
      throw std::runtime_error("web fixture: cannot open " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return from_jsonl(ss.str());
  }

  static FixtureWebSource from_jsonl(std::string_view jsonl) {
    FixtureWebSource f;
    std::size_t pos = 0;
    while (pos <= jsonl.size()) {
      const std::size_t eol = std::min(jsonl.find('\n', pos), jsonl.size());
      std::string_view line = text::strip(jsonl.substr(pos, eol - pos));
      if (!line.empty()) {
        const auto entry = nlohmann::json::parse(line);
        std::vector<std::string> docs;
        for (const auto& r : entry.value("results", nlohmann::json::array())) {
          const std::string title = r.value("title", "");
          const std::string snippet = r.value("snippet", "");
          docs.push_back(title.empty() ? snippet
                                       : (snippet.empty() ? title : title + ". " + snippet));
        }
        f.entries_[entry.value("query", "")] = std::move(docs);
      }
      if (eol >= jsonl.size()) break;
      pos = eol + 1;
    }
    return f;
  }

  void add(std::string query, std::vector<std::string> docs) {
    entries_[std::move(query)] = std::move(docs);
  }

  InfoSourceKind kind() const override { return InfoSourceKind::Web; }

  InfoResult fetch(const std::string& query, std::size_t top_n) override {
    InfoResult out;
    out.source = InfoSourceKind::Web;
    const auto it = entries_.find(query);
    if (it != entries_.end()) {
      out.documents = it->second;
      if (out.documents.size() > top_n) out.documents.resize(top_n);
    } else {
      out.documents = {"External search result for: " + query};
      out.flagged = true;
      out.note = "query not in fixture; synthetic result";
    }
    out.documents = sanitize(out.documents);
    out.sanitized = true;
    return out;
  }

 private:
  std::map<std::string, std::vector<std::string>> entries_;
};

}  // namespace selfsearch::retrieval
