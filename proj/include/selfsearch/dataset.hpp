#pragma once

/**
 * Dataset ingestion, episode serialization, and run manifests.
 *
 * Benchmark files arrive as JSONL with heterogeneous field names; a FieldMap
 * (data-only config) normalizes them into DatasetRecord at ingestion. Episode
 * export is JSONL with a stable field order so reruns diff cleanly. The
 * RunManifest snapshots config, seeds, redacted backend endpoints, and
 * content hashes of the inputs; reruns with an equal manifest and the mock
 * backend are bit-identical.
 */

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfsearch/common.hpp"
#include "selfsearch/metrics.hpp"
#include "selfsearch/reward.hpp"
#include "selfsearch/rollout.hpp"

namespace selfsearch::dataset {

using json = nlohmann::ordered_json;

struct DatasetRecord {
  std::string question_id;
  std::string question;
  std::vector<std::string> golds;
  reward::MatchMode match_mode = reward::MatchMode::ExactMatch;
};

/// Field-name mapping for heterogeneous benchmark formats. Lists are tried in
/// order; the first present field wins.
struct FieldMap {
  std::vector<std::string> id_fields = {"id", "question_id", "qid"};
  std::vector<std::string> question_fields = {"question", "query", "prompt"};
  std::vector<std::string> golds_fields = {"golds", "golden_answers", "answers", "answer",
                                           "gold"};
  std::string match_mode_field = "match_mode";
};

namespace detail {

inline const json* find_field(const json& obj, const std::vector<std::string>& names) {
  for (const auto& n : names) {
    if (obj.contains(n)) return &obj.at(n);
  }
  return nullptr;
}

inline std::vector<std::string> as_string_list(const json& v) {
  std::vector<std::string> out;
  if (v.is_array()) {
    for (const auto& e : v) {
      if (e.is_string()) out.push_back(e.get<std::string>());
    }
  } else if (v.is_string()) {
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace detail

/// Parse one dataset line. Throws std::invalid_argument on records missing a
/// question or gold answers.
inline DatasetRecord parse_record(const json& obj, const FieldMap& map = {},
                                  reward::MatchMode default_mode = reward::MatchMode::ExactMatch) {
  DatasetRecord rec;
  rec.match_mode = default_mode;
  if (const json* id = detail::find_field(obj, map.id_fields)) {
    rec.question_id = id->is_string() ? id->get<std::string>() : id->dump();
  }
  const json* q = detail::find_field(obj, map.question_fields);
  if (!q || !q->is_string()) {
    throw std::invalid_argument("dataset record has no question field");
  }
  rec.question = q->get<std::string>();
  const json* g = detail::find_field(obj, map.golds_fields);
  if (g) rec.golds = detail::as_string_list(*g);
  if (rec.golds.empty()) {
    throw std::invalid_argument("dataset record has no gold answers");
  }
  if (obj.contains(map.match_mode_field) && obj.at(map.match_mode_field).is_string()) {
    const std::string m = obj.at(map.match_mode_field).get<std::string>();
    if (m == "substring") {
      rec.match_mode = reward::MatchMode::SubstringMatch;
    } else if (m == "em" || m == "exact") {
      rec.match_mode = reward::MatchMode::ExactMatch;
    }
  }
  return rec;
}

struct LoadStats {
  std::size_t parsed = 0;
  std::size_t skipped = 0;
};

/// Load a JSONL dataset, skipping malformed lines (counted in stats).
inline std::vector<DatasetRecord> load_jsonl(std::istream& in, LoadStats& stats,
                                             const FieldMap& map = {},
                                             reward::MatchMode default_mode =
                                                 reward::MatchMode::ExactMatch) {
  std::vector<DatasetRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto stripped = text::strip(line);
    if (stripped.empty()) continue;
    try {
      auto rec = parse_record(json::parse(stripped), map, default_mode);
      if (rec.question_id.empty()) rec.question_id = "line-" + std::to_string(line_no);
      out.push_back(std::move(rec));
      ++stats.parsed;
    } catch (const std::exception&) {
      ++stats.skipped;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Episode serialization
// ---------------------------------------------------------------------------

inline json usage_to_json(const metrics::TokenUsage& u) {
  json j;
  j["total_tokens"] = u.total_tokens;
  j["thinking_tokens"] = u.thinking_tokens;
  j["search_tokens"] = u.search_tokens;
  j["information_tokens"] = u.information_tokens;
  j["answer_tokens"] = u.answer_tokens;
  j["approximate"] = u.approximate;
  return j;
}

/// One episode as a stable-field-order JSON object (one JSONL row).
inline json episode_to_json(const std::string& question_id, rollout::RolloutMode mode,
                            const rollout::Episode& ep, const reward::RewardBreakdown& score) {
  json j;
  j["question_id"] = question_id;
  j["mode"] = std::string(rollout::mode_name(mode));
  j["trajectory_text"] = ep.trajectory.source;
  j["answer"] = ep.final_answer.has_value() ? json(*ep.final_answer) : json(nullptr);
  j["correct"] = score.correct;
  j["format_score"] = score.format_score;
  j["composite"] = score.composite;
  j["usage"] = usage_to_json(ep.usage);
  json turns = json::array();
  for (const auto& t : ep.per_turn) {
    json tj;
    tj["query"] = t.query;
    tj["info_source"] = std::string(retrieval::source_name(t.info_source));
    tj["documents"] = t.documents;
    tj["entropy_slope"] = t.entropy_slope.has_value() ? json(*t.entropy_slope) : json(nullptr);
    turns.push_back(std::move(tj));
  }
  j["per_turn"] = std::move(turns);
  if (!ep.errors.empty()) j["errors"] = ep.errors;
  return j;
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

namespace detail {

/// SHA-1, here for git-style content addressing of manifest inputs.
class Sha1 {
 public:
  void update(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    total_ += len;
    while (len > 0) {
      const std::size_t take = std::min(len, std::size_t(64) - buffered_);
      std::copy(p, p + take, buffer_.begin() + static_cast<std::ptrdiff_t>(buffered_));
      buffered_ += take;
      p += take;
      len -= take;
      if (buffered_ == 64) {
        process(buffer_.data());
        buffered_ = 0;
      }
    }
  }

  std::string hex_digest() {
    std::array<unsigned char, 64> pad{};
    pad[0] = 0x80;
    const std::uint64_t bits = total_ * 8;
    const std::size_t rem = buffered_;
    const std::size_t pad_len = rem < 56 ? 56 - rem : 120 - rem;
    update(pad.data(), pad_len);
    unsigned char len_bytes[8];
    for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<unsigned char>(bits >> (56 - 8 * i));
    update(len_bytes, 8);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (std::uint32_t word : h_) {
      for (int shift = 28; shift >= 0; shift -= 4) out.push_back(hex[(word >> shift) & 0xF]);
    }
    return out;
  }

 private:
  static std::uint32_t rol(std::uint32_t v, int n) { return (v << n) | (v >> (32 - n)); }

  void process(const unsigned char* block) {
    std::uint32_t w[80];
    for (int i = 0; i < 16; ++i) {
      w[i] = (std::uint32_t(block[i * 4]) << 24) | (std::uint32_t(block[i * 4 + 1]) << 16) |
             (std::uint32_t(block[i * 4 + 2]) << 8) | std::uint32_t(block[i * 4 + 3]);
    }
    for (int i = 16; i < 80; ++i) w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
    std::uint32_t a = h_[0], b = h_[1], c = h_[2], d = h_[3], e = h_[4];
    for (int i = 0; i < 80; ++i) {
      std::uint32_t f, k;
      if (i < 20) {
        f = (b & c) | (~b & d);
        k = 0x5A827999;
      } else if (i < 40) {
        f = b ^ c ^ d;
        k = 0x6ED9EBA1;
      } else if (i < 60) {
        f = (b & c) | (b & d) | (c & d);
        k = 0x8F1BBCDC;
      } else {
        f = b ^ c ^ d;
        k = 0xCA62C1D6;
      }
      const std::uint32_t tmp = rol(a, 5) + f + e + k + w[i];
      e = d;
      d = c;
      c = rol(b, 30);
      b = a;
      a = tmp;
    }
    h_[0] += a;
    h_[1] += b;
    h_[2] += c;
    h_[3] += d;
    h_[4] += e;
  }

  std::array<std::uint32_t, 5> h_ = {0x67452301, 0xEFCDAB89, 0x98BADCFE, 0x10325476, 0xC3D2E1F0};
  std::array<unsigned char, 64> buffer_{};
  std::size_t buffered_ = 0;
  std::uint64_t total_ = 0;
};

}  // namespace detail

/// Git blob hash of a byte string: sha1("blob <len>\0" + content).
inline std::string content_hash(std::string_view content) {
  detail::Sha1 sha;
  const std::string header = "blob " + std::to_string(content.size());
  sha.update(header.data(), header.size() + 1);  // trailing NUL included
  sha.update(content.data(), content.size());
  return sha.hex_digest();
}

struct RunManifest {
  json config;                     // full flag/config snapshot
  std::uint64_t seed = 0;
  std::string backend_url;         // endpoint only; keys never recorded
  std::string model;
  std::string api_key_env;         // the variable NAME, not its value
  std::vector<std::pair<std::string, std::string>> inputs;  // (path, content hash)

  json to_json() const {
    json j;
    j["config"] = config;
    j["seed"] = seed;
    json backend;
    backend["url"] = backend_url;
    backend["model"] = model;
    backend["api_key_env"] = api_key_env;
    j["backend"] = backend;
    json ins = json::array();
    for (const auto& [path, hash] : inputs) {
      json e;
      e["path"] = path;
      e["hash"] = hash;
      ins.push_back(std::move(e));
    }
    j["inputs"] = std::move(ins);
    return j;
  }
};

inline std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open for hashing: " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return content_hash(ss.str());
}

}  // namespace selfsearch::dataset
