#pragma once

/**
 * OpenAI-compatible HTTP backend for Policy.
 *
 * Speaks chat or plain completions against a configurable base URL, with the
 * API key taken from an environment variable. Retries 429/5xx with
 * exponential backoff (base * 2^attempt, no jitter, so retry timing is
 * deterministic). Per-token entropy is approximated from the returned
 * top-logprobs, renormalized over the returned candidates; exact distribution
 * entropy is not available over standard completion APIs, so traces built
 * this way are a documented approximation.
 */

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "selfsearch/policy.hpp"

namespace selfsearch::policy {

/// Backend failure after retries. `retryable` reports whether the final
/// status was in the retry class; `attempts` how many requests were sent.
struct PolicyError : std::runtime_error {
  PolicyError(const std::string& msg, bool retryable_, int attempts_, int status_)
      : std::runtime_error(msg), retryable(retryable_), attempts(attempts_), status(status_) {}
  bool retryable = false;
  int attempts = 0;
  int status = 0;
};

struct HttpPolicyOptions {
  std::string base_url = "http://127.0.0.1:8000";
  std::string model;
  std::string api_key_env = "SSRL_API_KEY";
  std::string path = "/v1/chat/completions";
  bool chat = true;               // chat message payload vs raw prompt
  bool request_logprobs = true;
  int top_logprobs = 20;          // entropy approximation width
  int max_attempts = 3;
  int backoff_base_ms = 250;
  int timeout_seconds = 120;
};

class HttpPolicy : public Policy {
 public:
  explicit HttpPolicy(HttpPolicyOptions opts) : opts_(std::move(opts)) {}

  Generation generate(const std::string& prompt, const GenParams& params) override {
    nlohmann::json req;
    req["model"] = opts_.model;
    req["temperature"] = params.temperature;
    req["top_p"] = params.top_p;
    req["max_tokens"] = params.max_tokens;
    if (!params.stop_sequences.empty()) req["stop"] = params.stop_sequences;
    if (params.seed) req["seed"] = *params.seed;
    if (opts_.request_logprobs) {
      req["logprobs"] = true;
      req["top_logprobs"] = opts_.top_logprobs;
    }
    if (opts_.chat) {
      req["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
    } else {
      req["prompt"] = prompt;
    }

    const std::string body = req.dump();
    std::string response_body;
    int status = 0;
    int attempt = 0;
    for (;;) {
      ++attempt;
      httplib::Client client(opts_.base_url);
      client.set_connection_timeout(opts_.timeout_seconds, 0);
      client.set_read_timeout(opts_.timeout_seconds, 0);
      httplib::Headers headers;
      if (const char* key = std::getenv(opts_.api_key_env.c_str()); key && *key) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
      }
      auto res = client.Post(opts_.path, headers, body, "application/json");
      if (res) {
        status = res->status;
        if (status == 200) {
          response_body = res->body;
          break;
        }
        const bool retryable = status == 429 || status >= 500;
        if (!retryable || attempt >= opts_.max_attempts) {
          throw PolicyError("backend returned status " + std::to_string(status), retryable,
                            attempt, status);
        }
      } else {
        if (attempt >= opts_.max_attempts) {
          throw PolicyError("transport failure: " + httplib::to_string(res.error()), true,
                            attempt, 0);
        }
      }
      std::this_thread::sleep_for(
          std::chrono::milliseconds(opts_.backoff_base_ms * (1LL << (attempt - 1))));
    }

    return parse_response(response_body, params);
  }

 private:
  Generation parse_response(const std::string& body, const GenParams& params) const {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw PolicyError(std::string("protocol error: invalid JSON from backend: ") + e.what(),
                        false, 1, 200);
    }
    if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty()) {
      throw PolicyError("protocol error: response has no choices", false, 1, 200);
    }
    const auto& choice = doc["choices"][0];

    Generation g;
    if (opts_.chat) {
      if (!choice.contains("message") || !choice["message"].contains("content")) {
        throw PolicyError("protocol error: chat choice has no message content", false, 1, 200);
      }
      g.text = choice["message"]["content"].is_null()
                   ? std::string()
                   : choice["message"]["content"].get<std::string>();
    } else {
      if (!choice.contains("text")) {
        throw PolicyError("protocol error: completion choice has no text", false, 1, 200);
      }
      g.text = choice["text"].get<std::string>();
    }

    const std::string finish = choice.value("finish_reason", "stop");
    g.finish_reason = finish == "length" ? FinishReason::Length : FinishReason::Stop;

    if (choice.contains("logprobs") && choice["logprobs"].is_object()) {
      const auto& lp = choice["logprobs"];
      if (lp.contains("content") && lp["content"].is_array()) {
        std::vector<EntropyPoint> trace;
        std::size_t offset = 0;
        std::size_t index = 0;
        for (const auto& tok : lp["content"]) {
          const std::string token_text = tok.value("token", "");
          double entropy = 0.0;
          if (tok.contains("top_logprobs") && tok["top_logprobs"].is_array() &&
              !tok["top_logprobs"].empty()) {
            entropy = renormalized_entropy(tok["top_logprobs"]);
          }
          const std::size_t begin = offset;
          offset = std::min(offset + token_text.size(), g.text.size());
          trace.push_back({index++, entropy, {begin, offset}});
        }
        g.entropy_trace = std::move(trace);
      }
    }

    return finalize_generation(std::move(g), params.stop_sequences);
  }

  static double renormalized_entropy(const nlohmann::json& top) {
    double max_lp = -1e300;
    for (const auto& cand : top) {
      max_lp = std::max(max_lp, cand.value("logprob", -1e300));
    }
    double z = 0.0;
    for (const auto& cand : top) {
      z += std::exp(cand.value("logprob", -1e300) - max_lp);
    }
    double h = 0.0;
    for (const auto& cand : top) {
      const double p = std::exp(cand.value("logprob", -1e300) - max_lp) / z;
      if (p > 0.0) h -= p * std::log(p);
    }
    return h;
  }

  HttpPolicyOptions opts_;
};

}  // namespace selfsearch::policy
