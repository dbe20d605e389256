#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "selfsearch/http_policy.hpp"
#include "selfsearch/policy.hpp"

using namespace selfsearch;
using policy::FinishReason;
using policy::GenParams;
using policy::Generation;
using policy::MockPolicy;

TEST_CASE("mock rules return canned text verbatim") {
  MockPolicy mock;
  mock.add_rule("capital of France", {"<answer>Paris</answer>", FinishReason::Stop, {}});
  mock.set_fallback({"fallback", FinishReason::Stop, {}});
  GenParams p;
  CHECK(mock.generate("What is the capital of France?", p).text == "<answer>Paris</answer>");
  CHECK(mock.generate("unrelated", p).text == "fallback");
}

TEST_CASE("mock is a pure function of prompt and params") {
  MockPolicy mock;
  mock.add_rule("q", {"out", FinishReason::Stop, {}});
  GenParams p;
  const auto a = mock.generate("q", p);
  const auto b = mock.generate("q", p);
  CHECK(a.text == b.text);
  CHECK(a.finish_reason == b.finish_reason);
}

TEST_CASE("seed selects among rule variants deterministically") {
  MockPolicy mock;
  mock.add_rule("q", std::vector<Generation>{{"first", FinishReason::Stop, {}},
                                             {"second", FinishReason::Stop, {}}});
  GenParams p;
  p.seed = 0;
  CHECK(mock.generate("q", p).text == "first");
  p.seed = 1;
  CHECK(mock.generate("q", p).text == "second");
  p.seed = 2;
  CHECK(mock.generate("q", p).text == "first");
}

TEST_CASE("client-side stop sequences truncate and set the reason") {
  MockPolicy mock;
  mock.add_rule("q", {"some text</search>extra", FinishReason::Stop, {}});
  GenParams p;
  p.stop_sequences = {"</search>"};
  const auto g = mock.generate("q", p);
  CHECK(g.text == "some text");
  CHECK(g.finish_reason == FinishReason::StopSequence);
}

TEST_CASE("max_tokens forces a length finish") {
  MockPolicy mock;
  mock.add_rule("q", {"one two three four", FinishReason::Stop, {}});
  GenParams p;
  p.max_tokens = 1;
  const auto g = mock.generate("q", p);
  CHECK(g.text == "one");
  CHECK(g.finish_reason == FinishReason::Length);
}

TEST_CASE("batch results preserve input order and isolate failures") {
  MockPolicy mock;
  mock.add_rule("p1", {"r1", FinishReason::Stop, {}});
  mock.add_rule("p2", {"r2", FinishReason::Stop, {}});
  mock.add_rule("p3", {"r3", FinishReason::Stop, {}});
  mock.fail_on("p2");

  const std::vector<std::string> prompts = {"p1", "p2", "p3"};
  GenParams p;
  const auto results = policy::batch_generate(mock, prompts, p, 2);
  REQUIRE(results.size() == 3);
  CHECK(results[0].ok());
  CHECK(results[0].generation->text == "r1");
  CHECK_FALSE(results[1].ok());
  CHECK(results[1].error.find("p2") != std::string::npos);
  CHECK(results[2].ok());
  CHECK(results[2].generation->text == "r3");
}

TEST_CASE("batch with limit 1 equals sequential calls") {
  MockPolicy mock;
  mock.add_rule("", {"same", FinishReason::Stop, {}});
  GenParams p;
  const std::vector<std::string> prompts = {"a", "b", "c"};
  const auto batched = policy::batch_generate(mock, prompts, p, 1);
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    REQUIRE(batched[i].ok());
    REQUIRE(batched[i].generation->text == mock.generate(prompts[i], p).text);
  }
  CHECK_THROWS_AS(policy::batch_generate(mock, prompts, p, 0), std::invalid_argument);
}

TEST_CASE("procedural self-search mock emits valid trajectories") {
  policy::SelfSearchMock mock;
  GenParams p;
  p.seed = 3;
  const auto g = mock.generate(std::string(prompts::kSearchTemplate) + "Who wrote Hamlet?", p);
  CHECK(g.text.find("<think>") == 0);
  CHECK(g.text.find("<answer>") != std::string::npos);
  CHECK(g.entropy_trace.has_value());
  const auto again = mock.generate(std::string(prompts::kSearchTemplate) + "Who wrote Hamlet?", p);
  CHECK(g.text == again.text);
}

namespace {

// Minimal OpenAI-style chat completion server for client tests.
class LocalServer {
 public:
  explicit LocalServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

nlohmann::json chat_response(const std::string& content, const std::string& finish) {
  nlohmann::json j;
  j["choices"] = nlohmann::json::array();
  nlohmann::json choice;
  choice["message"] = {{"role", "assistant"}, {"content", content}};
  choice["finish_reason"] = finish;
  j["choices"].push_back(choice);
  return j;
}

}  // namespace

TEST_CASE("http policy round-trips a chat completion") {
  std::string seen_body;
  LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
    seen_body = req.body;
    res.set_content(chat_response("<answer>ok</answer>", "stop").dump(), "application/json");
  });

  policy::HttpPolicyOptions opts;
  opts.base_url = server.url();
  opts.model = "test-model";
  opts.request_logprobs = false;
  policy::HttpPolicy client(opts);

  GenParams p;
  p.temperature = 0.0;
  p.max_tokens = 64;
  p.stop_sequences = {"</answer>"};
  const auto g = client.generate("hello", p);
  CHECK(g.text == "<answer>ok");  // client-side stop scan
  CHECK(g.finish_reason == FinishReason::StopSequence);

  const auto req = nlohmann::json::parse(seen_body);
  CHECK(req["model"] == "test-model");
  CHECK(req["temperature"] == 0.0);
  CHECK(req["max_tokens"] == 64);
  CHECK(req["stop"][0] == "</answer>");
  CHECK(req["messages"][0]["content"] == "hello");
}

TEST_CASE("http policy retries retryable statuses with a cap") {
  std::atomic<int> calls{0};
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    const int n = ++calls;
    if (n < 3) {
      res.status = 503;
      res.set_content("overloaded", "text/plain");
    } else {
      res.set_content(chat_response("recovered", "stop").dump(), "application/json");
    }
  });

  policy::HttpPolicyOptions opts;
  opts.base_url = server.url();
  opts.request_logprobs = false;
  opts.max_attempts = 3;
  opts.backoff_base_ms = 1;
  policy::HttpPolicy client(opts);
  const auto g = client.generate("x", GenParams::eval_defaults());
  CHECK(g.text == "recovered");
  CHECK(calls == 3);
}

TEST_CASE("http policy surfaces exhausted retries with attempt count") {
  std::atomic<int> calls{0};
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 429;
    res.set_content("slow down", "text/plain");
  });

  policy::HttpPolicyOptions opts;
  opts.base_url = server.url();
  opts.request_logprobs = false;
  opts.max_attempts = 2;
  opts.backoff_base_ms = 1;
  policy::HttpPolicy client(opts);
  try {
    client.generate("x", GenParams::eval_defaults());
    FAIL("expected PolicyError");
  } catch (const policy::PolicyError& e) {
    CHECK(e.retryable);
    CHECK(e.attempts == 2);
    CHECK(e.status == 429);
  }
  CHECK(calls == 2);
}

TEST_CASE("http policy rejects non-retryable statuses immediately") {
  LocalServer server([](const httplib::Request&, httplib::Response& res) {
    res.status = 401;
    res.set_content("no key", "text/plain");
  });
  policy::HttpPolicyOptions opts;
  opts.base_url = server.url();
  opts.request_logprobs = false;
  policy::HttpPolicy client(opts);
  CHECK_THROWS_AS(client.generate("x", GenParams::eval_defaults()), policy::PolicyError);
}

TEST_CASE("http policy raises a protocol error on malformed responses") {
  LocalServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content("not json", "application/json");
  });
  policy::HttpPolicyOptions opts;
  opts.base_url = server.url();
  opts.request_logprobs = false;
  policy::HttpPolicy client(opts);
  CHECK_THROWS_AS(client.generate("x", GenParams::eval_defaults()), policy::PolicyError);
}

TEST_CASE("http policy builds an entropy trace from top logprobs") {
  LocalServer server([](const httplib::Request&, httplib::Response& res) {
    nlohmann::json j = chat_response("ab", "stop");
    nlohmann::json content = nlohmann::json::array();
    // Token "a": uniform over two candidates -> entropy ln 2.
    content.push_back({{"token", "a"},
                       {"logprob", -0.6931},
                       {"top_logprobs", nlohmann::json::array({
                            {{"token", "a"}, {"logprob", -0.6931}},
                            {{"token", "x"}, {"logprob", -0.6931}},
                        })}});
    // Token "b": a certain candidate -> entropy 0.
    content.push_back({{"token", "b"},
                       {"logprob", 0.0},
                       {"top_logprobs", nlohmann::json::array({
                            {{"token", "b"}, {"logprob", 0.0}},
                        })}});
    j["choices"][0]["logprobs"] = {{"content", content}};
    res.set_content(j.dump(), "application/json");
  });

  policy::HttpPolicyOptions opts;
  opts.base_url = server.url();
  policy::HttpPolicy client(opts);
  const auto g = client.generate("x", GenParams::eval_defaults());
  REQUIRE(g.entropy_trace.has_value());
  REQUIRE(g.entropy_trace->size() == 2);
  CHECK((*g.entropy_trace)[0].entropy == Catch::Approx(std::log(2.0)).margin(1e-3));
  CHECK((*g.entropy_trace)[1].entropy == Catch::Approx(0.0).margin(1e-12));
  CHECK((*g.entropy_trace)[0].span == CharSpan{0, 1});
  CHECK((*g.entropy_trace)[1].span == CharSpan{1, 2});
}
