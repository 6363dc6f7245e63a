#include <gtest/gtest.h>

#include <atomic>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "explainrank/error.hpp"
#include "explainrank/gateway.hpp"
#include "explainrank/hash.hpp"
#include "explainrank/model.hpp"
#include "test_util.hpp"

using namespace explainrank;

namespace {

Messages msgs(const std::string& user) { return {{Role::kSystem, "sys"}, {Role::kUser, user}}; }

ChatRequest req(const std::string& user, int n = 1) {
  ChatRequest r;
  r.messages = msgs(user);
  r.n = n;
  return r;
}

std::vector<std::string> texts(const std::vector<Completion>& cs) {
  std::vector<std::string> out;
  for (const auto& c : cs) out.push_back(c.text);
  return out;
}

// Serves /v1/chat/completions from a script of HTTP statuses; 200 answers
// with one choice per requested sample.
class FakeServer {
 public:
  explicit FakeServer(std::vector<int> statuses) : statuses_(std::move(statuses)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& rq, httplib::Response& rs) {
      const std::size_t i = hits_++;
      {
        std::lock_guard lock(mu_);
        last_body_ = rq.body;
        last_auth_ = rq.get_header_value("Authorization");
      }
      const int status = i < statuses_.size() ? statuses_[i] : 200;
      rs.status = status;
      if (status != 200) {
        rs.set_content("{\"error\":\"scripted failure " + std::to_string(status) + "\"}", "application/json");
        return;
      }
      auto body = nlohmann::json::parse(rq.body);
      nlohmann::json choices = nlohmann::json::array();
      const int n = body.at("n").get<int>();
      for (int k = n - 1; k >= 0; --k)  // reversed on purpose; the client must reorder by index
        choices.push_back({{"index", k},
                           {"message", {{"role", "assistant"}, {"content", "answer " + std::to_string(k)}}},
                           {"finish_reason", k == 0 ? "length" : "stop"}});
      rs.set_content(nlohmann::json{{"choices", choices}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  std::size_t hits() const { return hits_; }
  std::string last_body() const {
    std::lock_guard lock(mu_);
    return last_body_;
  }
  std::string last_auth() const {
    std::lock_guard lock(mu_);
    return last_auth_;
  }

 private:
  std::vector<int> statuses_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<std::size_t> hits_{0};
  mutable std::mutex mu_;
  std::string last_body_, last_auth_;
};

}  // namespace

TEST(Messages, HashIsOverCompactOrderedJson) {
  const auto m = msgs("hello");
  EXPECT_EQ(to_json(m).dump(), R"([{"role":"system","content":"sys"},{"role":"user","content":"hello"}])");
  EXPECT_EQ(prompt_hash(m), sha256_hex(to_json(m).dump()));
  EXPECT_EQ(messages_from_json(nlohmann::json::parse(to_json(m).dump())), m);
}

TEST(ChatRequest, ValidationRejectsBadFields) {
  auto r = req("x");
  EXPECT_NO_THROW(validate(r));
  auto bad = r;
  bad.messages.clear();
  EXPECT_THROW(validate(bad), ValidationError);
  bad = r;
  bad.messages = {{Role::kAssistant, "x"}};
  EXPECT_THROW(validate(bad), ValidationError);
  bad = r;
  bad.top_p = 0;
  EXPECT_THROW(validate(bad), ValidationError);
  bad = r;
  bad.n = 0;
  EXPECT_THROW(validate(bad), ValidationError);
  bad = r;
  bad.temperature = -1;
  EXPECT_THROW(validate(bad), ValidationError);
}

TEST(MockBackend, ExactHashLookup) {
  auto mock = std::make_shared<MockBackend>();
  mock->add(msgs("q"), {"Relevance: 2"});
  Gateway g(mock);
  EXPECT_EQ(texts(g.complete(req("q"))), (std::vector<std::string>{"Relevance: 2"}));
  EXPECT_THROW(g.complete(req("other")), ApiError);
}

TEST(MockBackend, PerIndexVariantsInOrder) {
  auto mock = std::make_shared<MockBackend>();
  std::vector<std::string> variants;
  for (int i = 0; i < 8; ++i) variants.push_back("v" + std::to_string(i));
  mock->add(msgs("q"), variants);
  Gateway g(mock);
  EXPECT_EQ(texts(g.complete(req("q", 8))), variants);
  EXPECT_EQ(texts(g.complete(req("q", 10))).back(), "v1");
}

TEST(MockBackend, RulesThenDefault) {
  auto mock = std::make_shared<MockBackend>();
  mock->add_rule({"alpha", "beta"}, {"both"});
  mock->add_rule({"alpha"}, {"one"});
  mock->set_default({"fallback"});
  Gateway g(mock);
  EXPECT_EQ(g.complete(req("alpha beta"))[0].text, "both");
  EXPECT_EQ(g.complete(req("alpha"))[0].text, "one");
  EXPECT_EQ(g.complete(req("none"))[0].text, "fallback");
}

TEST(MockBackend, DeterministicAcrossCalls) {
  auto mock = std::make_shared<MockBackend>();
  mock->set_default({"a", "b", "c"});
  Gateway g(mock);
  auto r = req("x", 5);
  r.seed = 9;
  EXPECT_EQ(g.complete(r), g.complete(r));
}

TEST(MockBackend, LoadsFixtureFile) {
  testutil::TempDir dir;
  const auto m = msgs("keyed");
  write_file(dir / "mock.jsonl",
             "{\"prompt_hash\":\"" + prompt_hash(m) + "\",\"completions\":[\"by hash\"]}\n"
             "{\"contains\":[\"needle\"],\"completions\":[\"by rule\"]}\n"
             "{\"default\":true,\"completions\":[\"by default\"]}\n");
  Gateway g(load_mock_backend(dir / "mock.jsonl"));
  EXPECT_EQ(g.complete(req("keyed"))[0].text, "by hash");
  EXPECT_EQ(g.complete(req("a needle"))[0].text, "by rule");
  EXPECT_EQ(g.complete(req("zzz"))[0].text, "by default");
  write_file(dir / "bad.jsonl", "{\"completions\":[\"x\"]}\n");
  EXPECT_THROW(load_mock_backend(dir / "bad.jsonl"), ValidationError);
}

TEST(Gateway, RetriesTransientFailuresWithBackoff) {
  int calls = 0;
  auto flaky = std::make_shared<FunctionBackend>([&](const ChatRequest& r) {
    if (++calls <= 2) throw TransientError("flaky", 503);
    return std::vector<Completion>(static_cast<std::size_t>(r.n), Completion{"ok", FinishReason::kStop});
  });
  RetryPolicy policy;
  policy.initial_backoff = std::chrono::milliseconds(100);
  Gateway g(flaky, policy);
  std::vector<long long> sleeps;
  g.set_sleeper([&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); });
  EXPECT_EQ(g.complete(req("x", 2)).size(), 2u);
  EXPECT_EQ(g.stats().retries, 2u);
  EXPECT_EQ(g.stats().attempts, 3u);
  EXPECT_EQ(sleeps, (std::vector<long long>{100, 200}));
}

TEST(Gateway, ExhaustedRetriesIsTransportError) {
  auto dead = std::make_shared<FunctionBackend>(
      [](const ChatRequest&) -> std::vector<Completion> { throw TransientError("down"); });
  RetryPolicy policy;
  policy.max_retries = 2;
  Gateway g(dead, policy);
  g.set_sleeper([](std::chrono::milliseconds) {});
  try {
    g.complete(req("x"));
    FAIL() << "expected TransportError";
  } catch (const TransportError& e) {
    EXPECT_EQ(e.attempts(), 3);
  }
}

TEST(Gateway, TopsUpShortResponsesInOrder) {
  int next = 0;
  auto partial = std::make_shared<FunctionBackend>([&](const ChatRequest& r) {
    std::vector<Completion> out;
    for (int i = 0; i < std::min(r.n, 3); ++i) out.push_back({"s" + std::to_string(next++), FinishReason::kStop});
    return out;
  });
  Gateway g(partial);
  EXPECT_EQ(texts(g.complete(req("x", 7))),
            (std::vector<std::string>{"s0", "s1", "s2", "s3", "s4", "s5", "s6"}));
}

TEST(Gateway, RespectsInFlightCap) {
  std::atomic<int> active{0}, peak{0};
  auto slow = std::make_shared<FunctionBackend>([&](const ChatRequest&) {
    int now = ++active;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --active;
    return std::vector<Completion>{{"ok", FinishReason::kStop}};
  });
  Gateway g(slow, {}, 3);
  parallel_for(24, 12, [&](std::size_t) { g.complete(req("x")); });
  EXPECT_LE(peak.load(), 3);
  EXPECT_LE(g.peak_in_flight(), 3u);
  EXPECT_EQ(g.stats().requests, 24u);
}

TEST(ParallelFor, RethrowsLowestIndexFailure) {
  try {
    parallel_for(50, 1, [](std::size_t i) {
      if (i == 7 || i == 30) throw std::runtime_error("fail " + std::to_string(i));
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "fail 7");
  }
  std::vector<int> hit(100, 0);
  parallel_for(100, 8, [&](std::size_t i) { hit[i] = 1; });
  EXPECT_EQ(std::count(hit.begin(), hit.end(), 1), 100);
}

TEST(HttpBackend, RecoversAfterTwoServerErrors) {
  FakeServer server({500, 500, 200});
  HttpBackendConfig cfg;
  cfg.base_url = server.base_url();
  cfg.model = "student";
  cfg.api_key = "sekret";
  Gateway g(std::make_shared<HttpChatBackend>(cfg));
  g.set_sleeper([](std::chrono::milliseconds) {});
  auto r = req("hello", 3);
  r.seed = 42;
  auto out = g.complete(r);
  EXPECT_EQ(texts(out), (std::vector<std::string>{"answer 0", "answer 1", "answer 2"}));
  EXPECT_EQ(out[0].finish, FinishReason::kLength);
  EXPECT_EQ(g.stats().retries, 2u);
  EXPECT_EQ(server.hits(), 3u);
  EXPECT_EQ(server.last_auth(), "Bearer sekret");
  auto body = nlohmann::json::parse(server.last_body());
  EXPECT_EQ(body["model"], "student");
  EXPECT_EQ(body["n"], 3);
  EXPECT_EQ(body["seed"], 42);
  EXPECT_EQ(body["messages"][1]["content"], "hello");
}

TEST(HttpBackend, ClientErrorIsApiErrorWithBody) {
  FakeServer server({400});
  HttpBackendConfig cfg;
  cfg.base_url = server.base_url();
  cfg.model = "m";
  Gateway g(std::make_shared<HttpChatBackend>(cfg));
  try {
    g.complete(req("x"));
    FAIL();
  } catch (const ApiError& e) {
    EXPECT_EQ(e.status(), 400);
    EXPECT_NE(e.body_excerpt().find("scripted failure 400"), std::string::npos);
  }
  EXPECT_EQ(server.hits(), 1u);
}

TEST(HttpBackend, UnreachableServerIsTransportError) {
  HttpBackendConfig cfg;
  cfg.base_url = "http://127.0.0.1:1/v1";
  cfg.model = "m";
  cfg.connect_timeout = std::chrono::milliseconds(200);
  RetryPolicy policy;
  policy.max_retries = 1;
  Gateway g(std::make_shared<HttpChatBackend>(cfg), policy);
  g.set_sleeper([](std::chrono::milliseconds) {});
  EXPECT_THROW(g.complete(req("x")), TransportError);
}

TEST(HttpBackend, RejectsMissingConfiguration) {
  EXPECT_THROW(HttpChatBackend(HttpBackendConfig{}), ValidationError);
  HttpBackendConfig cfg;
  cfg.base_url = "http://localhost:8000/v1";
  EXPECT_THROW(HttpChatBackend{cfg}, ValidationError);
}
