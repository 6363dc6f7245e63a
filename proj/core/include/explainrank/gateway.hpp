#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace explainrank {

enum class Role { kSystem, kUser, kAssistant };

std::string to_string(Role role);

struct Message {
  Role role = Role::kUser;
  std::string content;

  bool operator==(const Message&) const = default;
};

using Messages = std::vector<Message>;

nlohmann::ordered_json to_json(const Messages& messages);
Messages messages_from_json(const nlohmann::json& j);

/// SHA-256 over the compact JSON form of the messages. This is the key used
/// by mock fixtures.
std::string prompt_hash(const Messages& messages);

struct ChatRequest {
  Messages messages;
  double temperature = 0.0;
  double top_p = 1.0;
  int n = 1;
  int max_tokens = 1024;
  std::optional<std::uint64_t> seed;
};

/// Throws ValidationError when the request breaks its invariants.
void validate(const ChatRequest& request);

enum class FinishReason { kStop, kLength, kError };

struct Completion {
  std::string text;
  FinishReason finish = FinishReason::kStop;

  bool operator==(const Completion&) const = default;
};

/// Thrown by backends for failures worth retrying (connection errors,
/// 408/429/5xx).
class TransientError : public std::runtime_error {
 public:
  explicit TransientError(const std::string& what, int status = 0)
      : std::runtime_error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

/// One round trip to an inference server. May return fewer completions
/// than requested; the Gateway tops up.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::vector<Completion> send(const ChatRequest& request) = 0;
  virtual std::string name() const = 0;
};

struct HttpBackendConfig {
  std::string base_url;  // e.g. http://localhost:8000/v1
  std::string model;
  std::string api_key;   // sent as a bearer token when non-empty
  std::chrono::milliseconds connect_timeout{5000};
  std::chrono::milliseconds read_timeout{120000};
};

/// POSTs {base_url}/chat/completions with the usual chat-completions body.
class HttpChatBackend final : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpBackendConfig config);
  std::vector<Completion> send(const ChatRequest& request) override;
  std::string name() const override { return "http:" + config_.model; }

  /// The JSON body this backend would send. Exposed for tests.
  nlohmann::ordered_json request_body(const ChatRequest& request) const;

 private:
  HttpBackendConfig config_;
};

/// Deterministic table-driven backend. Lookup order: exact prompt hash,
/// then "contains" rules in insertion order, then the default entry.
/// Completion i of a request is entry[i % size], so n > size cycles.
class MockBackend final : public ChatBackend {
 public:
  void add(const std::string& prompt_hash, std::vector<std::string> completions);
  void add(const Messages& messages, std::vector<std::string> completions);
  /// Matches when every needle occurs somewhere in the concatenated message
  /// contents.
  void add_rule(std::vector<std::string> needles, std::vector<std::string> completions);
  void set_default(std::vector<std::string> completions);

  std::vector<Completion> send(const ChatRequest& request) override;
  std::string name() const override { return "mock"; }

  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  struct Rule {
    std::vector<std::string> needles;
    std::vector<std::string> completions;
  };
  const std::vector<std::string>* lookup(const Messages& messages) const;

  std::map<std::string, std::vector<std::string>> by_hash_;
  std::vector<Rule> rules_;
  std::optional<std::vector<std::string>> default_;
  std::atomic<std::size_t> calls_{0};
};

/// Loads a mock fixture. Each JSONL line is one of
///   {"prompt_hash": "...", "completions": [...]}
///   {"contains": ["...", ...], "completions": [...]}
///   {"default": true, "completions": [...]}
std::unique_ptr<MockBackend> load_mock_backend(const std::filesystem::path& path);

/// Adapts a callable; handy for scripted tests.
class FunctionBackend final : public ChatBackend {
 public:
  using Fn = std::function<std::vector<Completion>(const ChatRequest&)>;
  explicit FunctionBackend(Fn fn, std::string name = "function")
      : fn_(std::move(fn)), name_(std::move(name)) {}
  std::vector<Completion> send(const ChatRequest& request) override { return fn_(request); }
  std::string name() const override { return name_; }

 private:
  Fn fn_;
  std::string name_;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{200};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{10000};
};

/// Counting semaphore with a runtime limit.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(std::size_t limit);
  void acquire();
  void release();
  std::size_t limit() const noexcept { return limit_; }
  std::size_t peak() const;

 private:
  std::size_t limit_;
  std::size_t active_ = 0;
  std::size_t peak_ = 0;
  mutable std::mutex mu_;
  std::condition_variable cv_;
};

struct GatewayStats {
  std::size_t requests = 0;
  std::size_t attempts = 0;
  std::size_t retries = 0;
};

/// The client every pipeline stage talks to: validates requests, caps
/// in-flight calls, retries transient failures with exponential backoff,
/// and guarantees exactly n completions in index order. Thread-safe.
class Gateway {
 public:
  Gateway(std::shared_ptr<ChatBackend> backend, RetryPolicy retry = {},
          std::size_t max_in_flight = 8);

  std::vector<Completion> complete(const ChatRequest& request);

  GatewayStats stats() const;
  std::size_t max_in_flight() const noexcept { return limiter_.limit(); }
  std::size_t peak_in_flight() const { return limiter_.peak(); }
  const ChatBackend& backend() const noexcept { return *backend_; }

  /// Replaces the sleep between retries; tests use this to avoid waiting.
  void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper);

 private:
  std::vector<Completion> send_with_retry(const ChatRequest& request);

  std::shared_ptr<ChatBackend> backend_;
  RetryPolicy retry_;
  InFlightLimiter limiter_;
  std::function<void(std::chrono::milliseconds)> sleeper_;
  std::atomic<std::size_t> requests_{0};
  std::atomic<std::size_t> attempts_{0};
  std::atomic<std::size_t> retries_{0};
};

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first
/// exception (lowest index) is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace explainrank
