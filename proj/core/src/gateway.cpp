#include "explainrank/gateway.hpp"

#include <algorithm>
#include <exception>
#include <thread>

#include "explainrank/error.hpp"
#include "explainrank/hash.hpp"
#include "explainrank/model.hpp"
#include "explainrank/text.hpp"

namespace explainrank {

std::string to_string(Role role) {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "user";
}

nlohmann::ordered_json to_json(const Messages& messages) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& m : messages) {
    nlohmann::ordered_json obj;
    obj["role"] = to_string(m.role);
    obj["content"] = m.content;
    arr.push_back(std::move(obj));
  }
  return arr;
}

Messages messages_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ValidationError("messages must be a JSON array");
  Messages out;
  for (const auto& m : j) {
    auto role = m.at("role").get<std::string>();
    Message msg;
    if (role == "system") msg.role = Role::kSystem;
    else if (role == "user") msg.role = Role::kUser;
    else if (role == "assistant") msg.role = Role::kAssistant;
    else throw ValidationError("unknown message role '" + role + "'");
    msg.content = m.at("content").get<std::string>();
    out.push_back(std::move(msg));
  }
  return out;
}

std::string prompt_hash(const Messages& messages) { return sha256_hex(to_json(messages).dump()); }

void validate(const ChatRequest& r) {
  if (r.messages.empty()) throw ValidationError("chat request has no messages");
  if (r.messages.front().role == Role::kAssistant)
    throw ValidationError("first chat message must be system or user");
  if (!(r.temperature >= 0.0)) throw ValidationError("temperature must be >= 0");
  if (!(r.top_p > 0.0 && r.top_p <= 1.0)) throw ValidationError("top_p must be in (0, 1]");
  if (r.n < 1) throw ValidationError("n must be >= 1");
  if (r.max_tokens < 1) throw ValidationError("max_tokens must be >= 1");
}

// ---- MockBackend ---------------------------------------------------------

void MockBackend::add(const std::string& hash, std::vector<std::string> completions) {
  if (completions.empty()) throw ValidationError("mock entry needs at least one completion");
  by_hash_[hash] = std::move(completions);
}

void MockBackend::add(const Messages& messages, std::vector<std::string> completions) {
  add(prompt_hash(messages), std::move(completions));
}

void MockBackend::add_rule(std::vector<std::string> needles, std::vector<std::string> completions) {
  if (completions.empty()) throw ValidationError("mock rule needs at least one completion");
  rules_.push_back({std::move(needles), std::move(completions)});
}

void MockBackend::set_default(std::vector<std::string> completions) {
  if (completions.empty()) throw ValidationError("mock default needs at least one completion");
  default_ = std::move(completions);
}

const std::vector<std::string>* MockBackend::lookup(const Messages& messages) const {
  if (auto it = by_hash_.find(prompt_hash(messages)); it != by_hash_.end()) return &it->second;
  if (!rules_.empty()) {
    std::string all;
    for (const auto& m : messages) {
      all += m.content;
      all += '\n';
    }
    for (const auto& rule : rules_) {
      bool ok = std::all_of(rule.needles.begin(), rule.needles.end(),
                            [&](const std::string& n) { return all.find(n) != std::string::npos; });
      if (ok) return &rule.completions;
    }
  }
  return default_ ? &*default_ : nullptr;
}

std::vector<Completion> MockBackend::send(const ChatRequest& request) {
  ++calls_;
  const auto* entry = lookup(request.messages);
  if (!entry) throw ApiError(404, "no mock completion for prompt " + prompt_hash(request.messages));
  std::vector<Completion> out;
  out.reserve(static_cast<std::size_t>(request.n));
  for (int i = 0; i < request.n; ++i)
    out.push_back({(*entry)[static_cast<std::size_t>(i) % entry->size()], FinishReason::kStop});
  return out;
}

std::unique_ptr<MockBackend> load_mock_backend(const std::filesystem::path& path) {
  auto mock = std::make_unique<MockBackend>();
  std::size_t line_no = 0;
  const std::string bytes = read_file(path);
  for (std::string_view line : split_lines(bytes)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      auto completions = j.at("completions").get<std::vector<std::string>>();
      if (j.contains("prompt_hash")) {
        mock->add(j["prompt_hash"].get<std::string>(), std::move(completions));
      } else if (j.contains("contains")) {
        mock->add_rule(j["contains"].get<std::vector<std::string>>(), std::move(completions));
      } else if (j.value("default", false)) {
        mock->set_default(std::move(completions));
      } else {
        throw ValidationError("entry needs prompt_hash, contains, or default");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return mock;
}

// ---- InFlightLimiter -----------------------------------------------------

InFlightLimiter::InFlightLimiter(std::size_t limit) : limit_(std::max<std::size_t>(1, limit)) {}

void InFlightLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return active_ < limit_; });
  ++active_;
  peak_ = std::max(peak_, active_);
}

void InFlightLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --active_;
  }
  cv_.notify_one();
}

std::size_t InFlightLimiter::peak() const {
  std::lock_guard lock(mu_);
  return peak_;
}

// ---- Gateway -------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, RetryPolicy retry, std::size_t max_in_flight)
    : backend_(std::move(backend)),
      retry_(retry),
      limiter_(max_in_flight),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
  if (!backend_) throw ValidationError("gateway needs a backend");
}

void Gateway::set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) {
  sleeper_ = std::move(sleeper);
}

GatewayStats Gateway::stats() const { return {requests_.load(), attempts_.load(), retries_.load()}; }

std::vector<Completion> Gateway::send_with_retry(const ChatRequest& request) {
  auto backoff = retry_.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    ++attempts_;
    try {
      return backend_->send(request);
    } catch (const TransientError& e) {
      if (attempt >= retry_.max_retries)
        throw TransportError(std::string("giving up after ") + std::to_string(attempt + 1) +
                                 " attempts: " + e.what(),
                             attempt + 1);
      ++retries_;
      sleeper_(backoff);
      auto next = std::chrono::duration<double, std::milli>(backoff) * retry_.multiplier;
      backoff = std::min(retry_.max_backoff,
                         std::chrono::duration_cast<std::chrono::milliseconds>(next));
    }
  }
}

std::vector<Completion> Gateway::complete(const ChatRequest& request) {
  validate(request);
  ++requests_;
  limiter_.acquire();
  struct Release {
    InFlightLimiter& l;
    ~Release() { l.release(); }
  } guard{limiter_};

  const auto n = static_cast<std::size_t>(request.n);
  std::vector<Completion> out;
  out.reserve(n);
  while (out.size() < n) {
    ChatRequest sub = request;
    sub.n = static_cast<int>(n - out.size());
    auto got = send_with_retry(sub);
    if (got.empty()) throw ApiError(200, "backend returned no completions");
    for (auto& c : got) {
      if (out.size() == n) break;
      out.push_back(std::move(c));
    }
  }
  return out;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  workers = std::clamp<std::size_t>(workers, 1, n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex mu;
  std::size_t error_index = n;
  std::exception_ptr error;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        while (!stop.load()) {
          std::size_t i = next.fetch_add(1);
          if (i >= n) return;
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (i < error_index) {
              error_index = i;
              error = std::current_exception();
            }
            stop.store(true);
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace explainrank
