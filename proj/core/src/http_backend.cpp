#include <httplib.h>

#include "explainrank/error.hpp"
#include "explainrank/gateway.hpp"
#include "explainrank/web.hpp"

namespace explainrank {
namespace {

bool retryable(int status) { return status == 408 || status == 429 || status >= 500; }

FinishReason finish_from(const nlohmann::json& choice) {
  auto it = choice.find("finish_reason");
  if (it == choice.end() || !it->is_string()) return FinishReason::kStop;
  const auto& s = it->get_ref<const std::string&>();
  if (s == "length") return FinishReason::kLength;
  if (s == "stop" || s == "eos" || s == "end_turn") return FinishReason::kStop;
  return FinishReason::kError;
}

}  // namespace

HttpChatBackend::HttpChatBackend(HttpBackendConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty())
    throw ValidationError("gateway base URL is empty; set gateway.base_url or use the mock backend");
  if (!parse_url(config_.base_url)) throw ValidationError("bad gateway base URL " + config_.base_url);
  if (config_.model.empty()) throw ValidationError("gateway model name is empty");
}

nlohmann::ordered_json HttpChatBackend::request_body(const ChatRequest& request) const {
  nlohmann::ordered_json body;
  body["model"] = config_.model;
  body["messages"] = to_json(request.messages);
  body["temperature"] = request.temperature;
  body["top_p"] = request.top_p;
  body["n"] = request.n;
  body["max_tokens"] = request.max_tokens;
  if (request.seed) body["seed"] = *request.seed;
  return body;
}

std::vector<Completion> HttpChatBackend::send(const ChatRequest& request) {
  auto url = *parse_url(config_.base_url);
  std::string path = url.path_and_query;
  if (!path.empty() && path.back() == '/') path.pop_back();
  path += "/chat/completions";

  httplib::Client cli(url.origin());
  cli.set_connection_timeout(config_.connect_timeout);
  cli.set_read_timeout(config_.read_timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  auto res = cli.Post(path, headers, request_body(request).dump(), "application/json");
  if (!res) throw TransientError("transport error: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    if (retryable(res->status))
      throw TransientError("HTTP " + std::to_string(res->status), res->status);
    throw ApiError(res->status, res->body.substr(0, 200));
  }

  try {
    auto j = nlohmann::json::parse(res->body);
    std::vector<std::pair<std::size_t, Completion>> indexed;
    const auto& choices = j.at("choices");
    for (std::size_t i = 0; i < choices.size(); ++i) {
      const auto& c = choices[i];
      Completion comp;
      const auto& content = c.at("message").at("content");
      comp.text = content.is_string() ? content.get<std::string>() : std::string();
      comp.finish = finish_from(c);
      indexed.emplace_back(c.value("index", i), std::move(comp));
    }
    std::stable_sort(indexed.begin(), indexed.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Completion> out;
    for (auto& [idx, comp] : indexed) out.push_back(std::move(comp));
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ApiError(res->status, std::string("malformed completion response: ") + e.what());
  }
}

}  // namespace explainrank
