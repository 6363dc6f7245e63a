#include <regex>

#include <httplib.h>

#include "explainrank/error.hpp"
#include "explainrank/hash.hpp"
#include "explainrank/refine.hpp"
#include "explainrank/text.hpp"
#include "explainrank/web.hpp"

namespace explainrank {

void MockRewardClient::add(std::string output, double score) { exact_[std::move(output)] = score; }

void MockRewardClient::add_rule(std::string needle, double score) {
  rules_.emplace_back(std::move(needle), score);
}

void MockRewardClient::set_default(double score) { default_ = score; }

double MockRewardClient::score(const std::string&, const std::string&, const std::string& output) {
  if (auto it = exact_.find(output); it != exact_.end()) return it->second;
  for (const auto& [needle, s] : rules_)
    if (output.find(needle) != std::string::npos) return s;
  if (default_) return *default_;
  throw ApiError(404, "no mock reward for output \"" + output.substr(0, 60) + "\"");
}

std::unique_ptr<MockRewardClient> load_reward_fixture(const std::filesystem::path& path) {
  auto client = std::make_unique<MockRewardClient>();
  std::size_t line_no = 0;
  const std::string bytes = read_file(path);
  for (std::string_view line : split_lines(bytes)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      double s = j.at("score").get<double>();
      if (j.contains("output")) client->add(j["output"].get<std::string>(), s);
      else if (j.contains("contains")) client->add_rule(j["contains"].get<std::string>(), s);
      else if (j.value("default", false)) client->set_default(s);
      else throw ValidationError("entry needs output, contains, or default");
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return client;
}

std::optional<double> parse_reward_number(std::string_view text) {
  static const std::regex num_re(R"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)");
  std::string s(text);
  std::smatch m;
  if (!std::regex_search(s, m, num_re)) return std::nullopt;
  try {
    return std::stod(m.str());
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

ChatRewardClient::ChatRewardClient(Gateway& gateway, PromptSet prompts, ContextBudget budget)
    : gateway_(gateway), prompts_(std::move(prompts)), budget_(budget) {}

double ChatRewardClient::score(const std::string& query, const std::string& doc,
                               const std::string& output) {
  ChatRequest req;
  req.messages = render_reward_prompt(query, doc, output, prompts_, budget_);
  req.temperature = 0.0;
  req.n = 1;
  req.max_tokens = 16;
  auto reply = gateway_.complete(req).front().text;
  auto value = parse_reward_number(reply);
  if (!value) throw ApiError(200, "reward model reply has no number: " + reply.substr(0, 80));
  return *value;
}

EndpointRewardClient::EndpointRewardClient(std::string url, std::string api_key)
    : url_(std::move(url)), api_key_(std::move(api_key)) {
  if (!parse_url(url_)) throw ValidationError("bad reward endpoint URL '" + url_ + "'");
}

double EndpointRewardClient::score(const std::string& query, const std::string& doc,
                                   const std::string& output) {
  auto url = *parse_url(url_);
  httplib::Client cli(url.origin());
  cli.set_connection_timeout(10);
  cli.set_read_timeout(120);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  nlohmann::ordered_json body;
  body["query"] = query;
  body["document"] = doc;
  body["output"] = output;
  auto res = cli.Post(url.path_and_query, headers, body.dump(), "application/json");
  if (!res) throw ServiceError("reward endpoint unreachable: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) throw ApiError(res->status, res->body.substr(0, 200));
  try {
    return nlohmann::json::parse(res->body).at("score").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ApiError(res->status, std::string("malformed reward response: ") + e.what());
  }
}

double CachedRewardClient::score(const std::string& query, const std::string& doc,
                                 const std::string& output) {
  std::string key = query;
  key += '\0';
  key += doc;
  key += '\0';
  key += output;
  key = sha256_hex(key);
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(key); it != cache_.end()) {
      ++hits_;
      return it->second;
    }
  }
  double value = inner_.score(query, doc, output);
  std::lock_guard lock(mu_);
  auto [it, inserted] = cache_.emplace(key, value);
  if (inserted) ++misses_;
  else ++hits_;
  return it->second;
}

std::size_t CachedRewardClient::misses() const {
  std::lock_guard lock(mu_);
  return misses_;
}

std::size_t CachedRewardClient::hits() const {
  std::lock_guard lock(mu_);
  return hits_;
}

}  // namespace explainrank
