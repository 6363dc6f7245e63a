#include "explainrank/web.hpp"

#include <algorithm>
#include <charconv>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "explainrank/error.hpp"
#include "explainrank/model.hpp"
#include "explainrank/text.hpp"

namespace explainrank {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

SearchResult result_from_json(const nlohmann::json& r) {
  SearchResult out;
  out.url = r.value("url", "");
  out.title = html_to_text(r.value("title", ""));
  out.snippet = html_to_text(r.value("description", r.value("snippet", "")));
  return out;
}

}  // namespace

std::string Url::origin() const { return scheme + "://" + host + ":" + std::to_string(port); }

std::optional<Url> parse_url(std::string_view url) {
  auto sep = url.find("://");
  if (sep == std::string_view::npos) return std::nullopt;
  Url u;
  u.scheme = lower(url.substr(0, sep));
  if (u.scheme != "http" && u.scheme != "https") return std::nullopt;
  auto rest = url.substr(sep + 3);
  auto slash = rest.find_first_of("/?#");
  auto authority = rest.substr(0, slash);
  if (authority.empty() || authority.find('@') != std::string_view::npos) return std::nullopt;
  u.port = u.scheme == "https" ? 443 : 80;
  if (auto colon = authority.rfind(':'); colon != std::string_view::npos && authority.front() != '[') {
    auto port_str = authority.substr(colon + 1);
    int port = 0;
    auto [p, ec] = std::from_chars(port_str.data(), port_str.data() + port_str.size(), port);
    if (ec != std::errc() || p != port_str.data() + port_str.size() || port <= 0 || port > 65535)
      return std::nullopt;
    u.port = port;
    authority = authority.substr(0, colon);
  }
  u.host = lower(authority);
  if (u.host.empty()) return std::nullopt;
  std::string tail = slash == std::string_view::npos ? "" : std::string(rest.substr(slash));
  if (auto hash = tail.find('#'); hash != std::string::npos) tail.resize(hash);
  if (tail.empty() || tail.front() != '/') tail = "/" + tail;
  u.path_and_query = tail;
  return u;
}

std::string url_encode(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += kHex[c >> 4];
      out += kHex[c & 0xF];
    }
  }
  return out;
}

std::vector<SearchResult> parse_search_response(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ApiError(200, std::string("malformed search response: ") + e.what());
  }
  const nlohmann::json* list = nullptr;
  if (j.contains("web") && j["web"].contains("results")) list = &j["web"]["results"];
  else if (j.contains("results")) list = &j["results"];
  std::vector<SearchResult> out;
  if (!list || !list->is_array()) return out;
  for (const auto& r : *list) {
    if (out.size() == WebSearchClient::kMaxResults) break;
    auto res = result_from_json(r);
    if (!res.url.empty()) out.push_back(std::move(res));
  }
  return out;
}

BraveSearchClient::BraveSearchClient(BraveSearchConfig config) : config_(std::move(config)) {
  if (config_.api_key.empty()) throw ValidationError("web search needs an API key (SEARCH_API_KEY)");
}

std::vector<SearchResult> BraveSearchClient::search(const std::string& query) {
  auto url = parse_url(config_.endpoint);
  if (!url) throw ValidationError("bad search endpoint " + config_.endpoint);
  httplib::Client cli(url->origin());
  cli.set_connection_timeout(config_.timeout);
  cli.set_read_timeout(config_.timeout);
  std::string sep = url->path_and_query.find('?') == std::string::npos ? "?" : "&";
  auto path = url->path_and_query + sep + "q=" + url_encode(query) + "&count=10";
  httplib::Headers headers = {{"Accept", "application/json"},
                              {"X-Subscription-Token", config_.api_key}};
  auto res = cli.Get(path, headers);
  if (!res) throw ServiceError("web search failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) throw ApiError(res->status, res->body.substr(0, 200));
  return parse_search_response(res->body);
}

void FixtureSearchClient::add(std::string query, std::vector<SearchResult> results) {
  if (results.size() > kMaxResults) results.resize(kMaxResults);
  table_[std::move(query)] = std::move(results);
}

void FixtureSearchClient::set_default(std::vector<SearchResult> results) {
  if (results.size() > kMaxResults) results.resize(kMaxResults);
  default_ = std::move(results);
}

std::vector<SearchResult> FixtureSearchClient::search(const std::string& query) {
  if (auto it = table_.find(query); it != table_.end()) return it->second;
  if (default_) return *default_;
  throw ServiceError("no search fixture for query '" + query + "'");
}

std::unique_ptr<FixtureSearchClient> load_search_fixture(const std::filesystem::path& path) {
  auto client = std::make_unique<FixtureSearchClient>();
  std::size_t line_no = 0;
  const std::string bytes = read_file(path);
  for (std::string_view line : split_lines(bytes)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      std::vector<SearchResult> results;
      for (const auto& r : j.at("results")) results.push_back(result_from_json(r));
      if (j.value("default", false)) client->set_default(std::move(results));
      else client->add(j.at("query").get<std::string>(), std::move(results));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return client;
}

void FixtureFetcher::add_html(std::string url, std::string html) {
  text_[std::move(url)] = html_to_text(html);
}

void FixtureFetcher::add_text(std::string url, std::string text) { text_[std::move(url)] = std::move(text); }

std::string FixtureFetcher::fetch(const std::string& url) {
  auto it = text_.find(url);
  if (it == text_.end()) throw ServiceError("fetch failed: " + url);
  return it->second;
}

std::unique_ptr<FixtureFetcher> load_fetch_fixture(const std::filesystem::path& path) {
  auto fetcher = std::make_unique<FixtureFetcher>();
  std::size_t line_no = 0;
  const std::string bytes = read_file(path);
  for (std::string_view line : split_lines(bytes)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      auto url = j.at("url").get<std::string>();
      if (j.contains("html")) fetcher->add_html(std::move(url), j["html"].get<std::string>());
      else fetcher->add_text(std::move(url), j.at("text").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return fetcher;
}

HttpFetcher::HttpFetcher(HttpFetcherConfig config) : config_(config) {}

std::string HttpFetcher::fetch(const std::string& raw_url) {
  std::string current = raw_url;
  for (int hop = 0; hop <= config_.max_redirects; ++hop) {
    auto url = parse_url(current);
    if (!url) throw ServiceError("unsupported URL: " + current);
    httplib::Client cli(url->origin());
    cli.set_connection_timeout(config_.timeout);
    cli.set_read_timeout(config_.timeout);
    std::string body;
    bool capped = false;
    auto res = cli.Get(url->path_and_query, [&](const char* data, std::size_t len) {
      std::size_t room = config_.max_bytes - body.size();
      body.append(data, std::min(len, room));
      if (len >= room) {
        capped = true;
        return false;
      }
      return true;
    });
    if (!res && !capped) throw ServiceError("fetch failed: " + current + ": " + httplib::to_string(res.error()));
    if (res && res->status >= 300 && res->status < 400 && res->has_header("Location")) {
      auto loc = res->get_header_value("Location");
      current = loc.rfind("http", 0) == 0 ? loc : url->origin() + loc;
      continue;
    }
    if (res && (res->status < 200 || res->status >= 300))
      throw ServiceError("fetch failed: " + current + ": HTTP " + std::to_string(res->status));
    std::string type = res ? lower(res->get_header_value("Content-Type")) : "text/html";
    std::string text;
    if (type.empty() || type.find("html") != std::string::npos || type.find("xml") != std::string::npos)
      text = html_to_text(body);
    else if (type.find("text/") == 0)
      text = std::string(trim(body));
    else
      throw ServiceError("fetch failed: " + current + ": unsupported content type " + type);
    if (!is_valid_utf8(text)) throw ServiceError("fetch failed: " + current + ": not UTF-8");
    if (text.empty()) throw ServiceError("fetch failed: " + current + ": empty document");
    return text;
  }
  throw ServiceError("fetch failed: too many redirects for " + raw_url);
}

}  // namespace explainrank
