#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace explainrank {

struct Url {
  std::string scheme;  // "http" or "https"
  std::string host;
  int port = 0;
  std::string path_and_query;  // always starts with '/'

  std::string origin() const;
};

/// Accepts absolute http(s) URLs only.
std::optional<Url> parse_url(std::string_view url);

/// Percent-encodes everything except unreserved characters.
std::string url_encode(std::string_view s);

struct SearchResult {
  std::string url;
  std::string title;
  std::string snippet;
  std::string fetched_text;  // empty when the client does not prefetch
};

/// Web search contract: at most 10 results per query.
class WebSearchClient {
 public:
  static constexpr std::size_t kMaxResults = 10;
  virtual ~WebSearchClient() = default;
  /// Throws ServiceError on failure.
  virtual std::vector<SearchResult> search(const std::string& query) = 0;
};

/// Parses a Brave-style response body: results at web.results[] or
/// results[], each with url/title/description. Truncates to 10.
std::vector<SearchResult> parse_search_response(std::string_view body);

struct BraveSearchConfig {
  std::string endpoint = "https://api.search.brave.com/res/v1/web/search";
  std::string api_key;
  std::chrono::milliseconds timeout{15000};
};

/// GET {endpoint}?q=<query> with the subscription token header.
class BraveSearchClient final : public WebSearchClient {
 public:
  explicit BraveSearchClient(BraveSearchConfig config);
  std::vector<SearchResult> search(const std::string& query) override;

 private:
  BraveSearchConfig config_;
};

/// Offline search: JSONL {"query": str, "results": [{url,title,description}]}.
/// Unknown queries fail with ServiceError unless a default entry
/// ({"default": true, "results": [...]}) exists.
class FixtureSearchClient final : public WebSearchClient {
 public:
  void add(std::string query, std::vector<SearchResult> results);
  void set_default(std::vector<SearchResult> results);
  std::vector<SearchResult> search(const std::string& query) override;

 private:
  std::map<std::string, std::vector<SearchResult>> table_;
  std::optional<std::vector<SearchResult>> default_;
};

std::unique_ptr<FixtureSearchClient> load_search_fixture(const std::filesystem::path& path);

/// url -> plain text. Throws ServiceError when the document is unavailable.
class Fetcher {
 public:
  virtual ~Fetcher() = default;
  virtual std::string fetch(const std::string& url) = 0;
};

/// Offline fetcher: JSONL {"url": str, "html": str} or {"url": str, "text": str}.
/// HTML is converted to text on lookup.
class FixtureFetcher final : public Fetcher {
 public:
  void add_html(std::string url, std::string html);
  void add_text(std::string url, std::string text);
  std::string fetch(const std::string& url) override;

 private:
  std::map<std::string, std::string> text_;
};

std::unique_ptr<FixtureFetcher> load_fetch_fixture(const std::filesystem::path& path);

struct HttpFetcherConfig {
  std::chrono::milliseconds timeout{10000};
  std::size_t max_bytes = 2 * 1024 * 1024;
  int max_redirects = 3;
};

/// Live fetcher with timeout and size caps. Follows redirects.
class HttpFetcher final : public Fetcher {
 public:
  explicit HttpFetcher(HttpFetcherConfig config = {});
  std::string fetch(const std::string& url) override;

 private:
  HttpFetcherConfig config_;
};

}  // namespace explainrank
