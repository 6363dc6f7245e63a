#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace explainrank {

struct Document {
  std::string id;
  std::optional<std::string> title;
  std::string text;
  std::optional<std::string> domain;

  bool operator==(const Document&) const = default;
};

struct Query {
  std::string id;
  std::string text;
  std::string domain;

  bool operator==(const Query&) const = default;
};

/// Ordered documents plus an id index. Immutable once loaded.
class Corpus {
 public:
  Corpus() = default;
  /// Throws ValidationError on duplicate or empty ids.
  explicit Corpus(std::vector<Document> docs);

  const std::vector<Document>& documents() const noexcept { return docs_; }
  std::size_t size() const noexcept { return docs_.size(); }
  bool empty() const noexcept { return docs_.empty(); }
  const Document& operator[](std::size_t i) const { return docs_[i]; }

  const Document* find(const std::string& id) const;
  std::optional<std::size_t> ordinal(const std::string& id) const;

 private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// query-id -> (doc-id -> non-negative gain)
using Qrels = std::map<std::string, std::map<std::string, int>>;

struct QrelsLoad {
  Qrels qrels;
  /// Number of (qid, docid) lines that overrode an earlier line.
  std::size_t duplicate_overrides = 0;
};

struct RunEntry {
  std::string query_id;
  std::string doc_id;
  int rank = 0;
  double score = 0.0;
  std::string tag;

  bool operator==(const RunEntry&) const = default;
};

using Run = std::vector<RunEntry>;

// JSON-lines readers. Errors carry the 1-based line number.
Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(const std::string& bytes);
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);

std::vector<Query> load_queries(const std::filesystem::path& path);
std::vector<Query> parse_queries(const std::string& bytes);
void write_queries(const std::vector<Query>& queries, const std::filesystem::path& path);

// TREC qrels: "qid 0 docid gain". Last duplicate wins.
QrelsLoad load_qrels(const std::filesystem::path& path);
QrelsLoad parse_qrels(const std::string& bytes);
void write_qrels(const Qrels& qrels, const std::filesystem::path& path);

// TREC run: "qid Q0 docid rank score tag", score at 6 decimals.
void validate_run(const Run& run);
std::string format_run(const Run& run);
void write_run(const Run& run, const std::filesystem::path& path);
Run parse_run(const std::string& bytes);
Run load_run(const std::filesystem::path& path);

/// Groups a run per query, each list sorted by rank. Query order follows
/// first appearance in the run.
std::vector<std::pair<std::string, std::vector<RunEntry>>> group_run(const Run& run);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename.
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace explainrank
