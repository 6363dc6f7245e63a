#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "explainrank/model.hpp"

namespace explainrank {

struct RetrievalResult {
  std::string doc_id;
  double score = 0.0;
  int rank = 0;

  bool operator==(const RetrievalResult&) const = default;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;

  bool operator==(const Bm25Params&) const = default;
};

struct Posting {
  std::uint32_t doc = 0;  // ordinal into the index's document list
  std::uint32_t tf = 0;

  bool operator==(const Posting&) const = default;
};

/// Okapi BM25 over an inverted index. Built by a single writer; const
/// access is thread-safe.
class Bm25Index {
 public:
  explicit Bm25Index(Bm25Params params = {}) : params_(params) {}

  /// Appends one document. Existing postings are never modified, only
  /// extended. Throws ValidationError on a duplicate id.
  void add_document(std::string id, std::string_view text);

  std::size_t doc_count() const noexcept { return doc_ids_.size(); }
  double avgdl() const noexcept;
  const Bm25Params& params() const noexcept { return params_; }
  const std::vector<std::string>& doc_ids() const noexcept { return doc_ids_; }
  const std::vector<std::uint32_t>& doc_lengths() const noexcept { return doc_lengths_; }
  const std::map<std::string, std::vector<Posting>>& postings() const noexcept {
    return postings_;
  }
  std::size_t df(const std::string& term) const;

  /// idf = ln(1 + (N - df + 0.5) / (df + 0.5)); never negative.
  double idf(std::size_t df) const;

  bool operator==(const Bm25Index&) const = default;

 private:
  friend Bm25Index read_index_payload(std::string_view payload, Bm25Params params);

  Bm25Params params_;
  std::vector<std::string> doc_ids_;
  std::unordered_set<std::string> id_set_;
  std::vector<std::uint32_t> doc_lengths_;
  std::uint64_t total_length_ = 0;
  std::map<std::string, std::vector<Posting>> postings_;
};

Bm25Index build_index(const Corpus& corpus, Bm25Params params = {});

/// Top-k by BM25. Zero-score documents are omitted; ties go to the smaller
/// doc id. k must be >= 1.
std::vector<RetrievalResult> bm25_search(const Bm25Index& index, std::string_view query,
                                         std::size_t k = 100);

/// Fixed-dimension id -> vector table for pre-computed embeddings.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::size_t dim);

  /// Throws ValidationError on a wrong-length vector or duplicate id.
  void add(std::string id, std::vector<double> vec);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::span<const double> vector(std::size_t i) const;
  /// Throws ValidationError if the id is absent.
  std::span<const double> vector(const std::string& id) const;

 private:
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::vector<double> data_;
  std::map<std::string, std::size_t> index_;
};

/// JSONL {"id": str, "vector": [real]} with a uniform vector length.
EmbeddingStore load_embeddings(const std::filesystem::path& path);
EmbeddingStore parse_embeddings(const std::string& bytes);

/// Top-k by dot product, ties to the smaller doc id. Throws
/// ValidationError on a dimension mismatch.
std::vector<RetrievalResult> dense_search(const EmbeddingStore& store,
                                          std::span<const double> query, std::size_t k = 100);

// Versioned binary cache. The header records the corpus content hash so a
// stale cache can be detected without parsing the payload.
inline constexpr std::uint32_t kIndexCacheVersion = 1;

void save_index(const Bm25Index& index, const std::string& corpus_hash,
                const std::filesystem::path& path);

struct CacheProbe {
  enum class Status { kMissing, kHit, kStale, kCorrupt };
  Status status = Status::kMissing;
  std::string detail;
};

/// Checks whether the cache at `path` is intact and was built from
/// `corpus_hash` with the same parameters.
CacheProbe probe_index(const std::filesystem::path& path, const std::string& corpus_hash,
                       Bm25Params params);

/// Throws ValidationError if the file is corrupt or has the wrong version.
Bm25Index load_index(const std::filesystem::path& path, std::string* corpus_hash = nullptr);

}  // namespace explainrank
