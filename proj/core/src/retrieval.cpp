#include "explainrank/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "explainrank/error.hpp"
#include "explainrank/text.hpp"

namespace explainrank {
namespace {

bool better(const RetrievalResult& a, const RetrievalResult& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.doc_id < b.doc_id;
}

std::vector<RetrievalResult> top_k(std::vector<RetrievalResult> all, std::size_t k) {
  if (k < all.size()) {
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), better);
    all.resize(k);
  } else {
    std::sort(all.begin(), all.end(), better);
  }
  for (std::size_t i = 0; i < all.size(); ++i) all[i].rank = static_cast<int>(i + 1);
  return all;
}

}  // namespace

void Bm25Index::add_document(std::string id, std::string_view text) {
  if (!id_set_.insert(id).second)
    throw ValidationError("duplicate document id '" + id + "' in index");
  const auto ordinal = static_cast<std::uint32_t>(doc_ids_.size());
  auto terms = tokenize(text);
  std::map<std::string, std::uint32_t> tf;
  for (auto& t : terms) ++tf[std::move(t)];
  for (auto& [term, count] : tf) postings_[term].push_back(Posting{ordinal, count});
  doc_ids_.push_back(std::move(id));
  doc_lengths_.push_back(static_cast<std::uint32_t>(terms.size()));
  total_length_ += terms.size();
}

double Bm25Index::avgdl() const noexcept {
  if (doc_lengths_.empty()) return 0.0;
  return static_cast<double>(total_length_) / static_cast<double>(doc_lengths_.size());
}

std::size_t Bm25Index::df(const std::string& term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? 0 : it->second.size();
}

double Bm25Index::idf(std::size_t df) const {
  const double n = static_cast<double>(doc_count());
  const double d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

Bm25Index build_index(const Corpus& corpus, Bm25Params params) {
  Bm25Index index(params);
  for (const auto& doc : corpus.documents()) index.add_document(doc.id, doc.text);
  return index;
}

std::vector<RetrievalResult> bm25_search(const Bm25Index& index, std::string_view query,
                                         std::size_t k) {
  if (k == 0) throw ValidationError("bm25_search: k must be >= 1");
  if (index.doc_count() == 0) return {};
  auto tokens = tokenize(query);
  // each distinct query term contributes once
  std::set<std::string> terms(tokens.begin(), tokens.end());

  const double avgdl = index.avgdl();
  const double k1 = index.params().k1;
  const double b = index.params().b;
  std::vector<double> scores(index.doc_count(), 0.0);
  std::vector<char> touched(index.doc_count(), 0);
  for (const auto& term : terms) {
    auto it = index.postings().find(term);
    if (it == index.postings().end()) continue;
    const double idf = index.idf(it->second.size());
    for (const Posting& p : it->second) {
      const double tf = p.tf;
      const double dl = index.doc_lengths()[p.doc];
      const double norm = k1 * (1.0 - b + b * dl / avgdl);
      scores[p.doc] += idf * tf * (k1 + 1.0) / (tf + norm);
      touched[p.doc] = 1;
    }
  }
  std::vector<RetrievalResult> all;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (touched[i] && scores[i] > 0.0) all.push_back({index.doc_ids()[i], scores[i], 0});
  return top_k(std::move(all), k);
}

EmbeddingStore::EmbeddingStore(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw ValidationError("embedding dimension must be positive");
}

void EmbeddingStore::add(std::string id, std::vector<double> vec) {
  if (vec.size() != dim_)
    throw ValidationError("embedding '" + id + "' has length " + std::to_string(vec.size()) +
                          ", expected " + std::to_string(dim_));
  if (!index_.emplace(id, ids_.size()).second)
    throw ValidationError("duplicate embedding id '" + id + "'");
  ids_.push_back(std::move(id));
  data_.insert(data_.end(), vec.begin(), vec.end());
}

std::span<const double> EmbeddingStore::vector(std::size_t i) const {
  return std::span<const double>(data_).subspan(i * dim_, dim_);
}

std::span<const double> EmbeddingStore::vector(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ValidationError("no embedding for '" + id + "'");
  return vector(it->second);
}

EmbeddingStore parse_embeddings(const std::string& bytes) {
  std::optional<EmbeddingStore> store;
  std::size_t line_no = 0;
  for (std::string_view line : split_lines(bytes)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      auto id = j.at("id").get<std::string>();
      auto vec = j.at("vector").get<std::vector<double>>();
      if (!store) store.emplace(vec.size());
      store->add(std::move(id), std::move(vec));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!store) throw ValidationError("embedding file is empty");
  return std::move(*store);
}

EmbeddingStore load_embeddings(const std::filesystem::path& path) {
  try {
    return parse_embeddings(read_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::vector<RetrievalResult> dense_search(const EmbeddingStore& store,
                                          std::span<const double> query, std::size_t k) {
  if (k == 0) throw ValidationError("dense_search: k must be >= 1");
  if (query.size() != store.dim())
    throw ValidationError("query vector has dimension " + std::to_string(query.size()) +
                          ", store has " + std::to_string(store.dim()));
  std::vector<RetrievalResult> all;
  all.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto v = store.vector(i);
    double dot = 0.0;
    for (std::size_t d = 0; d < v.size(); ++d) dot += v[d] * query[d];
    all.push_back({store.ids()[i], dot, 0});
  }
  return top_k(std::move(all), k);
}

}  // namespace explainrank
