#include <cstring>
#include <fstream>

#include "explainrank/error.hpp"
#include "explainrank/hash.hpp"
#include "explainrank/retrieval.hpp"

// Cache layout (little-endian):
//   "ERBM25IX" | u32 version | u32 reserved | 64B corpus sha256 hex |
//   f64 k1 | f64 b | u64 payload size | 64B payload sha256 hex | payload
// payload: u64 ndocs {u32 len, id, u32 doclen}* u64 nterms
//          {u32 len, term, u32 npostings {u32 doc, u32 tf}*}*

namespace explainrank {
namespace {

constexpr char kMagic[8] = {'E', 'R', 'B', 'M', '2', '5', 'I', 'X'};
constexpr std::size_t kHeaderSize = 8 + 4 + 4 + 64 + 8 + 8 + 8 + 64;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_str(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  std::string str() { return bytes(get<std::uint32_t>()); }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw ValidationError("index cache truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

struct Header {
  std::uint32_t version = 0;
  std::string corpus_hash;
  Bm25Params params;
  std::string payload;
};

Header read_header(const std::string& bytes) {
  if (bytes.size() < kHeaderSize || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw ValidationError("not an index cache file");
  Reader r(std::string_view(bytes).substr(8));
  Header h;
  h.version = r.get<std::uint32_t>();
  r.get<std::uint32_t>();
  h.corpus_hash = r.bytes(64);
  h.params.k1 = r.get<double>();
  h.params.b = r.get<double>();
  auto size = r.get<std::uint64_t>();
  auto payload_hash = r.bytes(64);
  if (bytes.size() - kHeaderSize != size) throw ValidationError("index cache payload size mismatch");
  h.payload = bytes.substr(kHeaderSize);
  if (sha256_hex(h.payload) != payload_hash) throw ValidationError("index cache checksum mismatch");
  return h;
}

}  // namespace

Bm25Index read_index_payload(std::string_view payload, Bm25Params params) {
  Bm25Index index(params);
  Reader r(payload);
  auto ndocs = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < ndocs; ++i) {
    auto id = r.str();
    auto len = r.get<std::uint32_t>();
    if (!index.id_set_.insert(id).second) throw ValidationError("index cache has duplicate ids");
    index.doc_ids_.push_back(std::move(id));
    index.doc_lengths_.push_back(len);
    index.total_length_ += len;
  }
  auto nterms = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < nterms; ++i) {
    auto term = r.str();
    auto n = r.get<std::uint32_t>();
    std::vector<Posting> list;
    list.reserve(n);
    for (std::uint32_t j = 0; j < n; ++j) {
      Posting p;
      p.doc = r.get<std::uint32_t>();
      p.tf = r.get<std::uint32_t>();
      if (p.doc >= ndocs || (!list.empty() && p.doc <= list.back().doc))
        throw ValidationError("index cache postings out of order");
      list.push_back(p);
    }
    index.postings_.emplace(std::move(term), std::move(list));
  }
  if (!r.done()) throw ValidationError("index cache has trailing bytes");
  return index;
}

void save_index(const Bm25Index& index, const std::string& corpus_hash,
                const std::filesystem::path& path) {
  if (corpus_hash.size() != 64) throw ValidationError("corpus hash must be 64 hex characters");
  std::string payload;
  put<std::uint64_t>(payload, index.doc_count());
  for (std::size_t i = 0; i < index.doc_count(); ++i) {
    put_str(payload, index.doc_ids()[i]);
    put<std::uint32_t>(payload, index.doc_lengths()[i]);
  }
  put<std::uint64_t>(payload, index.postings().size());
  for (const auto& [term, list] : index.postings()) {
    put_str(payload, term);
    put<std::uint32_t>(payload, static_cast<std::uint32_t>(list.size()));
    for (const auto& p : list) {
      put<std::uint32_t>(payload, p.doc);
      put<std::uint32_t>(payload, p.tf);
    }
  }
  std::string out(kMagic, 8);
  put<std::uint32_t>(out, kIndexCacheVersion);
  put<std::uint32_t>(out, 0);
  out += corpus_hash;
  put<double>(out, index.params().k1);
  put<double>(out, index.params().b);
  put<std::uint64_t>(out, payload.size());
  out += sha256_hex(payload);
  out += payload;
  write_file(path, out);
}

CacheProbe probe_index(const std::filesystem::path& path, const std::string& corpus_hash,
                       Bm25Params params) {
  if (!std::filesystem::exists(path)) return {CacheProbe::Status::kMissing, "no cache file"};
  try {
    auto h = read_header(read_file(path));
    if (h.version != kIndexCacheVersion)
      return {CacheProbe::Status::kStale, "cache version " + std::to_string(h.version)};
    if (h.corpus_hash != corpus_hash) return {CacheProbe::Status::kStale, "corpus changed"};
    if (h.params.k1 != params.k1 || h.params.b != params.b)
      return {CacheProbe::Status::kStale, "BM25 parameters changed"};
    read_index_payload(h.payload, h.params);
    return {CacheProbe::Status::kHit, "cache hit"};
  } catch (const ValidationError& e) {
    return {CacheProbe::Status::kCorrupt, e.what()};
  }
}

Bm25Index load_index(const std::filesystem::path& path, std::string* corpus_hash) {
  auto h = read_header(read_file(path));
  if (h.version != kIndexCacheVersion)
    throw ValidationError("unsupported index cache version " + std::to_string(h.version));
  if (corpus_hash) *corpus_hash = h.corpus_hash;
  return read_index_payload(h.payload, h.params);
}

}  // namespace explainrank
