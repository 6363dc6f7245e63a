#include "explainrank/model.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>

#include <nlohmann/json.hpp>

#include "explainrank/error.hpp"
#include "explainrank/text.hpp"

namespace explainrank {
namespace {

[[noreturn]] void fail_line(std::size_t line, const std::string& msg) {
  throw ValidationError("line " + std::to_string(line) + ": " + msg);
}

// Calls fn(line_number, json) for each non-blank line.
template <typename Fn>
void for_each_json_line(const std::string& bytes, Fn&& fn) {
  std::size_t line_no = 0;
  for (std::string_view line : split_lines(bytes)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (!is_valid_utf8(line)) fail_line(line_no, "invalid UTF-8");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail_line(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) fail_line(line_no, "expected a JSON object");
    fn(line_no, j);
  }
}

std::string required_string(const nlohmann::json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) fail_line(line, std::string("missing field \"") + key + "\"");
  if (!it->is_string()) fail_line(line, std::string("field \"") + key + "\" must be a string");
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const nlohmann::json& j, const char* key,
                                           std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) fail_line(line, std::string("field \"") + key + "\" must be a string");
  return it->get<std::string>();
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool has_whitespace(std::string_view s) {
  for (char c : s)
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') return true;
  return false;
}

template <typename Fn>
auto with_path(const std::filesystem::path& path, Fn&& fn) {
  try {
    return fn(read_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace

Corpus::Corpus(std::vector<Document> docs) : docs_(std::move(docs)) {
  index_.reserve(docs_.size());
  for (std::size_t i = 0; i < docs_.size(); ++i) {
    if (docs_[i].id.empty()) throw ValidationError("document " + std::to_string(i) + " has an empty id");
    if (!index_.emplace(docs_[i].id, i).second)
      throw ValidationError("duplicate document id '" + docs_[i].id + "'");
  }
}

const Document* Corpus::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &docs_[it->second];
}

std::optional<std::size_t> Corpus::ordinal(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ValidationError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Corpus parse_corpus(const std::string& bytes) {
  std::vector<Document> docs;
  std::set<std::string> seen;
  for_each_json_line(bytes, [&](std::size_t line, const nlohmann::json& j) {
    Document d;
    d.id = required_string(j, "id", line);
    d.text = required_string(j, "text", line);
    d.title = optional_string(j, "title", line);
    d.domain = optional_string(j, "domain", line);
    if (d.id.empty()) fail_line(line, "empty document id");
    if (trim(d.text).empty()) fail_line(line, "document '" + d.id + "' has empty text");
    if (!seen.insert(d.id).second) fail_line(line, "duplicate document id '" + d.id + "'");
    docs.push_back(std::move(d));
  });
  return Corpus(std::move(docs));
}

Corpus load_corpus(const std::filesystem::path& path) {
  return with_path(path, [](const std::string& b) { return parse_corpus(b); });
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::string out;
  for (const auto& d : corpus.documents()) {
    nlohmann::ordered_json j;
    j["id"] = d.id;
    j["text"] = d.text;
    if (d.title) j["title"] = *d.title;
    if (d.domain) j["domain"] = *d.domain;
    out += j.dump();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<Query> parse_queries(const std::string& bytes) {
  std::vector<Query> queries;
  std::set<std::string> seen;
  for_each_json_line(bytes, [&](std::size_t line, const nlohmann::json& j) {
    Query q;
    q.id = required_string(j, "id", line);
    q.text = required_string(j, "text", line);
    q.domain = optional_string(j, "domain", line).value_or("");
    if (q.id.empty()) fail_line(line, "empty query id");
    if (!seen.insert(q.id).second) fail_line(line, "duplicate query id '" + q.id + "'");
    queries.push_back(std::move(q));
  });
  return queries;
}

std::vector<Query> load_queries(const std::filesystem::path& path) {
  return with_path(path, [](const std::string& b) { return parse_queries(b); });
}

void write_queries(const std::vector<Query>& queries, const std::filesystem::path& path) {
  std::string out;
  for (const auto& q : queries) {
    nlohmann::ordered_json j;
    j["id"] = q.id;
    j["text"] = q.text;
    j["domain"] = q.domain;
    out += j.dump();
    out += '\n';
  }
  write_file(path, out);
}

QrelsLoad parse_qrels(const std::string& bytes) {
  QrelsLoad result;
  std::size_t line_no = 0;
  for (std::string_view line : split_lines(bytes)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (!is_valid_utf8(line)) fail_line(line_no, "invalid UTF-8");
    auto fields = split_whitespace(line);
    if (fields.size() != 4) fail_line(line_no, "expected \"qid 0 docid gain\"");
    int gain = 0;
    if (!parse_number(fields[3], gain)) fail_line(line_no, "gain is not an integer: " + std::string(fields[3]));
    if (gain < 0) fail_line(line_no, "negative gain");
    auto& slot = result.qrels[std::string(fields[0])];
    auto [it, inserted] = slot.insert_or_assign(std::string(fields[2]), gain);
    if (!inserted) ++result.duplicate_overrides;
  }
  return result;
}

QrelsLoad load_qrels(const std::filesystem::path& path) {
  return with_path(path, [](const std::string& b) { return parse_qrels(b); });
}

void write_qrels(const Qrels& qrels, const std::filesystem::path& path) {
  std::string out;
  for (const auto& [qid, docs] : qrels)
    for (const auto& [docid, gain] : docs) out += qid + " 0 " + docid + " " + std::to_string(gain) + "\n";
  write_file(path, out);
}

void validate_run(const Run& run) {
  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& e : run) {
    if (e.query_id.empty() || e.doc_id.empty() || e.tag.empty())
      throw ValidationError("run entry with an empty field");
    if (has_whitespace(e.query_id) || has_whitespace(e.doc_id) || has_whitespace(e.tag))
      throw ValidationError("run field contains whitespace: " + e.query_id + "/" + e.doc_id);
    if (!pairs.emplace(e.query_id, e.doc_id).second)
      throw ValidationError("duplicate run entry (" + e.query_id + ", " + e.doc_id + ")");
  }
  for (const auto& [qid, entries] : group_run(run)) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].rank != static_cast<int>(i + 1))
        throw ValidationError("query " + qid + ": ranks are not 1.." + std::to_string(entries.size()) +
                              " (found rank " + std::to_string(entries[i].rank) + ")");
      if (i > 0 && entries[i].score > entries[i - 1].score)
        throw ValidationError("query " + qid + ": score increases at rank " + std::to_string(i + 1));
    }
  }
}

std::vector<std::pair<std::string, std::vector<RunEntry>>> group_run(const Run& run) {
  std::vector<std::pair<std::string, std::vector<RunEntry>>> groups;
  std::map<std::string, std::size_t> slot;
  for (const auto& e : run) {
    auto [it, inserted] = slot.emplace(e.query_id, groups.size());
    if (inserted) groups.emplace_back(e.query_id, std::vector<RunEntry>{});
    groups[it->second].second.push_back(e);
  }
  for (auto& [qid, entries] : groups)
    std::stable_sort(entries.begin(), entries.end(),
                     [](const RunEntry& a, const RunEntry& b) { return a.rank < b.rank; });
  return groups;
}

std::string format_run(const Run& run) {
  validate_run(run);
  std::string out;
  char buf[64];
  for (const auto& e : run) {
    std::snprintf(buf, sizeof buf, "%.6f", e.score);
    out += e.query_id + " Q0 " + e.doc_id + " " + std::to_string(e.rank) + " " + buf + " " + e.tag + "\n";
  }
  return out;
}

void write_run(const Run& run, const std::filesystem::path& path) { write_file(path, format_run(run)); }

Run parse_run(const std::string& bytes) {
  Run run;
  std::size_t line_no = 0;
  for (std::string_view line : split_lines(bytes)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (!is_valid_utf8(line)) fail_line(line_no, "invalid UTF-8");
    auto f = split_whitespace(line);
    if (f.size() != 6) fail_line(line_no, "expected \"qid Q0 docid rank score tag\"");
    RunEntry e;
    e.query_id = f[0];
    e.doc_id = f[2];
    if (!parse_number(f[3], e.rank) || e.rank < 1) fail_line(line_no, "bad rank");
    if (!parse_number(f[4], e.score)) fail_line(line_no, "bad score");
    e.tag = f[5];
    run.push_back(std::move(e));
  }
  validate_run(run);
  return run;
}

Run load_run(const std::filesystem::path& path) {
  return with_path(path, [](const std::string& b) { return parse_run(b); });
}

}  // namespace explainrank
