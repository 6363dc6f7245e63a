#include "explainrank/datagen.hpp"

#include <algorithm>
#include <regex>
#include <tuple>

#include "explainrank/error.hpp"
#include "explainrank/hash.hpp"
#include "explainrank/reranker.hpp"
#include "explainrank/text.hpp"

namespace explainrank {
namespace {

bool is_http_url(std::string_view s) {
  auto lower_prefix = [&](std::string_view p) {
    if (s.size() < p.size()) return false;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (std::tolower(static_cast<unsigned char>(s[i])) != p[i]) return false;
    return true;
  };
  return (lower_prefix("http://") && s.size() > 7) || (lower_prefix("https://") && s.size() > 8);
}

// Trailing sentence punctuation and unbalanced closing brackets are not
// part of a bare URL.
std::string clean_bare_url(std::string url) {
  for (;;) {
    if (url.empty()) break;
    char c = url.back();
    if (c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' || c == '*') {
      url.pop_back();
    } else if (c == ')' &&
               std::count(url.begin(), url.end(), '(') < std::count(url.begin(), url.end(), ')')) {
      url.pop_back();
    } else {
      break;
    }
  }
  return url;
}

std::string required(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string())
    throw ValidationError(std::string("missing string field \"") + key + "\"");
  return it->get<std::string>();
}

}  // namespace

std::string to_string(Provenance p) { return p == Provenance::kLinked ? "linked" : "websearch"; }

std::vector<SeedPair> parse_seeds(const std::string& bytes) {
  std::vector<SeedPair> seeds;
  std::size_t line_no = 0;
  for (std::string_view line : split_lines(bytes)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      if (!is_valid_utf8(line)) throw ValidationError("invalid UTF-8");
      auto j = nlohmann::json::parse(line);
      SeedPair s;
      s.source_id = required(j, "id");
      s.community = required(j, "community");
      s.query = required(j, "query");
      s.answer = required(j, "answer");
      if (trim(s.query).empty() || trim(s.answer).empty())
        throw ValidationError("seed '" + s.source_id + "' has an empty query or answer");
      seeds.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return seeds;
}

std::vector<SeedPair> load_seeds(const std::filesystem::path& path) {
  try {
    return parse_seeds(read_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

nlohmann::ordered_json to_json(const SynthRecord& r) {
  nlohmann::ordered_json j;
  j["query"] = r.query;
  j["doc_id"] = r.doc.id;
  j["doc_text"] = r.doc.text;
  j["explanation"] = r.explanation;
  j["label"] = r.label;
  j["provenance"] = to_string(r.provenance);
  j["teacher_model"] = r.teacher_model;
  return j;
}

SynthRecord synth_record_from_json(const nlohmann::json& j) {
  SynthRecord r;
  r.query = required(j, "query");
  r.doc.id = required(j, "doc_id");
  r.doc.text = required(j, "doc_text");
  r.explanation = required(j, "explanation");
  r.label = j.at("label").get<int>();
  if (r.label < 0 || r.label > 2) throw ValidationError("label out of range");
  auto prov = required(j, "provenance");
  if (prov == "linked") r.provenance = Provenance::kLinked;
  else if (prov == "websearch") r.provenance = Provenance::kWebSearch;
  else throw ValidationError("unknown provenance '" + prov + "'");
  r.teacher_model = required(j, "teacher_model");
  return r;
}

std::map<std::string, std::vector<SeedPair>> group_by_community(const std::vector<SeedPair>& seeds) {
  std::map<std::string, std::vector<SeedPair>> groups;
  for (const auto& s : seeds) groups[s.community].push_back(s);
  return groups;
}

std::vector<SeedPair> round_robin_sample(const std::map<std::string, std::vector<SeedPair>>& groups,
                                         std::size_t n, std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  std::vector<std::vector<SeedPair>> pools;
  for (const auto& [name, items] : groups) {
    pools.push_back(items);
    shuffle(pools.back(), rng);
  }
  std::vector<SeedPair> out;
  std::vector<std::size_t> pos(pools.size(), 0);
  bool progressed = true;
  while (out.size() < n && progressed) {
    progressed = false;
    for (std::size_t c = 0; c < pools.size() && out.size() < n; ++c) {
      if (pos[c] < pools[c].size()) {
        out.push_back(pools[c][pos[c]++]);
        progressed = true;
      }
    }
  }
  return out;
}

FilterResult contamination_filter(const std::vector<SeedPair>& seeds,
                                  const std::set<std::string>& exclusion) {
  FilterResult r;
  for (const auto& s : seeds) {
    if (exclusion.count(normalize_query(s.query))) ++r.dropped;
    else r.kept.push_back(s);
  }
  return r;
}

std::vector<std::string> extract_links(std::string_view answer) {
  static const std::regex href_re(R"re(href\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s>"']+)))re",
                                  std::regex::ECMAScript | std::regex::icase);
  static const std::regex bare_re(R"(https?://[^\s<>"'\[\]{}|\\^`]+)",
                                  std::regex::ECMAScript | std::regex::icase);
  std::string text(answer);
  std::vector<std::pair<std::size_t, std::string>> found;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), href_re); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    for (int g = 1; g <= 3; ++g) {
      if (!m[g].matched) continue;
      auto url = std::string(trim(decode_html_entities(m[g].str())));
      if (is_http_url(url)) found.emplace_back(static_cast<std::size_t>(m.position(g)), url);
    }
  }
  for (auto it = std::sregex_iterator(text.begin(), text.end(), bare_re); it != std::sregex_iterator(); ++it) {
    auto url = clean_bare_url(decode_html_entities(it->str()));
    if (is_http_url(url)) found.emplace_back(static_cast<std::size_t>(it->position()), url);
  }
  std::stable_sort(found.begin(), found.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (auto& [pos, url] : found)
    if (seen.insert(url).second) out.push_back(std::move(url));
  return out;
}

std::string doc_id_for_url(std::string_view url) { return "web-" + sha256_hex(url).substr(0, 16); }

DatagenCounters& DatagenCounters::operator+=(const DatagenCounters& o) {
  seeds += o.seeds;
  linked_found += o.linked_found;
  fetched += o.fetched;
  fetch_failed += o.fetch_failed;
  annotated += o.annotated;
  skipped += o.skipped;
  websearch_ok += o.websearch_ok;
  search_failed += o.search_failed;
  return *this;
}

nlohmann::ordered_json DatagenCounters::to_json() const {
  nlohmann::ordered_json j;
  j["seeds"] = seeds;
  j["linked_found"] = linked_found;
  j["fetched"] = fetched;
  j["fetch_failed"] = fetch_failed;
  j["annotated"] = annotated;
  j["skipped"] = skipped;
  j["websearch_ok"] = websearch_ok;
  j["search_failed"] = search_failed;
  return j;
}

std::optional<Annotation> annotate(Gateway& teacher, std::string_view query, const Document& doc,
                                   DatagenCounters& counters, const AnnotateOptions& options,
                                   const PromptSet& prompts) {
  if (trim(doc.text).empty()) throw ValidationError("cannot annotate empty document " + doc.id);
  ChatRequest req;
  req.messages = render_teacher_prompt(query, doc.text, prompts, options.budget);
  req.temperature = 0.0;
  req.top_p = 1.0;
  req.n = 1;
  req.max_tokens = options.max_tokens;
  for (int attempt = 0; attempt <= options.retries_on_parse_fail; ++attempt) {
    std::vector<Completion> got;
    try {
      got = teacher.complete(req);
    } catch (const ServiceError& e) {
      throw ServiceError("teacher annotation failed for query \"" + std::string(query) +
                         "\", document " + doc.id + ": " + e.what());
    }
    auto parsed = parse_rerank_output(got.front());
    if (parsed.parse_ok) {
      ++counters.annotated;
      return Annotation{parsed.explanation, parsed.label};
    }
  }
  ++counters.skipped;
  return std::nullopt;
}

std::vector<std::string> parse_numbered_list(std::string_view text) {
  static const std::regex item_re(R"(^\s*\d+\s*[.):]\s*(.*)$)");
  std::vector<std::string> out;
  for (auto line : split_lines(text)) {
    std::string s(line);
    std::smatch m;
    if (std::regex_match(s, m, item_re)) {
      auto item = std::string(trim(m[1].str()));
      if (!item.empty()) out.push_back(std::move(item));
    }
  }
  return out;
}

std::vector<std::string> generate_related_queries(Gateway& teacher, const SeedPair& seed,
                                                  const std::vector<LinkedDoc>& linked_docs,
                                                  const AnnotateOptions& options,
                                                  const PromptSet& prompts) {
  ChatRequest req;
  req.messages = render_related_queries_prompt(seed.query, seed.answer, linked_docs, prompts, options.budget);
  req.temperature = 0.0;
  req.top_p = 1.0;
  req.n = 1;
  req.max_tokens = options.max_tokens;
  try {
    return parse_numbered_list(teacher.complete(req).front().text);
  } catch (const ServiceError& e) {
    throw ServiceError("related-query generation failed for seed " + seed.source_id + ": " + e.what());
  }
}

std::vector<SynthRecord> generate_synth(const SeedPair& seed, Gateway& teacher,
                                        WebSearchClient& search, Fetcher& fetcher, Rng& rng,
                                        DatagenCounters& counters, const SynthOptions& options,
                                        const PromptSet& prompts) {
  std::vector<SynthRecord> records;
  ++counters.seeds;

  auto try_fetch = [&](const std::string& url) -> std::optional<std::string> {
    try {
      auto text = fetcher.fetch(url);
      if (trim(text).empty() || !is_valid_utf8(text)) {
        ++counters.fetch_failed;
        return std::nullopt;
      }
      ++counters.fetched;
      return text;
    } catch (const ServiceError&) {
      ++counters.fetch_failed;
      return std::nullopt;
    }
  };

  auto links = extract_links(seed.answer);
  counters.linked_found += links.size();
  std::vector<LinkedDoc> linked_docs;
  for (const auto& url : links) {
    auto text = try_fetch(url);
    if (!text) continue;
    Document doc{doc_id_for_url(url), std::nullopt, *text, std::nullopt};
    linked_docs.push_back({url, *text});
    if (auto ann = annotate(teacher, seed.query, doc, counters, options.annotate, prompts))
      records.push_back({seed.query, std::move(doc), ann->explanation, ann->label,
                         Provenance::kLinked, options.teacher_model});
  }

  auto related = generate_related_queries(teacher, seed, linked_docs, options.annotate, prompts);
  std::erase_if(related, [&](const std::string& q) {
    return options.exclusion.count(normalize_query(q)) > 0;
  });
  if (related.empty()) return records;
  const auto& related_query = related[uniform_index(rng, related.size())];

  std::vector<SearchResult> results;
  try {
    results = search.search(related_query);
  } catch (const ServiceError&) {
    ++counters.search_failed;
    return records;
  }
  if (results.size() > WebSearchClient::kMaxResults) results.resize(WebSearchClient::kMaxResults);
  if (results.empty()) {
    ++counters.search_failed;
    return records;
  }
  const auto& hit = results[uniform_index(rng, results.size())];
  std::optional<std::string> text;
  if (!trim(hit.fetched_text).empty()) {
    text = hit.fetched_text;
    ++counters.fetched;
  } else {
    text = try_fetch(hit.url);
  }
  if (!text) return records;
  Document doc{doc_id_for_url(hit.url), std::nullopt, *text, std::nullopt};
  if (auto ann = annotate(teacher, related_query, doc, counters, options.annotate, prompts)) {
    records.push_back({related_query, std::move(doc), ann->explanation, ann->label,
                       Provenance::kWebSearch, options.teacher_model});
    ++counters.websearch_ok;
  }
  return records;
}

SynthBatch generate_synth_batch(const std::vector<SeedPair>& seeds, Gateway& teacher,
                                WebSearchClient& search, Fetcher& fetcher, std::uint64_t rng_seed,
                                std::size_t workers, const SynthOptions& options,
                                const PromptSet& prompts) {
  std::vector<std::vector<SynthRecord>> per_seed(seeds.size());
  std::vector<DatagenCounters> counters(seeds.size());
  parallel_for(seeds.size(), workers, [&](std::size_t i) {
    Rng rng(derive_seed(rng_seed, "datagen/" + std::to_string(i) + "/" + seeds[i].source_id));
    per_seed[i] = generate_synth(seeds[i], teacher, search, fetcher, rng, counters[i], options, prompts);
  });
  SynthBatch batch;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    batch.counters += counters[i];
    batch.records_per_seed.push_back(per_seed[i].size());
    for (auto& r : per_seed[i]) batch.records.push_back(std::move(r));
  }
  return batch;
}

std::string format_synth_dataset(std::vector<SynthRecord> records, std::uint64_t rng_seed) {
  auto key = [](const SynthRecord& r) {
    return std::tie(r.query, r.doc.id, r.provenance, r.label, r.explanation, r.teacher_model, r.doc.text);
  };
  std::sort(records.begin(), records.end(),
            [&](const SynthRecord& a, const SynthRecord& b) { return key(a) < key(b); });
  Rng rng(rng_seed);
  shuffle(records, rng);
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

void emit_synth_dataset(std::vector<SynthRecord> records, const std::filesystem::path& path,
                        std::uint64_t rng_seed) {
  write_file(path, format_synth_dataset(std::move(records), rng_seed));
}

std::vector<SynthRecord> load_synth_dataset(const std::filesystem::path& path) {
  std::vector<SynthRecord> out;
  std::size_t line_no = 0;
  const std::string bytes = read_file(path);
  for (std::string_view line : split_lines(bytes)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(synth_record_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw ValidationError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace explainrank
