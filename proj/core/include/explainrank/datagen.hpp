#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "explainrank/gateway.hpp"
#include "explainrank/model.hpp"
#include "explainrank/prompts.hpp"
#include "explainrank/rng.hpp"
#include "explainrank/web.hpp"

namespace explainrank {

struct SeedPair {
  std::string query;
  std::string answer;  // may contain HTML
  std::string community;
  std::string source_id;

  bool operator==(const SeedPair&) const = default;
};

/// JSONL {"id","community","query","answer"}.
std::vector<SeedPair> load_seeds(const std::filesystem::path& path);
std::vector<SeedPair> parse_seeds(const std::string& bytes);

enum class Provenance { kLinked, kWebSearch };
std::string to_string(Provenance p);

struct SynthRecord {
  std::string query;
  Document doc;
  std::string explanation;
  int label = 0;
  Provenance provenance = Provenance::kLinked;
  std::string teacher_model;

  bool operator==(const SynthRecord&) const = default;
};

nlohmann::ordered_json to_json(const SynthRecord& record);
SynthRecord synth_record_from_json(const nlohmann::json& j);

/// Visits communities in sorted name order, taking one item per community
/// per cycle from a seeded shuffle of that community. Stops at n or when
/// every community is exhausted.
std::vector<SeedPair> round_robin_sample(const std::map<std::string, std::vector<SeedPair>>& groups,
                                         std::size_t n, std::uint64_t rng_seed);

std::map<std::string, std::vector<SeedPair>> group_by_community(const std::vector<SeedPair>& seeds);

struct FilterResult {
  std::vector<SeedPair> kept;
  std::size_t dropped = 0;
};

/// `exclusion` holds normalize_query() forms.
FilterResult contamination_filter(const std::vector<SeedPair>& seeds,
                                  const std::set<std::string>& exclusion);

/// href targets and bare http(s) URLs in first-occurrence order, deduplicated.
std::vector<std::string> extract_links(std::string_view answer);

/// Stable document id for a fetched URL.
std::string doc_id_for_url(std::string_view url);

struct DatagenCounters {
  std::size_t seeds = 0;
  std::size_t linked_found = 0;
  std::size_t fetched = 0;
  std::size_t fetch_failed = 0;
  std::size_t annotated = 0;
  std::size_t skipped = 0;
  std::size_t websearch_ok = 0;
  std::size_t search_failed = 0;

  DatagenCounters& operator+=(const DatagenCounters& o);
  bool operator==(const DatagenCounters&) const = default;
  nlohmann::ordered_json to_json() const;
};

struct Annotation {
  std::string explanation;
  int label = 0;
};

struct AnnotateOptions {
  int retries_on_parse_fail = 1;
  int max_tokens = 1024;
  ContextBudget budget{};
};

/// Greedy teacher call plus parse. Returns nullopt (and bumps
/// counters.skipped) when the output stays unparseable after the retry.
/// Gateway errors propagate with the query and document named.
std::optional<Annotation> annotate(Gateway& teacher, std::string_view query, const Document& doc,
                                   DatagenCounters& counters, const AnnotateOptions& options = {},
                                   const PromptSet& prompts = PromptSet::defaults());

/// Parses "1. foo" / "2) bar" lines into trimmed queries.
std::vector<std::string> parse_numbered_list(std::string_view text);

std::vector<std::string> generate_related_queries(Gateway& teacher, const SeedPair& seed,
                                                  const std::vector<LinkedDoc>& linked_docs,
                                                  const AnnotateOptions& options = {},
                                                  const PromptSet& prompts = PromptSet::defaults());

struct SynthOptions {
  std::string teacher_model = "teacher";
  AnnotateOptions annotate{};
  /// Related queries whose normalized form is in here are never sampled.
  std::set<std::string> exclusion;
};

/// Full per-seed procedure: annotate every fetchable linked document with
/// the seed query, then sample one related query, search it, sample one
/// result, and annotate that with the related query.
std::vector<SynthRecord> generate_synth(const SeedPair& seed, Gateway& teacher,
                                        WebSearchClient& search, Fetcher& fetcher, Rng& rng,
                                        DatagenCounters& counters, const SynthOptions& options = {},
                                        const PromptSet& prompts = PromptSet::defaults());

struct SynthBatch {
  std::vector<SynthRecord> records;
  DatagenCounters counters;
  std::vector<std::size_t> records_per_seed;
};

/// generate_synth over many seeds, up to `workers` at a time. Each seed
/// draws from its own sub-stream of `rng_seed`, so results do not depend on
/// scheduling.
SynthBatch generate_synth_batch(const std::vector<SeedPair>& seeds, Gateway& teacher,
                                WebSearchClient& search, Fetcher& fetcher, std::uint64_t rng_seed,
                                std::size_t workers, const SynthOptions& options = {},
                                const PromptSet& prompts = PromptSet::defaults());

/// Sorts, shuffles with `rng_seed`, and writes one JSON object per line.
void emit_synth_dataset(std::vector<SynthRecord> records, const std::filesystem::path& path,
                        std::uint64_t rng_seed);
std::string format_synth_dataset(std::vector<SynthRecord> records, std::uint64_t rng_seed);
std::vector<SynthRecord> load_synth_dataset(const std::filesystem::path& path);

}  // namespace explainrank
