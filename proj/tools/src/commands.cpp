#include "explainrank/cli/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <memory>
#include <ostream>
#include <set>

#include "explainrank/datagen.hpp"
#include "explainrank/error.hpp"
#include "explainrank/evaluate.hpp"
#include "explainrank/gateway.hpp"
#include "explainrank/hash.hpp"
#include "explainrank/model.hpp"
#include "explainrank/prompts.hpp"
#include "explainrank/refine.hpp"
#include "explainrank/reranker.hpp"
#include "explainrank/retrieval.hpp"
#include "explainrank/rng.hpp"
#include "explainrank/text.hpp"
#include "explainrank/web.hpp"

#ifndef EXPLAINRANK_VERSION
#define EXPLAINRANK_VERSION "0.0.0"
#endif

namespace explainrank::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr const char* kIndexFile = "bm25.idx";

enum class ModelRole { kStudent, kTeacher, kReward };

const fs::path& require_file(const fs::path& p, const std::string& key) {
  if (p.empty()) throw ValidationError(key + " is not set in the config");
  if (!fs::is_regular_file(p)) throw ValidationError(key + " does not exist: " + p.string());
  return p;
}

std::string env_or_empty(const std::string& name) {
  if (name.empty()) return "";
  const char* v = std::getenv(name.c_str());
  return v ? v : "";
}

class Manifest {
 public:
  Manifest(const PipelineConfig& config, std::string command) : command_(std::move(command)) {
    config_hash_ = sha256_hex(config.to_json().dump());
  }

  void input(const std::string& role, const std::string& bytes) { inputs_[role] = sha256_hex(bytes); }
  void input_file(const std::string& role, const fs::path& p) { input(role, read_file(p)); }
  void output(const std::string& name, const std::string& bytes) { outputs_[name] = sha256_hex(bytes); }
  ordered_json& counts() { return counts_; }
  void set_status(std::string status, std::string error = {}) {
    status_ = std::move(status);
    error_ = std::move(error);
  }

  void write(const fs::path& path) const {
    ordered_json j;
    j["command"] = command_;
    j["version"] = EXPLAINRANK_VERSION;
    j["status"] = status_;
    if (!error_.empty()) j["error"] = error_;
    j["config_sha256"] = config_hash_;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    j["counts"] = counts_.is_null() ? ordered_json::object() : counts_;
    write_file(path, j.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::string config_hash_;
  std::string status_ = "ok";
  std::string error_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
  ordered_json counts_;
};

void emit(const fs::path& dir, const std::string& name, const std::string& bytes, Manifest& manifest) {
  write_file(dir / name, bytes);
  manifest.output(name, bytes);
}

PromptSet load_prompts(const PipelineConfig& config) {
  if (config.paths.templates.empty()) return PromptSet::defaults();
  return PromptSet::load_dir(config.paths.templates);
}

ContextBudget budget_of(const PipelineConfig& config) {
  return {config.gateway.context_tokens, static_cast<std::size_t>(config.gateway.max_tokens)};
}

std::string model_for(const PipelineConfig& config, ModelRole role) {
  switch (role) {
    case ModelRole::kStudent: return config.gateway.student_model;
    case ModelRole::kTeacher: return config.gateway.teacher_model;
    case ModelRole::kReward: return config.gateway.reward_model;
  }
  return {};
}

const char* role_key(ModelRole role) {
  switch (role) {
    case ModelRole::kStudent: return "student";
    case ModelRole::kTeacher: return "teacher";
    case ModelRole::kReward: return "reward";
  }
  return "";
}

std::unique_ptr<Gateway> make_gateway(const PipelineConfig& config, ModelRole role,
                                      std::string model = {}) {
  const auto& g = config.gateway;
  std::shared_ptr<ChatBackend> backend;
  if (g.backend == BackendKind::kMock) {
    const fs::path& fixture = role == ModelRole::kStudent   ? g.mock_student
                              : role == ModelRole::kTeacher ? g.mock_teacher
                                                            : g.mock_reward;
    require_file(fixture, std::string("gateway.mock.") + role_key(role));
    backend = load_mock_backend(fixture);
  } else {
    if (g.base_url.empty())
      throw ValidationError(
          "gateway.base_url is not set; point it at an OpenAI-compatible endpoint "
          "or set gateway.backend to \"mock\"");
    if (model.empty()) model = model_for(config, role);
    if (model.empty())
      throw ValidationError(std::string("gateway.models.") + role_key(role) + " is not set");
    HttpBackendConfig hc;
    hc.base_url = g.base_url;
    hc.model = model;
    hc.api_key = env_or_empty(g.api_key_env);
    backend = std::make_shared<HttpChatBackend>(std::move(hc));
  }
  RetryPolicy retry;
  retry.max_retries = g.max_retries;
  retry.initial_backoff = std::chrono::milliseconds(g.initial_backoff_ms);
  return std::make_unique<Gateway>(std::move(backend), retry, g.max_in_flight);
}

/// Loads the cached index when it matches the corpus, else builds and
/// refreshes the cache. Returns the cache disposition for logging.
Bm25Index index_for(const PipelineConfig& config, const std::string& corpus_bytes,
                    std::string& disposition, std::ostream& log) {
  const fs::path cache = config.paths.output_dir / kIndexFile;
  const std::string hash = sha256_hex(corpus_bytes);
  const auto probe = probe_index(cache, hash, config.bm25);
  switch (probe.status) {
    case CacheProbe::Status::kHit:
      disposition = "hit";
      return load_index(cache);
    case CacheProbe::Status::kMissing: disposition = "built"; break;
    case CacheProbe::Status::kStale:
      disposition = "rebuilt";
      log << "index cache is stale (" << probe.detail << "); rebuilding\n";
      break;
    case CacheProbe::Status::kCorrupt:
      disposition = "rebuilt";
      log << "warning: index cache is corrupt (" << probe.detail << "); rebuilding\n";
      break;
  }
  auto index = build_index(parse_corpus(corpus_bytes), config.bm25);
  save_index(index, hash, cache);
  return index;
}

std::map<std::string, Query> queries_by_id(const std::vector<Query>& queries) {
  std::map<std::string, Query> m;
  for (const auto& q : queries) m.emplace(q.id, q);
  return m;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

void apply_overrides(PipelineConfig& config, const Overrides& o, Command command) {
  if (o.seed) config.rng_seed = *o.seed;
  if (o.out) config.paths.output_dir = fs::absolute(*o.out);
  if (o.alpha) config.rerank.alpha = *o.alpha;
  if (o.tau) config.refine.tau = *o.tau;
  if (o.m) config.refine.m = *o.m;
  if (o.limit) {
    config.datagen.sample = config.datagen.sample == 0 ? *o.limit : std::min(config.datagen.sample, *o.limit);
  }
  if (o.k) {
    switch (command) {
      case Command::kRetrieve: config.retrieval_k = *o.k; break;
      case Command::kRerank: config.rerank.candidates = *o.k; break;
      case Command::kRefine: config.refine.k = static_cast<int>(*o.k); break;
      case Command::kEval:
      case Command::kCompare: config.eval_k = *o.k; break;
      case Command::kIndex:
      case Command::kDatagen: throw ValidationError("--k does not apply to this command");
    }
  }
  config.refine.seed = config.rng_seed;
  config.refine.max_tokens = config.gateway.max_tokens;
  config.refine.budget = budget_of(config);
  config.rerank.max_tokens = config.gateway.max_tokens;
  config.rerank.budget = budget_of(config);
}

void cmd_index(const PipelineConfig& config, std::ostream& log) {
  const std::string bytes = read_file(require_file(config.paths.corpus, "paths.corpus"));
  Manifest manifest(config, "index");
  manifest.input("corpus", bytes);
  std::string disposition;
  const auto index = index_for(config, bytes, disposition, log);
  if (disposition == "hit") log << "cache hit: " << (config.paths.output_dir / kIndexFile).string() << "\n";
  else log << "index " << disposition << ": " << index.doc_count() << " documents\n";
  manifest.output(kIndexFile, read_file(config.paths.output_dir / kIndexFile));
  manifest.counts() = {{"documents", index.doc_count()}, {"terms", index.postings().size()}};
  manifest.write(config.paths.output_dir / "index.manifest.json");
}

void cmd_retrieve(const PipelineConfig& config, std::ostream& log) {
  const std::string query_bytes = read_file(require_file(config.paths.queries, "paths.queries"));
  const auto queries = parse_queries(query_bytes);
  Manifest manifest(config, "retrieve");
  manifest.input("queries", query_bytes);
  Run run;
  std::size_t empty = 0;
  auto append = [&](const Query& q, const std::vector<RetrievalResult>& hits, const char* tag) {
    if (hits.empty()) ++empty;
    for (const auto& h : hits) run.push_back({q.id, h.doc_id, h.rank, h.score, tag});
  };
  if (config.retrieval_mode == RetrievalMode::kBm25) {
    const std::string corpus_bytes = read_file(require_file(config.paths.corpus, "paths.corpus"));
    manifest.input("corpus", corpus_bytes);
    std::string disposition;
    const auto index = index_for(config, corpus_bytes, disposition, log);
    for (const auto& q : queries) append(q, bm25_search(index, q.text, config.retrieval_k), "bm25");
  } else {
    const auto& doc_path = require_file(config.paths.embeddings, "paths.embeddings");
    const auto& q_path = require_file(config.paths.query_embeddings, "paths.query_embeddings");
    const std::string doc_bytes = read_file(doc_path), q_bytes = read_file(q_path);
    manifest.input("embeddings", doc_bytes);
    manifest.input("query_embeddings", q_bytes);
    const auto store = parse_embeddings(doc_bytes);
    const auto qstore = parse_embeddings(q_bytes);
    if (qstore.dim() != store.dim())
      throw ValidationError("query embeddings have dimension " + std::to_string(qstore.dim()) +
                            " but document embeddings have " + std::to_string(store.dim()));
    for (const auto& q : queries) append(q, dense_search(store, qstore.vector(q.id), config.retrieval_k), "dense");
  }
  validate_run(run);
  emit(config.paths.output_dir, "retrieve.run", format_run(run), manifest);
  manifest.counts() = {{"queries", queries.size()}, {"entries", run.size()}, {"empty_queries", empty}};
  manifest.write(config.paths.output_dir / "retrieve.manifest.json");
  log << "retrieved " << run.size() << " entries for " << queries.size() << " queries\n";
}

void cmd_rerank(const PipelineConfig& config, const fs::path& run_in, bool instruct, std::ostream& log) {
  const std::string run_bytes = read_file(require_file(run_in, "input run"));
  const std::string corpus_bytes = read_file(require_file(config.paths.corpus, "paths.corpus"));
  const std::string query_bytes = read_file(require_file(config.paths.queries, "paths.queries"));
  const Run input = parse_run(run_bytes);
  const Corpus corpus = parse_corpus(corpus_bytes);
  const auto queries = queries_by_id(parse_queries(query_bytes));
  const auto groups = group_run(input);

  // every precondition is checked before the first model call
  for (const auto& [qid, entries] : groups) {
    auto q = queries.find(qid);
    if (q == queries.end()) throw ValidationError("run query " + qid + " is not in paths.queries");
    if (instruct && !config.relevance_definitions.count(q->second.domain))
      throw ValidationError("--instruct: no relevance definition for domain \"" + q->second.domain + "\"");
  }
  const PromptSet prompts = load_prompts(config);
  auto gateway = make_gateway(config, ModelRole::kStudent);

  Manifest manifest(config, "rerank");
  manifest.input("run", run_bytes);
  manifest.input("corpus", corpus_bytes);
  manifest.input("queries", query_bytes);

  Run out;
  std::string explanations;
  std::size_t candidates = 0, parse_failures = 0;
  for (const auto& [qid, entries] : groups) {
    const Query& q = queries.at(qid);
    std::vector<RetrievalResult> cands;
    for (const auto& e : entries) {
      if (cands.size() == config.rerank.candidates) break;
      cands.push_back({e.doc_id, e.score, e.rank});
    }
    std::optional<std::string> def;
    if (instruct) def = config.relevance_definitions.at(q.domain);
    std::vector<ScoredDoc> scored;
    try {
      scored = rerank(q, cands, corpus, *gateway, config.rerank, def, prompts);
    } catch (const ServiceError& e) {
      manifest.set_status("aborted", e.what());
      manifest.counts() = {{"queries_done", out.empty() ? 0 : group_run(out).size()},
                           {"queries", groups.size()},
                           {"candidates", candidates}};
      manifest.write(config.paths.output_dir / "rerank.manifest.json");
      throw;
    }
    candidates += scored.size();
    for (const auto& d : scored) {
      if (!d.parse_ok) ++parse_failures;
      explanations += explanation_line(qid, d);
      explanations += '\n';
    }
    auto r = to_run(qid, scored);
    out.insert(out.end(), r.begin(), r.end());
  }
  emit(config.paths.output_dir, "rerank.run", format_run(out), manifest);
  emit(config.paths.output_dir, "rerank.explanations.jsonl", explanations, manifest);
  manifest.counts() = {{"queries", groups.size()},
                       {"candidates", candidates},
                       {"parse_failures", parse_failures},
                       {"instruct", instruct}};
  manifest.write(config.paths.output_dir / "rerank.manifest.json");
  log << "reranked " << candidates << " candidates over " << groups.size() << " queries ("
      << parse_failures << " unparsed)\n";
}

void cmd_datagen(const PipelineConfig& config, std::ostream& log) {
  const auto& d = config.datagen;
  std::string search_key;
  if (d.mode == DatagenMode::kLive) {
    search_key = env_or_empty(d.search_api_key_env);
    if (search_key.empty())
      throw ValidationError("live datagen needs a search API key in $" + d.search_api_key_env);
  } else {
    require_file(d.search_fixture, "datagen.search.fixture");
    require_file(d.fetch_fixture, "datagen.fetch.fixture");
  }
  const std::string seed_bytes = read_file(require_file(config.paths.seeds, "paths.seeds"));
  Manifest manifest(config, "datagen");
  manifest.input("seeds", seed_bytes);

  SynthOptions options;
  options.annotate.retries_on_parse_fail = d.retries_on_parse_fail;
  options.annotate.max_tokens = config.gateway.max_tokens;
  options.annotate.budget = budget_of(config);
  if (!config.paths.exclusion.empty()) {
    const std::string ex_bytes = read_file(require_file(config.paths.exclusion, "paths.exclusion"));
    manifest.input("exclusion", ex_bytes);
    for (const auto& q : parse_queries(ex_bytes)) options.exclusion.insert(normalize_query(q.text));
  }
  const auto filtered = contamination_filter(parse_seeds(seed_bytes), options.exclusion);
  const std::size_t n = d.sample == 0 ? filtered.kept.size() : std::min(d.sample, filtered.kept.size());
  const auto sampled =
      round_robin_sample(group_by_community(filtered.kept), n, derive_seed(config.rng_seed, "datagen/sample"));

  const PromptSet prompts = load_prompts(config);
  auto teacher = make_gateway(config, ModelRole::kTeacher);
  options.teacher_model =
      config.gateway.teacher_model.empty() ? teacher->backend().name() : config.gateway.teacher_model;

  std::unique_ptr<WebSearchClient> search;
  std::unique_ptr<Fetcher> fetcher;
  if (d.mode == DatagenMode::kLive) {
    BraveSearchConfig sc;
    sc.endpoint = d.search_endpoint;
    sc.api_key = search_key;
    search = std::make_unique<BraveSearchClient>(std::move(sc));
    fetcher = std::make_unique<HttpFetcher>();
  } else {
    manifest.input_file("search_fixture", d.search_fixture);
    manifest.input_file("fetch_fixture", d.fetch_fixture);
    search = load_search_fixture(d.search_fixture);
    fetcher = load_fetch_fixture(d.fetch_fixture);
  }

  auto batch = generate_synth_batch(sampled, *teacher, *search, *fetcher,
                                    derive_seed(config.rng_seed, "datagen"), d.workers, options, prompts);
  const std::string synth = format_synth_dataset(batch.records, derive_seed(config.rng_seed, "shuffle"));
  emit(config.paths.output_dir, "synth.jsonl", synth, manifest);
  const auto emitted = load_synth_dataset(config.paths.output_dir / "synth.jsonl");
  emit(config.paths.output_dir, "sft.jsonl", format_sft_dataset(emitted, prompts, budget_of(config)), manifest);

  auto& counts = manifest.counts();
  counts = batch.counters.to_json();
  counts["contaminated_dropped"] = filtered.dropped;
  counts["sampled"] = sampled.size();
  counts["records"] = batch.records.size();
  counts["records_per_seed"] = batch.records_per_seed;
  manifest.write(config.paths.output_dir / "datagen.manifest.json");
  log << "datagen: " << batch.records.size() << " records from " << sampled.size() << " seeds\n";
}

void cmd_refine(const PipelineConfig& config, const fs::path& pairs_in, std::optional<int> iter,
                std::ostream& log) {
  const fs::path& pairs_path = pairs_in.empty() ? config.paths.pairs : pairs_in;
  const std::string pair_bytes = read_file(require_file(pairs_path, pairs_in.empty() ? "paths.pairs" : "input pairs"));
  const auto pairs = parse_pairs(pair_bytes);
  if (iter && (*iter < 1 || *iter > config.refine.iterations))
    throw ValidationError("--iter must be within 1.." + std::to_string(config.refine.iterations));

  std::unique_ptr<RewardClient> reward_inner;
  std::unique_ptr<Gateway> reward_gateway;
  std::string reward_fixture_bytes;
  switch (config.reward.kind) {
    case RewardKind::kMock:
      reward_fixture_bytes = read_file(require_file(config.reward.fixture, "reward.fixture"));
      reward_inner = load_reward_fixture(config.reward.fixture);
      break;
    case RewardKind::kEndpoint:
      if (config.reward.endpoint.empty()) throw ValidationError("reward.endpoint is not set");
      reward_inner = std::make_unique<EndpointRewardClient>(config.reward.endpoint,
                                                            env_or_empty(config.gateway.api_key_env));
      break;
    case RewardKind::kChat:
      reward_gateway = make_gateway(config, ModelRole::kReward);
      reward_inner = std::make_unique<ChatRewardClient>(*reward_gateway, load_prompts(config), budget_of(config));
      break;
  }
  CachedRewardClient reward(*reward_inner);
  const PromptSet prompts = load_prompts(config);

  const int first = iter ? *iter : 1;
  const int last = iter ? *iter : config.refine.iterations;
  for (int t = first; t <= last; ++t) {
    const auto& models = config.gateway.iteration_models;
    std::string model = static_cast<std::size_t>(t) <= models.size() ? models[t - 1] : std::string{};
    auto gateway = make_gateway(config, ModelRole::kStudent, model);

    Manifest manifest(config, "refine");
    manifest.input("pairs", pair_bytes);
    if (!reward_fixture_bytes.empty()) manifest.input("reward_fixture", reward_fixture_bytes);
    const fs::path manifest_path = config.paths.output_dir / ("refine.iter" + std::to_string(t) + ".manifest.json");
    try {
      const auto result = refine_pairs(pairs, *gateway, reward, config.refine, t, prompts);
      emit(config.paths.output_dir, dt_filename(t), format_weighted_dataset(result.examples), manifest);
      manifest.counts() = result.report.to_json();
      manifest.write(manifest_path);
      log << "iteration " << t << ": " << result.report.kept_examples << " examples from "
          << result.report.pairs << " pairs (" << result.report.degenerate << " degenerate)\n";
    } catch (const ServiceError& e) {
      manifest.set_status("aborted", e.what());
      manifest.counts() = {{"iter", t}, {"pairs", pairs.size()}};
      manifest.write(manifest_path);
      throw;
    }
  }
}

void cmd_eval(const PipelineConfig& config, const std::vector<fs::path>& runs, std::ostream& out,
              std::ostream& log) {
  if (runs.empty()) throw ValidationError("eval needs at least one run file");
  const std::string qrels_bytes = read_file(require_file(config.paths.qrels, "paths.qrels"));
  const std::string query_bytes = read_file(require_file(config.paths.queries, "paths.queries"));
  const auto loaded = parse_qrels(qrels_bytes);
  if (loaded.duplicate_overrides)
    log << "warning: " << loaded.duplicate_overrides << " duplicate qrels lines; later lines win\n";
  std::map<std::string, std::string> domains;
  for (const auto& q : parse_queries(query_bytes)) domains[q.id] = q.domain;

  Manifest manifest(config, "eval");
  manifest.input("qrels", qrels_bytes);
  manifest.input("queries", query_bytes);
  std::vector<std::pair<std::string, EvalReport>> reports;
  ordered_json j;
  j["k"] = config.eval_k;
  j["runs"] = ordered_json::object();
  for (const auto& path : runs) {
    const std::string bytes = read_file(require_file(path, "run"));
    const std::string name = path.filename().string();
    manifest.input("run:" + name, bytes);
    auto report = evaluate_run(parse_run(bytes), loaded.qrels, domains, config.eval_k, config.domains);
    if (report.missing_queries)
      log << name << ": " << report.missing_queries << " judged queries missing from the run (scored 0)\n";
    j["runs"][name] = report.to_json();
    reports.emplace_back(name, std::move(report));
  }
  const std::string table = format_eval_table(reports);
  emit(config.paths.output_dir, "eval.json", j.dump(2) + "\n", manifest);
  emit(config.paths.output_dir, "eval.txt", table, manifest);
  manifest.counts() = {{"runs", runs.size()}, {"k", config.eval_k}};
  manifest.write(config.paths.output_dir / "eval.manifest.json");
  out << table;
}

void cmd_compare(const PipelineConfig& config, const fs::path& run_a, const fs::path& run_b,
                 std::ostream& out, std::ostream& log) {
  const std::string qrels_bytes = read_file(require_file(config.paths.qrels, "paths.qrels"));
  const std::string a_bytes = read_file(require_file(run_a, "run A"));
  const std::string b_bytes = read_file(require_file(run_b, "run B"));
  const auto qrels = parse_qrels(qrels_bytes).qrels;
  const auto a = per_query_ndcg(parse_run(a_bytes), qrels, config.eval_k);
  const auto b = per_query_ndcg(parse_run(b_bytes), qrels, config.eval_k);
  const auto result = paired_t_test(a, b);
  const bool pass = result.p < 0.05;

  Manifest manifest(config, "compare");
  manifest.input("qrels", qrels_bytes);
  manifest.input("run_a", a_bytes);
  manifest.input("run_b", b_bytes);
  ordered_json j{{"a", run_a.filename().string()},
                 {"b", run_b.filename().string()},
                 {"k", config.eval_k},
                 {"n", result.n},
                 {"mean_difference", result.mean_difference},
                 {"t", result.t},
                 {"p", result.p},
                 {"significant", pass}};
  emit(config.paths.output_dir, "compare.json", j.dump(2) + "\n", manifest);
  manifest.counts() = {{"queries", result.n}};
  manifest.write(config.paths.output_dir / "compare.manifest.json");

  out << "n=" << result.n << " mean_diff=" << fmt("%.6f", result.mean_difference)
      << " t=" << fmt("%.6f", result.t) << "\n";
  out << "p=" << fmt("%.6g", result.p) << "\n";
  out << (pass ? "PASS: p < 0.05" : "FAIL: p >= 0.05") << "\n";
  log << "compared " << result.n << " queries at nDCG@" << config.eval_k << "\n";
}

}  // namespace explainrank::cli
