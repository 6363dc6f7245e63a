#include "explainrank/cli/config.hpp"

#include <set>

#include "explainrank/error.hpp"
#include "explainrank/model.hpp"

namespace explainrank::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ValidationError("config: " + where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key))
      throw ValidationError("config: unknown key " + (where.empty() ? key : where + "." + key));
  }
}

template <typename T>
void read(const json& obj, const char* key, const std::string& where, T& out) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config: " + where + "." + key + " has the wrong type");
  }
}

void read_path(const json& obj, const char* key, const std::string& where, const fs::path& base,
               fs::path& out) {
  std::string s;
  read(obj, key, where, s);
  if (s.empty()) return;
  fs::path p(s);
  out = p.is_absolute() ? p : (base / p).lexically_normal();
}

std::string rel(const fs::path& p, const fs::path& base) {
  if (p.empty()) return "";
  auto r = p.lexically_relative(base);
  return (r.empty() ? p : r).generic_string();
}

}  // namespace

PipelineConfig parse_config(const std::string& text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  check_keys(root, "", {"paths", "gateway", "reward", "retrieval", "rerank", "refine", "datagen",
                        "eval", "rng_seed", "domains", "relevance_definitions"});
  PipelineConfig c;
  c.base_dir = base_dir;

  if (auto it = root.find("paths"); it != root.end()) {
    const json& p = *it;
    check_keys(p, "paths", {"corpus", "queries", "qrels", "embeddings", "query_embeddings", "seeds",
                            "exclusion", "pairs", "templates", "output_dir"});
    read_path(p, "corpus", "paths", base_dir, c.paths.corpus);
    read_path(p, "queries", "paths", base_dir, c.paths.queries);
    read_path(p, "qrels", "paths", base_dir, c.paths.qrels);
    read_path(p, "embeddings", "paths", base_dir, c.paths.embeddings);
    read_path(p, "query_embeddings", "paths", base_dir, c.paths.query_embeddings);
    read_path(p, "seeds", "paths", base_dir, c.paths.seeds);
    read_path(p, "exclusion", "paths", base_dir, c.paths.exclusion);
    read_path(p, "pairs", "paths", base_dir, c.paths.pairs);
    read_path(p, "templates", "paths", base_dir, c.paths.templates);
    read_path(p, "output_dir", "paths", base_dir, c.paths.output_dir);
  }
  if (c.paths.output_dir.is_relative()) c.paths.output_dir = base_dir / c.paths.output_dir;

  if (auto it = root.find("gateway"); it != root.end()) {
    const json& g = *it;
    check_keys(g, "gateway", {"backend", "base_url", "api_key_env", "models", "max_in_flight",
                              "retries", "initial_backoff_ms", "context_tokens", "max_tokens",
                              "mock"});
    std::string backend = "http";
    read(g, "backend", "gateway", backend);
    if (backend == "http") c.gateway.backend = BackendKind::kHttp;
    else if (backend == "mock") c.gateway.backend = BackendKind::kMock;
    else throw ValidationError("config: gateway.backend must be \"http\" or \"mock\"");
    read(g, "base_url", "gateway", c.gateway.base_url);
    read(g, "api_key_env", "gateway", c.gateway.api_key_env);
    read(g, "max_in_flight", "gateway", c.gateway.max_in_flight);
    read(g, "retries", "gateway", c.gateway.max_retries);
    read(g, "initial_backoff_ms", "gateway", c.gateway.initial_backoff_ms);
    read(g, "context_tokens", "gateway", c.gateway.context_tokens);
    read(g, "max_tokens", "gateway", c.gateway.max_tokens);
    if (auto m = g.find("models"); m != g.end()) {
      check_keys(*m, "gateway.models", {"student", "teacher", "reward", "iterations"});
      read(*m, "student", "gateway.models", c.gateway.student_model);
      read(*m, "teacher", "gateway.models", c.gateway.teacher_model);
      read(*m, "reward", "gateway.models", c.gateway.reward_model);
      read(*m, "iterations", "gateway.models", c.gateway.iteration_models);
    }
    if (auto m = g.find("mock"); m != g.end()) {
      check_keys(*m, "gateway.mock", {"student", "teacher", "reward"});
      read_path(*m, "student", "gateway.mock", base_dir, c.gateway.mock_student);
      read_path(*m, "teacher", "gateway.mock", base_dir, c.gateway.mock_teacher);
      read_path(*m, "reward", "gateway.mock", base_dir, c.gateway.mock_reward);
    }
  }

  if (auto it = root.find("reward"); it != root.end()) {
    check_keys(*it, "reward", {"kind", "endpoint", "fixture"});
    std::string kind = "chat";
    read(*it, "kind", "reward", kind);
    if (kind == "chat") c.reward.kind = RewardKind::kChat;
    else if (kind == "endpoint") c.reward.kind = RewardKind::kEndpoint;
    else if (kind == "mock") c.reward.kind = RewardKind::kMock;
    else throw ValidationError("config: reward.kind must be \"chat\", \"endpoint\" or \"mock\"");
    read(*it, "endpoint", "reward", c.reward.endpoint);
    read_path(*it, "fixture", "reward", base_dir, c.reward.fixture);
  }

  if (auto it = root.find("retrieval"); it != root.end()) {
    check_keys(*it, "retrieval", {"mode", "k", "k1", "b"});
    std::string mode = "bm25";
    read(*it, "mode", "retrieval", mode);
    if (mode == "bm25") c.retrieval_mode = RetrievalMode::kBm25;
    else if (mode == "dense") c.retrieval_mode = RetrievalMode::kDense;
    else throw ValidationError("config: retrieval.mode must be \"bm25\" or \"dense\"");
    read(*it, "k", "retrieval", c.retrieval_k);
    read(*it, "k1", "retrieval", c.bm25.k1);
    read(*it, "b", "retrieval", c.bm25.b);
  }

  if (auto it = root.find("rerank"); it != root.end()) {
    check_keys(*it, "rerank", {"alpha", "candidates", "retries_on_parse_fail", "normalization"});
    read(*it, "alpha", "rerank", c.rerank.alpha);
    read(*it, "candidates", "rerank", c.rerank.candidates);
    read(*it, "retries_on_parse_fail", "rerank", c.rerank.retries_on_parse_fail);
    std::string norm = "none";
    read(*it, "normalization", "rerank", norm);
    if (norm == "none") c.rerank.normalization = ScoreNormalization::kNone;
    else if (norm == "minmax") c.rerank.normalization = ScoreNormalization::kMinMax;
    else throw ValidationError("config: rerank.normalization must be \"none\" or \"minmax\"");
  }

  if (auto it = root.find("refine"); it != root.end()) {
    check_keys(*it, "refine", {"k", "tau", "m", "temperature", "top_p", "T", "workers"});
    read(*it, "k", "refine", c.refine.k);
    read(*it, "tau", "refine", c.refine.tau);
    read(*it, "m", "refine", c.refine.m);
    read(*it, "temperature", "refine", c.refine.temperature);
    read(*it, "top_p", "refine", c.refine.top_p);
    read(*it, "T", "refine", c.refine.iterations);
    read(*it, "workers", "refine", c.refine.workers);
  }

  if (auto it = root.find("datagen"); it != root.end()) {
    const json& d = *it;
    check_keys(d, "datagen", {"mode", "sample", "workers", "retries_on_parse_fail", "search", "fetch"});
    std::string mode = "offline";
    read(d, "mode", "datagen", mode);
    if (mode == "offline") c.datagen.mode = DatagenMode::kOffline;
    else if (mode == "live") c.datagen.mode = DatagenMode::kLive;
    else throw ValidationError("config: datagen.mode must be \"offline\" or \"live\"");
    read(d, "sample", "datagen", c.datagen.sample);
    read(d, "workers", "datagen", c.datagen.workers);
    read(d, "retries_on_parse_fail", "datagen", c.datagen.retries_on_parse_fail);
    if (auto s = d.find("search"); s != d.end()) {
      check_keys(*s, "datagen.search", {"endpoint", "api_key_env", "fixture"});
      read(*s, "endpoint", "datagen.search", c.datagen.search_endpoint);
      read(*s, "api_key_env", "datagen.search", c.datagen.search_api_key_env);
      read_path(*s, "fixture", "datagen.search", base_dir, c.datagen.search_fixture);
    }
    if (auto f = d.find("fetch"); f != d.end()) {
      check_keys(*f, "datagen.fetch", {"fixture"});
      read_path(*f, "fixture", "datagen.fetch", base_dir, c.datagen.fetch_fixture);
    }
  }

  if (auto it = root.find("eval"); it != root.end()) {
    check_keys(*it, "eval", {"k"});
    read(*it, "k", "eval", c.eval_k);
  }
  read(root, "rng_seed", "", c.rng_seed);
  read(root, "domains", "", c.domains);
  read(root, "relevance_definitions", "", c.relevance_definitions);
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("config file not found: " + path.string());
  return parse_config(read_file(path), fs::absolute(path).parent_path());
}

void validate(const PipelineConfig& c) {
  if (c.retrieval_k == 0) throw ValidationError("config: retrieval.k must be >= 1");
  if (!(c.bm25.k1 >= 0.0)) throw ValidationError("config: retrieval.k1 must be >= 0");
  if (!(c.bm25.b >= 0.0 && c.bm25.b <= 1.0)) throw ValidationError("config: retrieval.b must be in [0, 1]");
  if (!(c.rerank.alpha > 0.0)) throw ValidationError("config: rerank.alpha must be > 0");
  if (c.rerank.candidates == 0) throw ValidationError("config: rerank.candidates must be >= 1");
  if (c.rerank.retries_on_parse_fail < 0)
    throw ValidationError("config: rerank.retries_on_parse_fail must be >= 0");
  if (c.gateway.max_in_flight == 0) throw ValidationError("config: gateway.max_in_flight must be >= 1");
  if (c.gateway.max_retries < 0) throw ValidationError("config: gateway.retries must be >= 0");
  if (c.gateway.max_tokens < 1) throw ValidationError("config: gateway.max_tokens must be >= 1");
  if (c.gateway.context_tokens <= static_cast<std::size_t>(c.gateway.max_tokens))
    throw ValidationError("config: gateway.context_tokens must exceed gateway.max_tokens");
  if (c.eval_k == 0) throw ValidationError("config: eval.k must be >= 1");
  if (c.datagen.workers == 0) throw ValidationError("config: datagen.workers must be >= 1");
  explainrank::validate(c.refine);
}

nlohmann::ordered_json PipelineConfig::to_json() const {
  const auto& b = base_dir;
  nlohmann::ordered_json j;
  j["paths"] = {{"corpus", rel(paths.corpus, b)},
                {"queries", rel(paths.queries, b)},
                {"qrels", rel(paths.qrels, b)},
                {"embeddings", rel(paths.embeddings, b)},
                {"query_embeddings", rel(paths.query_embeddings, b)},
                {"seeds", rel(paths.seeds, b)},
                {"exclusion", rel(paths.exclusion, b)},
                {"pairs", rel(paths.pairs, b)},
                {"templates", rel(paths.templates, b)}};
  j["gateway"] = {{"backend", gateway.backend == BackendKind::kMock ? "mock" : "http"},
                  {"base_url", gateway.base_url},
                  {"api_key_env", gateway.api_key_env},
                  {"models",
                   {{"student", gateway.student_model},
                    {"teacher", gateway.teacher_model},
                    {"reward", gateway.reward_model},
                    {"iterations", gateway.iteration_models}}},
                  {"max_in_flight", gateway.max_in_flight},
                  {"retries", gateway.max_retries},
                  {"initial_backoff_ms", gateway.initial_backoff_ms},
                  {"context_tokens", gateway.context_tokens},
                  {"max_tokens", gateway.max_tokens},
                  {"mock",
                   {{"student", rel(gateway.mock_student, b)},
                    {"teacher", rel(gateway.mock_teacher, b)},
                    {"reward", rel(gateway.mock_reward, b)}}}};
  const char* kinds[] = {"chat", "endpoint", "mock"};
  j["reward"] = {{"kind", kinds[static_cast<int>(reward.kind)]},
                 {"endpoint", reward.endpoint},
                 {"fixture", rel(reward.fixture, b)}};
  j["retrieval"] = {{"mode", retrieval_mode == RetrievalMode::kDense ? "dense" : "bm25"},
                    {"k", retrieval_k},
                    {"k1", bm25.k1},
                    {"b", bm25.b}};
  j["rerank"] = {{"alpha", rerank.alpha},
                 {"candidates", rerank.candidates},
                 {"retries_on_parse_fail", rerank.retries_on_parse_fail},
                 {"normalization",
                  rerank.normalization == ScoreNormalization::kMinMax ? "minmax" : "none"}};
  j["refine"] = {{"k", refine.k},
                 {"tau", refine.tau},
                 {"m", refine.m},
                 {"temperature", refine.temperature},
                 {"top_p", refine.top_p},
                 {"T", refine.iterations},
                 {"workers", refine.workers}};
  j["datagen"] = {{"mode", datagen.mode == DatagenMode::kLive ? "live" : "offline"},
                  {"sample", datagen.sample},
                  {"workers", datagen.workers},
                  {"retries_on_parse_fail", datagen.retries_on_parse_fail},
                  {"search",
                   {{"endpoint", datagen.search_endpoint},
                    {"api_key_env", datagen.search_api_key_env},
                    {"fixture", rel(datagen.search_fixture, b)}}},
                  {"fetch", {{"fixture", rel(datagen.fetch_fixture, b)}}}};
  j["eval"] = {{"k", eval_k}};
  j["rng_seed"] = rng_seed;
  j["domains"] = domains;
  j["relevance_definitions"] = relevance_definitions;
  return j;
}

}  // namespace explainrank::cli
