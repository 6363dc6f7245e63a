#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "explainrank/refine.hpp"
#include "explainrank/reranker.hpp"
#include "explainrank/retrieval.hpp"

namespace explainrank::cli {

enum class RetrievalMode { kBm25, kDense };
enum class BackendKind { kHttp, kMock };
enum class RewardKind { kChat, kEndpoint, kMock };
enum class DatagenMode { kOffline, kLive };

struct Paths {
  std::filesystem::path corpus;
  std::filesystem::path queries;
  std::filesystem::path qrels;
  std::filesystem::path embeddings;
  std::filesystem::path query_embeddings;
  std::filesystem::path seeds;
  std::filesystem::path exclusion;
  std::filesystem::path pairs;
  std::filesystem::path templates;
  std::filesystem::path output_dir = "out";
};

struct GatewaySettings {
  BackendKind backend = BackendKind::kHttp;
  std::string base_url;
  std::string api_key_env = "LLM_API_KEY";
  std::string student_model;
  std::string teacher_model;
  std::string reward_model;
  /// Student model per refinement iteration (index t-1); falls back to
  /// student_model when shorter than the iteration count.
  std::vector<std::string> iteration_models;
  std::size_t max_in_flight = 8;
  int max_retries = 3;
  int initial_backoff_ms = 200;
  std::size_t context_tokens = 4096;
  int max_tokens = 1024;
  std::filesystem::path mock_student;
  std::filesystem::path mock_teacher;
  std::filesystem::path mock_reward;
};

struct RewardSettings {
  RewardKind kind = RewardKind::kChat;
  std::string endpoint;
  std::filesystem::path fixture;
};

struct DatagenSettings {
  DatagenMode mode = DatagenMode::kOffline;
  std::size_t sample = 0;  // 0 keeps every seed that survives filtering
  std::size_t workers = 8;
  int retries_on_parse_fail = 1;
  std::string search_endpoint = "https://api.search.brave.com/res/v1/web/search";
  std::string search_api_key_env = "SEARCH_API_KEY";
  std::filesystem::path search_fixture;
  std::filesystem::path fetch_fixture;
};

struct PipelineConfig {
  Paths paths;
  GatewaySettings gateway;
  RewardSettings reward;
  RetrievalMode retrieval_mode = RetrievalMode::kBm25;
  std::size_t retrieval_k = 100;
  Bm25Params bm25;
  RerankConfig rerank;
  RefineConfig refine;
  DatagenSettings datagen;
  std::size_t eval_k = 10;
  std::uint64_t rng_seed = 0;
  std::vector<std::string> domains;
  std::map<std::string, std::string> relevance_definitions;
  std::filesystem::path base_dir;

  /// Canonical form of the effective settings, hashed into manifests. Paths
  /// are relative to base_dir and the output directory is left out, so the
  /// hash does not depend on where the checkout or the output lives.
  nlohmann::ordered_json to_json() const;
};

/// Relative paths resolve against `base_dir`. Unknown keys are rejected so
/// typos surface instead of silently falling back to defaults.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);

void validate(const PipelineConfig& config);

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> limit;
  std::optional<int> iter;
  std::optional<std::size_t> k;
  std::optional<double> alpha;
  std::optional<double> tau;
  std::optional<int> m;
  std::optional<std::filesystem::path> out;
  bool instruct = false;
};

}  // namespace explainrank::cli
