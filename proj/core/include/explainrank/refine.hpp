#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "explainrank/datagen.hpp"
#include "explainrank/gateway.hpp"
#include "explainrank/prompts.hpp"

namespace explainrank {

struct RefineConfig {
  int k = 8;
  double tau = 0.85;
  int m = 3;
  double temperature = 1.0;
  double top_p = 1.0;
  int iterations = 2;
  int max_tokens = 1024;
  std::uint64_t seed = 0;
  std::size_t workers = 8;
  ContextBudget budget{};
};

/// Throws ValidationError unless k >= 2, 0 <= tau <= 1, m >= 1.
void validate(const RefineConfig& config);

/// One (query, document) input of the refinement loop.
struct TrainingPair {
  std::string qid;
  std::string query;
  std::string docid;
  std::string doc_text;

  bool operator==(const TrainingPair&) const = default;
};

/// Accepts JSONL {"qid","query","docid","doc_text"} and the synthetic
/// dataset schema (query, doc_id, doc_text). A missing qid is derived from
/// the query text.
std::vector<TrainingPair> load_pairs(const std::filesystem::path& path);
std::vector<TrainingPair> parse_pairs(const std::string& bytes);

/// Reward model contract.
class RewardClient {
 public:
  virtual ~RewardClient() = default;
  virtual double score(const std::string& query, const std::string& doc,
                       const std::string& output) = 0;
};

/// Scripted rewards. Lookup order: exact output text, then substring rules
/// in insertion order, then the default.
class MockRewardClient final : public RewardClient {
 public:
  void add(std::string output, double score);
  void add_rule(std::string needle, double score);
  void set_default(double score);
  double score(const std::string& query, const std::string& doc,
               const std::string& output) override;

 private:
  std::map<std::string, double> exact_;
  std::vector<std::pair<std::string, double>> rules_;
  std::optional<double> default_;
};

/// JSONL lines {"output": str, "score": r}, {"contains": str, "score": r},
/// or {"default": true, "score": r}.
std::unique_ptr<MockRewardClient> load_reward_fixture(const std::filesystem::path& path);

/// Reward from a chat model: renders the reward template and reads the
/// first number in the reply.
class ChatRewardClient final : public RewardClient {
 public:
  ChatRewardClient(Gateway& gateway, PromptSet prompts = PromptSet::defaults(),
                   ContextBudget budget = {});
  double score(const std::string& query, const std::string& doc,
               const std::string& output) override;

 private:
  Gateway& gateway_;
  PromptSet prompts_;
  ContextBudget budget_;
};

/// Reads the first decimal number in a reward model reply.
std::optional<double> parse_reward_number(std::string_view text);

/// POST {url} with {"query","document","output"}; expects {"score": real}.
class EndpointRewardClient final : public RewardClient {
 public:
  explicit EndpointRewardClient(std::string url, std::string api_key = {});
  double score(const std::string& query, const std::string& doc,
               const std::string& output) override;

 private:
  std::string url_;
  std::string api_key_;
};

/// Memoizes another client by (query, doc, output). Thread-safe.
class CachedRewardClient final : public RewardClient {
 public:
  explicit CachedRewardClient(RewardClient& inner) : inner_(inner) {}
  double score(const std::string& query, const std::string& doc,
               const std::string& output) override;
  std::size_t misses() const;
  std::size_t hits() const;

 private:
  RewardClient& inner_;
  mutable std::mutex mu_;
  std::map<std::string, double> cache_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

struct Sample {
  std::string text;
  double reward = 0.0;
  double normalized = 0.0;
};

struct SampleGroup {
  std::string query;
  std::string doc;
  std::vector<Sample> samples;
  bool degenerate = false;
};

struct SelectedSample {
  std::size_t index = 0;  // position inside the group
  std::string text;
  double normalized = 0.0;
};

struct WeightedExample {
  Messages prompt;
  std::string completion;
  double weight = 0.0;
  double normalized = 0.0;
  std::string qid;
  std::string docid;
  std::size_t sample_index = 0;
  int iter = 0;
};

/// One request with n = k at the configured sampling settings.
std::vector<std::string> sample_outputs(Gateway& gateway, const TrainingPair& pair,
                                        const RefineConfig& config, int iter = 1,
                                        const PromptSet& prompts = PromptSet::defaults());

/// Min-max normalization within a group. nullopt when max == min (no
/// preference signal). Throws ValidationError for fewer than two rewards.
std::optional<std::vector<double>> normalize_rewards(const std::vector<double>& rewards);

/// Samples whose normalized reward is >= tau, in group order.
std::vector<SelectedSample> filter_by_threshold(const SampleGroup& group, double tau);

/// weight = normalized^m. Throws ValidationError on empty input.
std::vector<WeightedExample> weight_examples(const std::vector<SelectedSample>& selected, int m);

nlohmann::ordered_json to_json(const WeightedExample& ex);

/// Distillation dataset: one {"prompt","completion","weight":1.0} line per
/// synthetic record, completion = explanation + "\nRelevance: " + label.
void emit_sft_dataset(const std::vector<SynthRecord>& records, const std::filesystem::path& path,
                      const PromptSet& prompts = PromptSet::defaults(), ContextBudget budget = {});
std::string format_sft_dataset(const std::vector<SynthRecord>& records,
                               const PromptSet& prompts = PromptSet::defaults(),
                               ContextBudget budget = {});

struct IterationReport {
  int iter = 0;
  std::size_t pairs = 0;
  std::size_t degenerate = 0;
  std::size_t kept_examples = 0;
  double mean_weight = 0.0;

  nlohmann::ordered_json to_json() const;
};

struct IterationResult {
  IterationReport report;
  std::vector<WeightedExample> examples;  // sorted by (qid, docid, sample index)
};

/// Sampling, reward scoring, normalization, filtering and weighting for
/// every pair; no file I/O.
IterationResult refine_pairs(const std::vector<TrainingPair>& pairs, Gateway& gateway,
                             RewardClient& reward, const RefineConfig& config, int iter,
                             const PromptSet& prompts = PromptSet::defaults());

/// refine_pairs plus writing D_t to `out_path` as JSONL
/// {"prompt","completion","weight","qid","docid","iter"}.
IterationReport run_iteration(const std::vector<TrainingPair>& pairs, Gateway& gateway,
                              RewardClient& reward, const RefineConfig& config,
                              const std::filesystem::path& out_path, int iter,
                              const PromptSet& prompts = PromptSet::defaults());

std::string format_weighted_dataset(const std::vector<WeightedExample>& examples);

/// "dt_iter<t>.jsonl"
std::string dt_filename(int iter);

}  // namespace explainrank
