#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "explainrank/error.hpp"
#include "explainrank/gateway.hpp"
#include "explainrank/model.hpp"
#include "explainrank/prompts.hpp"
#include "explainrank/retrieval.hpp"

namespace explainrank {

struct RerankOutput {
  std::string explanation;
  int label = 0;
  bool parse_ok = false;
  std::string raw_text;

  bool operator==(const RerankOutput&) const = default;
};

/// Finds the last "Relevance: <0|1|2>" line (or a bare trailing 0/1/2
/// line). On failure: label 0, parse_ok false, explanation = raw text.
RerankOutput parse_rerank_output(std::string_view raw_text);

/// As above, but a completion that ended in error never parses.
RerankOutput parse_rerank_output(const Completion& completion);

/// retrieval_score + alpha * label. Throws ValidationError for a label
/// outside {0,1,2} or a non-positive alpha.
double combined_score(double retrieval_score, int label, double alpha);

enum class ScoreNormalization { kNone, kMinMax };

struct RerankConfig {
  double alpha = 100.0;
  std::size_t candidates = 100;
  int retries_on_parse_fail = 1;
  ScoreNormalization normalization = ScoreNormalization::kNone;
  int max_tokens = 1024;
  ContextBudget budget{};
};

struct ScoredDoc {
  std::string doc_id;
  double retrieval_score = 0.0;
  int label = 0;
  double combined_score = 0.0;
  std::string explanation;
  bool parse_ok = false;

  bool operator==(const ScoredDoc&) const = default;
};

/// Sort rule for hybrid-scored lists: combined desc, retrieval desc, doc id
/// asc.
void sort_scored(std::vector<ScoredDoc>& docs);

/// Raised when a gateway call fails mid-query. Carries how far the query
/// got so the operator can see where it stopped.
class RerankAborted : public ServiceError {
 public:
  RerankAborted(std::string query_id, std::string doc_id, std::size_t completed,
                std::size_t total, const std::string& cause);
  const std::string& query_id() const noexcept { return query_id_; }
  const std::string& doc_id() const noexcept { return doc_id_; }
  std::size_t completed() const noexcept { return completed_; }
  std::size_t total() const noexcept { return total_; }

 private:
  std::string query_id_;
  std::string doc_id_;
  std::size_t completed_;
  std::size_t total_;
};

/// Scores each candidate with one greedy generation, retries unparseable
/// outputs, then orders by the hybrid score. Candidates beyond
/// config.candidates are ignored. Output order does not depend on the order
/// in which generations complete.
std::vector<ScoredDoc> rerank(const Query& query, const std::vector<RetrievalResult>& candidates,
                              const Corpus& corpus, Gateway& gateway, const RerankConfig& config,
                              const std::optional<std::string>& relevance_definition = {},
                              const PromptSet& prompts = PromptSet::defaults());

/// Run rows for one query's reranked list, ranks 1..n.
Run to_run(const std::string& query_id, const std::vector<ScoredDoc>& docs,
           const std::string& tag = "interank");

/// One explanations-file line: {"qid","docid","label","parse_ok","explanation"}.
std::string explanation_line(const std::string& query_id, const ScoredDoc& doc);

}  // namespace explainrank
