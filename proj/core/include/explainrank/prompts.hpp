#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "explainrank/gateway.hpp"

namespace explainrank {

inline constexpr std::string_view kTruncationMarker = "…[truncated]";

/// Approximate token count: whitespace-delimited words x 1.3, rounded up.
std::size_t approx_tokens(std::string_view text);

/// Keeps the longest head of `text` whose approximate token count fits in
/// `budget` (at least one word) and appends " …[truncated]" when anything
/// was cut. Text already ending in the marker is measured without it, so
/// the function is idempotent.
std::string truncate_to_budget(std::string_view text, std::size_t budget);

/// A system + user message pair with {placeholder} slots. "{{" and "}}"
/// produce literal braces.
struct PromptTemplate {
  std::string name;
  std::string system;
  std::string user;

  /// Throws ValidationError naming any placeholder without a binding.
  Messages render(const std::map<std::string, std::string>& vars) const;
  std::vector<std::string> placeholders() const;
};

/// Parses the on-disk template format: a "[system]" section followed by a
/// "[user]" section.
PromptTemplate parse_template(std::string name, std::string_view text);
std::string format_template(const PromptTemplate& tmpl);

struct PromptSet {
  PromptTemplate rerank;
  PromptTemplate teacher;
  PromptTemplate related_queries;
  PromptTemplate reward;

  static const PromptSet& defaults();
  /// Reads rerank.txt, teacher.txt, related_queries.txt and reward.txt from
  /// `dir`; files that are absent keep the built-in text.
  static PromptSet load_dir(const std::filesystem::path& dir);
};

struct ContextBudget {
  std::size_t context_tokens = 4096;
  std::size_t generation_tokens = 1024;
};

/// Student-side reranking prompt. The answer format ends with a line
/// "Relevance: <0|1|2>". A relevance definition, when given, goes into the
/// system message verbatim.
Messages render_rerank_prompt(std::string_view query, std::string_view document,
                              const std::optional<std::string>& relevance_definition = {},
                              const PromptSet& prompts = PromptSet::defaults(),
                              ContextBudget budget = {});

/// Teacher annotation prompt; same output contract as the rerank prompt.
Messages render_teacher_prompt(std::string_view query, std::string_view document,
                               const PromptSet& prompts = PromptSet::defaults(),
                               ContextBudget budget = {});

struct LinkedDoc {
  std::string url;
  std::string text;
};

/// Asks for a numbered list of related search queries.
Messages render_related_queries_prompt(std::string_view query, std::string_view answer,
                                       const std::vector<LinkedDoc>& linked_docs,
                                       const PromptSet& prompts = PromptSet::defaults(),
                                       ContextBudget budget = {});

/// Presents (query, document, sampled output) to a chat-style reward model.
Messages render_reward_prompt(std::string_view query, std::string_view document,
                              std::string_view output,
                              const PromptSet& prompts = PromptSet::defaults(),
                              ContextBudget budget = {});

}  // namespace explainrank
