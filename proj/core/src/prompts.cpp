#include "explainrank/prompts.hpp"

#include <algorithm>

#include "explainrank/error.hpp"
#include "explainrank/model.hpp"
#include "explainrank/text.hpp"

namespace explainrank {
namespace {

constexpr std::string_view kRerankSystem =
    "You are an expert search relevance assessor. Given a search query and a document, you "
    "reason step by step about whether and how the document helps answer the query, and then "
    "assign a relevance label.\n"
    "\n"
    "Labels:\n"
    "0 = non-relevant: the document does not help answer the query.\n"
    "1 = partially relevant: the document covers part of what the query needs.\n"
    "2 = highly relevant: the document directly supports answering the query."
    "{relevance_definition}";

constexpr std::string_view kRerankUser =
    "Query:\n"
    "{query}\n"
    "\n"
    "Document:\n"
    "{document}\n"
    "\n"
    "Explain step by step how the document relates to the query. Then, on the final line, write "
    "exactly \"Relevance: <label>\" where <label> is 0, 1, or 2.";

constexpr std::string_view kTeacherSystem =
    "You are annotating training data for a search engine. For each query-document pair you "
    "write a careful explanation of the relevance of the document to the query, considering the "
    "reasoning a domain expert would apply, and then give a relevance label.\n"
    "\n"
    "Labels:\n"
    "0 = non-relevant\n"
    "1 = partially relevant\n"
    "2 = highly relevant";

constexpr std::string_view kTeacherUser =
    "Annotate the relevance of this document for the query.\n"
    "\n"
    "Query:\n"
    "{query}\n"
    "\n"
    "Document:\n"
    "{document}\n"
    "\n"
    "Write the explanation first. Then, on the final line, write exactly \"Relevance: <label>\" "
    "where <label> is 0, 1, or 2.";

constexpr std::string_view kRelatedSystem =
    "You write web search queries that help find evidence for technical and scientific "
    "questions.";

constexpr std::string_view kRelatedUser =
    "Question:\n"
    "{query}\n"
    "\n"
    "Accepted answer:\n"
    "{answer}"
    "{linked_docs}\n"
    "\n"
    "Write 5 different search queries that someone researching this question might issue. "
    "Return them as a numbered list with one query per line, for example:\n"
    "1. first query\n"
    "2. second query";

constexpr std::string_view kRewardSystem =
    "You are a reward model that judges relevance assessments written by another model.";

constexpr std::string_view kRewardUser =
    "Query:\n"
    "{query}\n"
    "\n"
    "Document:\n"
    "{document}\n"
    "\n"
    "Assessment to judge:\n"
    "{output}\n"
    "\n"
    "Rate how accurate and well reasoned the assessment and its final relevance label are, on a "
    "scale from 0 to 10. Reply with the number only.";

// Splits a template body into literal and placeholder segments.
struct Segment {
  bool placeholder;
  std::string text;
};

std::vector<Segment> segments(std::string_view t) {
  std::vector<Segment> out;
  std::string lit;
  for (std::size_t i = 0; i < t.size(); ++i) {
    char c = t[i];
    if (c == '{' && i + 1 < t.size() && t[i + 1] == '{') {
      lit += '{';
      ++i;
    } else if (c == '}' && i + 1 < t.size() && t[i + 1] == '}') {
      lit += '}';
      ++i;
    } else if (c == '{') {
      auto close = t.find('}', i + 1);
      if (close == std::string_view::npos) throw ValidationError("unterminated placeholder in template");
      if (!lit.empty()) out.push_back({false, std::move(lit)});
      lit.clear();
      out.push_back({true, std::string(t.substr(i + 1, close - i - 1))});
      i = close;
    } else {
      lit += c;
    }
  }
  if (!lit.empty()) out.push_back({false, std::move(lit)});
  return out;
}

std::string render_text(std::string_view t, const std::map<std::string, std::string>& vars,
                        const std::string& tmpl_name) {
  std::string out;
  for (auto& seg : segments(t)) {
    if (!seg.placeholder) {
      out += seg.text;
      continue;
    }
    auto it = vars.find(seg.text);
    if (it == vars.end())
      throw ValidationError("template '" + tmpl_name + "': placeholder {" + seg.text + "} is unbound");
    out += it->second;
  }
  return out;
}

void require_text(std::string_view value, const char* what) {
  if (trim(value).empty()) throw ValidationError(std::string(what) + " must not be empty");
}

std::size_t doc_budget(const PromptTemplate& tmpl, std::map<std::string, std::string> vars,
                       const std::string& slot, ContextBudget budget) {
  vars[slot] = "";
  auto msgs = tmpl.render(vars);
  std::size_t fixed = 0;
  for (const auto& m : msgs) fixed += approx_tokens(m.content);
  std::size_t used = fixed + budget.generation_tokens;
  return used >= budget.context_tokens ? 1 : budget.context_tokens - used;
}

}  // namespace

std::size_t approx_tokens(std::string_view text) {
  std::size_t words = split_whitespace(text).size();
  return (words * 13 + 9) / 10;
}

std::string truncate_to_budget(std::string_view text, std::size_t budget) {
  if (budget == 0) throw ValidationError("token budget must be >= 1");
  // a trailing marker from an earlier pass is not counted
  std::string_view body = text;
  if (auto t = trim(text); t.size() >= kTruncationMarker.size() &&
                           t.substr(t.size() - kTruncationMarker.size()) == kTruncationMarker)
    body = t.substr(0, t.size() - kTruncationMarker.size());
  auto words = split_whitespace(body);
  if ((words.size() * 13 + 9) / 10 <= budget) return std::string(text);
  // largest w with ceil(1.3 w) <= budget, at least one word
  std::size_t keep = (budget * 10) / 13;
  while (keep > 0 && (keep * 13 + 9) / 10 > budget) --keep;
  while (((keep + 1) * 13 + 9) / 10 <= budget) ++keep;
  keep = std::max<std::size_t>(keep, 1);
  const auto& last = words[keep - 1];
  std::size_t end = static_cast<std::size_t>(last.data() - body.data()) + last.size();
  std::string out(body.substr(0, end));
  out += ' ';
  out += kTruncationMarker;
  return out;
}

Messages PromptTemplate::render(const std::map<std::string, std::string>& vars) const {
  return {{Role::kSystem, render_text(system, vars, name)}, {Role::kUser, render_text(user, vars, name)}};
}

std::vector<std::string> PromptTemplate::placeholders() const {
  std::vector<std::string> out;
  for (auto part : {std::string_view(system), std::string_view(user)})
    for (auto& seg : segments(part))
      if (seg.placeholder && std::find(out.begin(), out.end(), seg.text) == out.end())
        out.push_back(seg.text);
  return out;
}

PromptTemplate parse_template(std::string name, std::string_view text) {
  auto sys = text.find("[system]\n");
  auto usr = text.find("\n[user]\n");
  if (sys != 0 || usr == std::string_view::npos)
    throw ValidationError("template '" + name + "' must start with [system] and contain a [user] section");
  PromptTemplate t;
  t.name = std::move(name);
  t.system = std::string(text.substr(9, usr - 9));
  std::string_view user = text.substr(usr + 8);
  if (!user.empty() && user.back() == '\n') user.remove_suffix(1);
  t.user = std::string(user);
  segments(t.system);
  segments(t.user);
  return t;
}

std::string format_template(const PromptTemplate& tmpl) {
  return "[system]\n" + tmpl.system + "\n[user]\n" + tmpl.user + "\n";
}

const PromptSet& PromptSet::defaults() {
  static const PromptSet set{
      {"rerank", std::string(kRerankSystem), std::string(kRerankUser)},
      {"teacher", std::string(kTeacherSystem), std::string(kTeacherUser)},
      {"related_queries", std::string(kRelatedSystem), std::string(kRelatedUser)},
      {"reward", std::string(kRewardSystem), std::string(kRewardUser)},
  };
  return set;
}

PromptSet PromptSet::load_dir(const std::filesystem::path& dir) {
  PromptSet set = defaults();
  auto load = [&](PromptTemplate& slot, const char* file) {
    auto path = dir / file;
    if (std::filesystem::exists(path)) slot = parse_template(slot.name, read_file(path));
  };
  load(set.rerank, "rerank.txt");
  load(set.teacher, "teacher.txt");
  load(set.related_queries, "related_queries.txt");
  load(set.reward, "reward.txt");
  return set;
}

Messages render_rerank_prompt(std::string_view query, std::string_view document,
                              const std::optional<std::string>& relevance_definition,
                              const PromptSet& prompts, ContextBudget budget) {
  require_text(query, "query");
  require_text(document, "document");
  std::map<std::string, std::string> vars{
      {"query", std::string(query)},
      {"relevance_definition",
       relevance_definition ? "\n\nRelevance definition for this task:\n" + *relevance_definition : ""}};
  auto limit = doc_budget(prompts.rerank, vars, "document", budget);
  vars["document"] = truncate_to_budget(document, limit);
  return prompts.rerank.render(vars);
}

Messages render_teacher_prompt(std::string_view query, std::string_view document,
                               const PromptSet& prompts, ContextBudget budget) {
  require_text(query, "query");
  require_text(document, "document");
  std::map<std::string, std::string> vars{{"query", std::string(query)}};
  auto limit = doc_budget(prompts.teacher, vars, "document", budget);
  vars["document"] = truncate_to_budget(document, limit);
  return prompts.teacher.render(vars);
}

Messages render_related_queries_prompt(std::string_view query, std::string_view answer,
                                       const std::vector<LinkedDoc>& linked_docs,
                                       const PromptSet& prompts, ContextBudget budget) {
  require_text(query, "query");
  require_text(answer, "answer");
  std::map<std::string, std::string> vars{{"query", std::string(query)},
                                          {"answer", html_to_text(answer)}};
  if (!linked_docs.empty()) {
    auto limit = doc_budget(prompts.related_queries, vars, "linked_docs", budget);
    std::size_t per_doc = std::max<std::size_t>(1, limit / linked_docs.size());
    std::string block = "\n\nDocuments linked from the answer:";
    for (std::size_t i = 0; i < linked_docs.size(); ++i) {
      block += "\n[" + std::to_string(i + 1) + "] " + linked_docs[i].url + "\n";
      block += truncate_to_budget(linked_docs[i].text.empty() ? "(empty)" : linked_docs[i].text,
                                  per_doc);
    }
    vars["linked_docs"] = std::move(block);
  } else {
    vars["linked_docs"] = "";
  }
  return prompts.related_queries.render(vars);
}

Messages render_reward_prompt(std::string_view query, std::string_view document,
                              std::string_view output, const PromptSet& prompts,
                              ContextBudget budget) {
  require_text(query, "query");
  require_text(document, "document");
  std::map<std::string, std::string> vars{{"query", std::string(query)},
                                          {"output", std::string(output)}};
  auto limit = doc_budget(prompts.reward, vars, "document", budget);
  vars["document"] = truncate_to_budget(document, limit);
  return prompts.reward.render(vars);
}

}  // namespace explainrank
