#include "explainrank/reranker.hpp"

#include <algorithm>
#include <atomic>
#include <regex>

#include <nlohmann/json.hpp>

#include "explainrank/text.hpp"

namespace explainrank {
namespace {

const std::regex& label_pattern() {
  static const std::regex re(R"(relevance\**\s*:\s*\**\s*([012])(?![0-9]))",
                             std::regex::ECMAScript | std::regex::icase);
  return re;
}

std::optional<int> label_in_line(std::string_view line) {
  std::optional<int> label;
  std::string s(line);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), label_pattern()); it != std::sregex_iterator();
       ++it)
    label = (*it)[1].str()[0] - '0';
  return label;
}

}  // namespace

RerankOutput parse_rerank_output(std::string_view raw_text) {
  RerankOutput out;
  out.raw_text = std::string(raw_text);
  auto lines = split_lines(raw_text);

  std::optional<std::size_t> label_line;
  std::size_t last = lines.size();
  while (last > 0 && trim(lines[last - 1]).empty()) --last;
  if (last > 0) {
    auto t = trim(lines[last - 1]);
    if (t == "0" || t == "1" || t == "2") {
      label_line = last - 1;
      out.label = t[0] - '0';
    }
  }
  for (std::size_t i = last; !label_line && i > 0; --i) {
    if (auto l = label_in_line(lines[i - 1])) {
      label_line = i - 1;
      out.label = *l;
    }
  }

  if (!label_line) {
    out.label = 0;
    out.parse_ok = false;
    out.explanation = out.raw_text;
    return out;
  }
  out.parse_ok = true;
  std::string explanation;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i == *label_line) continue;
    if (!explanation.empty()) explanation += '\n';
    explanation += lines[i];
  }
  out.explanation = std::string(trim(explanation));
  return out;
}

RerankOutput parse_rerank_output(const Completion& completion) {
  if (completion.finish == FinishReason::kError) {
    RerankOutput out;
    out.raw_text = completion.text;
    out.explanation = completion.text;
    return out;
  }
  return parse_rerank_output(completion.text);
}

double combined_score(double retrieval_score, int label, double alpha) {
  if (label < 0 || label > 2) throw ValidationError("relevance label must be 0, 1, or 2");
  if (!(alpha > 0.0)) throw ValidationError("alpha must be positive");
  return retrieval_score + alpha * static_cast<double>(label);
}

void sort_scored(std::vector<ScoredDoc>& docs) {
  std::sort(docs.begin(), docs.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
    if (a.combined_score != b.combined_score) return a.combined_score > b.combined_score;
    if (a.retrieval_score != b.retrieval_score) return a.retrieval_score > b.retrieval_score;
    return a.doc_id < b.doc_id;
  });
}

RerankAborted::RerankAborted(std::string query_id, std::string doc_id, std::size_t completed,
                             std::size_t total, const std::string& cause)
    : ServiceError("rerank aborted at query " + query_id + ", document " + doc_id + " (" +
                   std::to_string(completed) + "/" + std::to_string(total) +
                   " candidates done): " + cause),
      query_id_(std::move(query_id)),
      doc_id_(std::move(doc_id)),
      completed_(completed),
      total_(total) {}

std::vector<ScoredDoc> rerank(const Query& query, const std::vector<RetrievalResult>& candidates,
                              const Corpus& corpus, Gateway& gateway, const RerankConfig& config,
                              const std::optional<std::string>& relevance_definition,
                              const PromptSet& prompts) {
  if (candidates.empty()) throw ValidationError("rerank: no candidates for query " + query.id);
  if (!(config.alpha > 0.0)) throw ValidationError("alpha must be positive");
  const std::size_t n = std::min(candidates.size(), config.candidates);

  std::vector<double> base(n);
  for (std::size_t i = 0; i < n; ++i) base[i] = candidates[i].score;
  if (config.normalization == ScoreNormalization::kMinMax) {
    auto [lo, hi] = std::minmax_element(base.begin(), base.end());
    double min = *lo, span = *hi - *lo;
    for (auto& s : base) s = span > 0 ? (s - min) / span : 0.0;
  }

  std::vector<ScoredDoc> scored(n);
  std::atomic<std::size_t> done{0};
  parallel_for(n, gateway.max_in_flight(), [&](std::size_t i) {
    const auto& cand = candidates[i];
    const Document* doc = corpus.find(cand.doc_id);
    if (!doc) throw ValidationError("candidate '" + cand.doc_id + "' is not in the corpus");
    ChatRequest req;
    req.messages = render_rerank_prompt(query.text, doc->text, relevance_definition, prompts, config.budget);
    req.temperature = 0.0;
    req.top_p = 1.0;
    req.n = 1;
    req.max_tokens = config.max_tokens;

    RerankOutput parsed;
    try {
      for (int attempt = 0; attempt <= config.retries_on_parse_fail; ++attempt) {
        parsed = parse_rerank_output(gateway.complete(req).front());
        if (parsed.parse_ok) break;
      }
    } catch (const ServiceError& e) {
      throw RerankAborted(query.id, cand.doc_id, done.load(), n, e.what());
    }
    scored[i] = ScoredDoc{cand.doc_id, base[i], parsed.label,
                          combined_score(base[i], parsed.label, config.alpha), parsed.explanation,
                          parsed.parse_ok};
    ++done;
  });
  sort_scored(scored);
  return scored;
}

Run to_run(const std::string& query_id, const std::vector<ScoredDoc>& docs, const std::string& tag) {
  Run run;
  run.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i)
    run.push_back({query_id, docs[i].doc_id, static_cast<int>(i + 1), docs[i].combined_score, tag});
  return run;
}

std::string explanation_line(const std::string& query_id, const ScoredDoc& doc) {
  nlohmann::ordered_json j;
  j["qid"] = query_id;
  j["docid"] = doc.doc_id;
  j["label"] = doc.label;
  j["parse_ok"] = doc.parse_ok;
  j["explanation"] = doc.explanation;
  return j.dump();
}

}  // namespace explainrank
