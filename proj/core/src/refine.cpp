#include "explainrank/refine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "explainrank/error.hpp"
#include "explainrank/hash.hpp"
#include "explainrank/rng.hpp"
#include "explainrank/text.hpp"

namespace explainrank {

void validate(const RefineConfig& c) {
  if (c.k < 2) throw ValidationError("refine: k must be >= 2 (normalization needs spread)");
  if (!(c.tau >= 0.0 && c.tau <= 1.0)) throw ValidationError("refine: tau must be in [0, 1]");
  if (c.m < 1) throw ValidationError("refine: m must be a positive integer");
  if (c.iterations < 1) throw ValidationError("refine: iterations must be >= 1");
  if (!(c.temperature >= 0.0)) throw ValidationError("refine: temperature must be >= 0");
  if (!(c.top_p > 0.0 && c.top_p <= 1.0)) throw ValidationError("refine: top_p must be in (0, 1]");
}

std::vector<TrainingPair> parse_pairs(const std::string& bytes) {
  std::vector<TrainingPair> pairs;
  std::size_t line_no = 0;
  for (std::string_view line : split_lines(bytes)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      TrainingPair p;
      p.query = j.at("query").get<std::string>();
      p.doc_text = j.at("doc_text").get<std::string>();
      p.docid = j.contains("docid") ? j["docid"].get<std::string>() : j.at("doc_id").get<std::string>();
      p.qid = j.contains("qid") ? j["qid"].get<std::string>() : "q-" + sha256_hex(p.query).substr(0, 12);
      if (trim(p.query).empty() || trim(p.doc_text).empty())
        throw ValidationError("empty query or document text");
      pairs.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pairs;
}

std::vector<TrainingPair> load_pairs(const std::filesystem::path& path) {
  try {
    return parse_pairs(read_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::vector<std::string> sample_outputs(Gateway& gateway, const TrainingPair& pair,
                                        const RefineConfig& config, int iter,
                                        const PromptSet& prompts) {
  if (config.k < 2) throw ValidationError("refine: k must be >= 2");
  ChatRequest req;
  req.messages = render_rerank_prompt(pair.query, pair.doc_text, std::nullopt, prompts, config.budget);
  req.temperature = config.temperature;
  req.top_p = config.top_p;
  req.n = config.k;
  req.max_tokens = config.max_tokens;
  req.seed = derive_seed(config.seed, "sampling/" + std::to_string(iter) + "/" + pair.qid + "/" + pair.docid);
  std::vector<std::string> texts;
  for (auto& c : gateway.complete(req)) texts.push_back(std::move(c.text));
  return texts;
}

std::optional<std::vector<double>> normalize_rewards(const std::vector<double>& rewards) {
  if (rewards.size() < 2) throw ValidationError("normalize_rewards needs at least two rewards");
  for (double r : rewards)
    if (!std::isfinite(r)) throw ValidationError("non-finite reward");
  auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
  const double min = *lo, max = *hi;
  if (max == min) return std::nullopt;
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back((r - min) / (max - min));
  return out;
}

std::vector<SelectedSample> filter_by_threshold(const SampleGroup& group, double tau) {
  if (group.degenerate) throw ValidationError("cannot filter a degenerate sample group");
  std::vector<SelectedSample> out;
  for (std::size_t i = 0; i < group.samples.size(); ++i)
    if (group.samples[i].normalized >= tau)
      out.push_back({i, group.samples[i].text, group.samples[i].normalized});
  return out;
}

std::vector<WeightedExample> weight_examples(const std::vector<SelectedSample>& selected, int m) {
  if (selected.empty()) throw ValidationError("weight_examples: nothing selected");
  if (m < 1) throw ValidationError("weight_examples: m must be >= 1");
  std::vector<WeightedExample> out;
  out.reserve(selected.size());
  for (const auto& s : selected) {
    WeightedExample ex;
    ex.completion = s.text;
    ex.normalized = s.normalized;
    ex.weight = std::pow(s.normalized, m);
    ex.sample_index = s.index;
    out.push_back(std::move(ex));
  }
  return out;
}

nlohmann::ordered_json to_json(const WeightedExample& ex) {
  nlohmann::ordered_json j;
  j["prompt"] = to_json(ex.prompt);
  j["completion"] = ex.completion;
  j["weight"] = ex.weight;
  j["qid"] = ex.qid;
  j["docid"] = ex.docid;
  j["iter"] = ex.iter;
  return j;
}

std::string format_sft_dataset(const std::vector<SynthRecord>& records, const PromptSet& prompts,
                               ContextBudget budget) {
  std::string out;
  for (const auto& r : records) {
    if (r.label < 0 || r.label > 2) throw ValidationError("synthetic record with label out of range");
    nlohmann::ordered_json j;
    j["prompt"] = to_json(render_rerank_prompt(r.query, r.doc.text, std::nullopt, prompts, budget));
    j["completion"] = r.explanation + "\nRelevance: " + std::to_string(r.label);
    j["weight"] = 1.0;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void emit_sft_dataset(const std::vector<SynthRecord>& records, const std::filesystem::path& path,
                      const PromptSet& prompts, ContextBudget budget) {
  write_file(path, format_sft_dataset(records, prompts, budget));
}

nlohmann::ordered_json IterationReport::to_json() const {
  nlohmann::ordered_json j;
  j["iter"] = iter;
  j["pairs"] = pairs;
  j["degenerate"] = degenerate;
  j["kept_examples"] = kept_examples;
  j["mean_weight"] = mean_weight;
  return j;
}

IterationResult refine_pairs(const std::vector<TrainingPair>& pairs, Gateway& gateway,
                             RewardClient& reward, const RefineConfig& config, int iter,
                             const PromptSet& prompts) {
  validate(config);
  CachedRewardClient cached(reward);
  std::vector<std::vector<WeightedExample>> per_pair(pairs.size());
  std::vector<char> degenerate(pairs.size(), 0);
  std::atomic<std::size_t> done{0};

  parallel_for(pairs.size(), config.workers, [&](std::size_t i) {
    const auto& pair = pairs[i];
    try {
      SampleGroup group;
      group.query = pair.query;
      group.doc = pair.doc_text;
      std::vector<double> rewards;
      for (auto& text : sample_outputs(gateway, pair, config, iter, prompts)) {
        rewards.push_back(cached.score(pair.query, pair.doc_text, text));
        group.samples.push_back({std::move(text), rewards.back(), 0.0});
      }
      auto normalized = normalize_rewards(rewards);
      if (!normalized) {
        degenerate[i] = 1;
      } else {
        for (std::size_t s = 0; s < group.samples.size(); ++s) group.samples[s].normalized = (*normalized)[s];
        auto examples = weight_examples(filter_by_threshold(group, config.tau), config.m);
        const auto prompt = render_rerank_prompt(pair.query, pair.doc_text, std::nullopt, prompts, config.budget);
        for (auto& ex : examples) {
          ex.prompt = prompt;
          ex.qid = pair.qid;
          ex.docid = pair.docid;
          ex.iter = iter;
        }
        per_pair[i] = std::move(examples);
      }
      ++done;
    } catch (const ServiceError& e) {
      throw ServiceError("refinement aborted at pair (" + pair.qid + ", " + pair.docid + ") after " +
                         std::to_string(done.load()) + "/" + std::to_string(pairs.size()) +
                         " pairs: " + e.what());
    }
  });

  IterationResult result;
  result.report.iter = iter;
  result.report.pairs = pairs.size();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    result.report.degenerate += degenerate[i];
    for (auto& ex : per_pair[i]) result.examples.push_back(std::move(ex));
  }
  std::stable_sort(result.examples.begin(), result.examples.end(),
                   [](const WeightedExample& a, const WeightedExample& b) {
                     return std::tie(a.qid, a.docid, a.sample_index) < std::tie(b.qid, b.docid, b.sample_index);
                   });
  result.report.kept_examples = result.examples.size();
  if (!result.examples.empty()) {
    double sum = 0.0;
    for (const auto& ex : result.examples) sum += ex.weight;
    result.report.mean_weight = sum / static_cast<double>(result.examples.size());
  }
  return result;
}

std::string format_weighted_dataset(const std::vector<WeightedExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += to_json(ex).dump();
    out += '\n';
  }
  return out;
}

IterationReport run_iteration(const std::vector<TrainingPair>& pairs, Gateway& gateway,
                              RewardClient& reward, const RefineConfig& config,
                              const std::filesystem::path& out_path, int iter,
                              const PromptSet& prompts) {
  auto result = refine_pairs(pairs, gateway, reward, config, iter, prompts);
  write_file(out_path, format_weighted_dataset(result.examples));
  return result.report;
}

std::string dt_filename(int iter) { return "dt_iter" + std::to_string(iter) + ".jsonl"; }

}  // namespace explainrank
