// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.
//
// Usage: explainrank_acceptance <path-to-explainrank-binary>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <boost/math/distributions/students_t.hpp>

#include "explainrank/datagen.hpp"
#include "explainrank/error.hpp"
#include "explainrank/evaluate.hpp"
#include "explainrank/hash.hpp"
#include "explainrank/refine.hpp"
#include "explainrank/reranker.hpp"
#include "explainrank/retrieval.hpp"
#include "explainrank/text.hpp"

using namespace explainrank;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

std::string g_cli;

// Collects failure notes for one criterion.
struct Check {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok && failures.size() < 5) failures.push_back(what);
  }
};

std::vector<std::string> file_lines(const fs::path& p) {
  const std::string bytes = read_file(p);
  std::vector<std::string> out;
  for (auto line : split_lines(bytes))
    if (!line.empty()) out.emplace_back(line);
  return out;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path make_temp_dir() {
  std::string tmpl = (fs::temp_directory_path() / "explainrank-acc-XXXXXX").string();
  if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  return tmpl;
}

// ---- 1 -------------------------------------------------------------------

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

// Okapi BM25, one document at a time.
std::vector<std::pair<std::string, double>> brute_bm25(const std::vector<std::pair<std::string, std::string>>& docs,
                                                       const std::string& query, std::size_t k) {
  const double k1 = 1.2, b = 0.75, n = static_cast<double>(docs.size());
  double total = 0;
  std::vector<std::vector<std::string>> toks;
  for (const auto& [id, text] : docs) {
    toks.push_back(words(text));
    total += static_cast<double>(toks.back().size());
  }
  const double avgdl = total / n;
  auto q = words(query);
  std::set<std::string> terms(q.begin(), q.end());
  std::vector<std::pair<std::string, double>> scored;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    double s = 0;
    for (const auto& t : terms) {
      double df = 0;
      for (const auto& other : toks) df += std::count(other.begin(), other.end(), t) > 0 ? 1 : 0;
      const double tf = static_cast<double>(std::count(toks[d].begin(), toks[d].end(), t));
      if (tf == 0) continue;
      const double idf = std::log(1 + (n - df + 0.5) / (df + 0.5));
      s += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * static_cast<double>(toks[d].size()) / avgdl));
    }
    if (s > 0) scored.emplace_back(docs[d].first, s);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
    return x.second != y.second ? x.second > y.second : x.first < y.first;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

Check criterion1() {
  Check c;
  const auto t0 = Clock::now();
  // Three documents: "a b", "b c", "c c c" (avgdl 7/3). Values worked by hand:
  //   query "c":   d3 = 0.695966912537, d2 = 0.499176268302
  //   query "b c": d2 = 0.998352536605, d3 = 0.695966912537, d1 = 0.499176268302
  auto index = build_index(Corpus({{"d1", {}, "a b", {}}, {"d2", {}, "b c", {}}, {"d3", {}, "c c c", {}}}));
  const std::vector<std::pair<std::string, std::vector<std::pair<std::string, double>>>> oracle{
      {"c", {{"d3", 0.695966912537}, {"d2", 0.499176268302}}},
      {"b c", {{"d2", 0.998352536605}, {"d3", 0.695966912537}, {"d1", 0.499176268302}}},
  };
  for (const auto& [query, want] : oracle) {
    auto got = bm25_search(index, query, 10);
    c.expect(got.size() == want.size(), "fixture result count for '" + query + "'");
    for (std::size_t i = 0; i < std::min(got.size(), want.size()); ++i) {
      c.expect(got[i].doc_id == want[i].first, "fixture order for '" + query + "'");
      c.expect(std::fabs(got[i].score - want[i].second) <= 1e-6, "fixture score for '" + query + "'");
    }
  }

  std::mt19937_64 rng(1);
  const std::vector<std::string> vocab{"apple", "bee", "cat", "dog", "eel", "fox"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<std::string, std::string>> docs;
    std::vector<Document> corpus;
    const std::size_t n = 1 + rng() % 20;
    for (std::size_t i = 0; i < n; ++i) {
      std::string text;
      for (std::size_t j = 0, len = 1 + rng() % 10; j < len; ++j) text += vocab[rng() % vocab.size()] + " ";
      docs.emplace_back("m" + std::to_string(i), text);
      corpus.push_back({docs.back().first, {}, text, {}});
    }
    std::string query;
    for (std::size_t j = 0, len = 1 + rng() % 3; j < len; ++j) query += vocab[rng() % vocab.size()] + " ";
    const std::size_t k = 1 + rng() % 10;
    auto got = bm25_search(build_index(Corpus(corpus)), query, k);
    auto want = brute_bm25(docs, query, k);
    c.expect(got.size() == want.size(), "random corpus " + std::to_string(trial) + ": size");
    for (std::size_t i = 0; i < std::min(got.size(), want.size()); ++i) {
      c.expect(got[i].doc_id == want[i].first, "random corpus " + std::to_string(trial) + ": order");
      c.expect(std::fabs(got[i].score - want[i].second) <= 1e-9, "random corpus " + std::to_string(trial) + ": score");
    }
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 1.0, "runtime " + std::to_string(secs) + " s");
  return c;
}

// ---- 2 -------------------------------------------------------------------

Check criterion2() {
  Check c;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 8;
    std::vector<std::string> ranking;
    std::map<std::string, int> gains;
    for (std::size_t i = 0; i < n; ++i) {
      ranking.push_back("d" + std::to_string(i));
      gains[ranking.back()] = static_cast<int>(rng() % 3);
    }
    std::shuffle(ranking.begin(), ranking.end(), rng);
    // Term-by-term: DCG = sum gain_i / log2(i + 1) for positions i = 1..k.
    double dcg = 0;
    for (std::size_t i = 0; i < std::min<std::size_t>(10, ranking.size()); ++i)
      dcg += gains[ranking[i]] / std::log2(static_cast<double>(i) + 2.0);
    std::vector<int> sorted;
    for (const auto& [d, g] : gains) sorted.push_back(g);
    std::sort(sorted.rbegin(), sorted.rend());
    double idcg = 0;
    for (std::size_t i = 0; i < std::min<std::size_t>(10, sorted.size()); ++i)
      idcg += sorted[i] / std::log2(static_cast<double>(i) + 2.0);
    const double want = idcg == 0 ? 0.0 : dcg / idcg;
    c.expect(std::fabs(ndcg_at_k(ranking, gains, 10) - want) <= 1e-9, "random ranking " + std::to_string(trial));
  }
  c.expect(std::fabs(ndcg_at_k({"d2", "d1"}, {{"d1", 1}}, 10) - 0.63093) <= 1e-5, "fixed example");
  const double secs = seconds_since(t0);
  c.expect(secs < 1.0, "runtime " + std::to_string(secs) + " s");
  return c;
}

// ---- 3 -------------------------------------------------------------------

Check criterion3() {
  Check c;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> score(0.0, 50.0);
  auto mock = std::make_shared<MockBackend>();
  for (int label = 0; label <= 2; ++label)
    mock->add_rule({"LABELMARK" + std::to_string(label) + "X"}, {"Reason.\nRelevance: " + std::to_string(label)});
  Gateway gateway(mock);
  std::size_t violations = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    std::vector<Document> docs;
    std::vector<RetrievalResult> cands;
    std::map<std::string, int> truth;
    for (std::size_t i = 0; i < n; ++i) {
      const int label = static_cast<int>(rng() % 3);
      const std::string id = "c" + std::to_string(i);
      docs.push_back({id, {}, "text LABELMARK" + std::to_string(label) + "X", {}});
      cands.push_back({id, score(rng), static_cast<int>(i + 1)});
      truth[id] = label;
    }
    auto out = rerank({"q", "query", ""}, cands, Corpus(docs), gateway, RerankConfig{});
    for (std::size_t i = 1; i < out.size(); ++i) {
      const int la = truth[out[i - 1].doc_id], lb = truth[out[i].doc_id];
      const bool ok = la > lb || (la == lb && out[i - 1].retrieval_score >= out[i].retrieval_score);
      if (!ok) ++violations;
    }
  }
  c.expect(violations == 0, std::to_string(violations) + " ordering violations");
  return c;
}

// ---- 4 -------------------------------------------------------------------

Check criterion4() {
  Check c;
  auto n = normalize_rewards({2, 4, 6});
  c.expect(n && *n == std::vector<double>{0.0, 0.5, 1.0}, "normalize [2,4,6]");

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0), scale(0.5, 2.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> r(2 + rng() % 10);
    for (auto& x : r) x = u(rng);
    const double a = scale(rng), b = u(rng);
    std::vector<double> mapped;
    for (double x : r) mapped.push_back(a * x + b);
    auto n1 = normalize_rewards(r);
    auto n2 = normalize_rewards(mapped);
    if (!n1 || !n2) {
      c.expect(false, "unexpected degenerate vector");
      continue;
    }
    for (std::size_t i = 0; i < r.size(); ++i)
      c.expect(std::fabs((*n1)[i] - (*n2)[i]) <= 1e-12, "shift/scale invariance, trial " + std::to_string(trial));

    SampleGroup group{"q", "d", {}, false};
    for (std::size_t i = 0; i < r.size(); ++i) group.samples.push_back({"s" + std::to_string(i), r[i], (*n1)[i]});
    auto selected = filter_by_threshold(group, 0.85);
    std::size_t expected = 0;
    for (double v : *n1) expected += v >= 0.85 ? 1 : 0;
    c.expect(selected.size() == expected, "filter size, trial " + std::to_string(trial));
    for (const auto& s : selected) c.expect((*n1)[s.index] >= 0.85, "filter kept a sample below tau");
    if (!selected.empty())
      for (const auto& w : weight_examples(selected, 3))
        c.expect(std::fabs(w.weight - std::pow(w.normalized, 3)) <= 1e-12, "weight != normalized^3");
  }

  auto flat = std::make_shared<MockBackend>();
  flat->set_default({"same output\nRelevance: 1"});
  Gateway gateway(flat);
  MockRewardClient reward;
  reward.set_default(4.0);
  auto res = refine_pairs({{"a", "q", "d", "t"}, {"b", "q", "d2", "t2"}}, gateway, reward, RefineConfig{}, 1);
  c.expect(res.examples.empty(), "degenerate groups produced examples");
  c.expect(res.report.degenerate == 2, "degenerate groups not counted");
  return c;
}

// ---- 5 -------------------------------------------------------------------

Check criterion5() {
  Check c;
  auto teacher = std::make_shared<MockBackend>();
  teacher->add_rule({"Annotate the relevance", "JUNKPAGE"}, {"cannot tell"});
  teacher->add_rule({"Annotate the relevance"}, {"Explained.\nRelevance: 2"});
  teacher->add_rule({"Write 5 different search queries", "NORELATED"}, {"nothing useful"});
  teacher->add_rule({"Write 5 different search queries"}, {"1. first idea\n2. second idea\n3. third idea"});
  Gateway gateway(teacher);
  FixtureSearchClient search;
  FixtureFetcher fetcher;
  search.add("second idea", {});  // a search that finds nothing
  std::vector<SearchResult> results;
  for (int i = 0; i < 4; ++i) {
    results.push_back({"https://web.example/" + std::to_string(i), "", "", ""});
    if (i != 3) fetcher.add_text(results.back().url, i == 2 ? "JUNKPAGE web" : "web page " + std::to_string(i));
  }
  search.set_default(results);

  std::vector<SeedPair> seeds;
  std::mt19937_64 rng(5);
  for (int s = 0; s < 20; ++s) {
    std::string answer = s % 7 == 0 ? "NORELATED " : "";
    for (int l = 0, links = static_cast<int>(rng() % 4); l < links; ++l) {
      const std::string url = "https://linked.example/" + std::to_string(s) + "/" + std::to_string(l);
      answer += url + " ";
      switch (rng() % 3) {
        case 0: fetcher.add_text(url, "linked page " + url); break;
        case 1: fetcher.add_text(url, "JUNKPAGE " + url); break;
        default: break;  // not fetchable
      }
    }
    seeds.push_back({"seed question " + std::to_string(s), answer + "answer text", "c" + std::to_string(s % 3),
                     "s" + std::to_string(s)});
  }

  std::size_t seeds_with_web = 0;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    Rng seed_rng(derive_seed(77, seeds[s].source_id));
    DatagenCounters counters;
    auto records = generate_synth(seeds[s], gateway, search, fetcher, seed_rng, counters);
    std::size_t linked = 0, web = 0;
    for (const auto& r : records) (r.provenance == Provenance::kLinked ? linked : web)++;
    c.expect(web <= 1, "more than one websearch record");
    c.expect(web == counters.websearch_ok, "websearch bit mismatch for seed " + seeds[s].source_id);
    c.expect(linked + web == counters.annotated, "annotated count mismatch for seed " + seeds[s].source_id);
    c.expect(records.size() == linked + counters.websearch_ok, "record count law for seed " + seeds[s].source_id);
    seeds_with_web += web;
  }
  c.expect(seeds_with_web > 0 && seeds_with_web < seeds.size(), "fixture does not exercise both web outcomes");

  const fs::path dir = make_temp_dir();
  auto emit = [&](const fs::path& path) {
    auto batch = generate_synth_batch(seeds, gateway, search, fetcher, 77, 4);
    emit_synth_dataset(batch.records, path, derive_seed(77, "shuffle"));
    return batch.records;
  };
  auto records = emit(dir / "a.jsonl");
  emit(dir / "b.jsonl");
  c.expect(read_file(dir / "a.jsonl") == read_file(dir / "b.jsonl"), "dataset differs across reruns");
  auto reloaded = load_synth_dataset(dir / "a.jsonl");
  auto key = [](const SynthRecord& r) { return std::tie(r.query, r.doc.id); };
  auto by_key = [&](std::vector<SynthRecord> v) {
    std::sort(v.begin(), v.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
    return v;
  };
  c.expect(by_key(reloaded) == by_key(records), "dataset does not round-trip");
  fs::remove_all(dir);
  return c;
}

// ---- CLI helpers ------------------------------------------------------------

int run_cli(const std::vector<std::string>& args) {
  std::string cmd = "'" + g_cli + "'";
  for (const auto& a : args) cmd += " '" + a + "'";
  cmd += " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> hash_dir(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = sha256_hex(read_file(e.path()));
  return out;
}

// ---- 6 -------------------------------------------------------------------

Check criterion6() {
  Check c;
  // Eight drafts per group with rewards 1..8: normalized (r - 1) / 7, so
  // tau 0.85 keeps drafts 7 and 8 with weights (6/7)^3 and 1.
  auto student = std::make_shared<MockBackend>();
  std::vector<std::string> drafts;
  for (int i = 1; i <= 8; ++i) drafts.push_back("Draft " + std::to_string(i) + ": reasoning.\nRelevance: 1");
  student->set_default(drafts);
  Gateway gateway(student);
  MockRewardClient reward;
  for (int i = 1; i <= 8; ++i) reward.add_rule("Draft " + std::to_string(i) + ":", i);

  std::vector<TrainingPair> pairs;
  for (int g = 0; g < 6; ++g) pairs.push_back({"g" + std::to_string(g), "query " + std::to_string(g), "d", "doc"});
  const fs::path dir = make_temp_dir();
  auto report = run_iteration(pairs, gateway, reward, RefineConfig{}, dir / dt_filename(1), 1);
  const double w7 = std::pow(6.0 / 7.0, 3);
  c.expect(std::fabs(w7 - 0.6297) < 1e-4, "hand value");
  c.expect(report.kept_examples == 2 * pairs.size(), "expected 2 examples per group");
  c.expect(report.degenerate == 0, "unexpected degenerate group");
  std::map<std::string, std::vector<double>> per_group;
  for (const auto& line : file_lines(dir / dt_filename(1))) {
    auto j = nlohmann::json::parse(line);
    per_group[j["qid"]].push_back(j["weight"].get<double>());
  }
  c.expect(per_group.size() == pairs.size(), "groups missing from the dataset");
  for (auto& [qid, w] : per_group) {
    std::sort(w.begin(), w.end());
    c.expect(w.size() == 2 && std::fabs(w[0] - w7) <= 1e-12 && w[1] == 1.0, "weights for group " + qid);
  }
  c.expect(std::fabs(report.mean_weight - (w7 + 1.0) / 2) <= 1e-12, "mean weight");

  // Same law through the CLI on the pipeline fixture: two sampling pairs and
  // one flat pair.
  const fs::path out = dir / "cli";
  const std::string config = (fs::path(EXPLAINRANK_FIXTURES) / "pipeline" / "config.json").string();
  c.expect(run_cli({"--config", config, "--out", out.string(), "refine", "--iter", "1"}) == 0, "refine command failed");
  try {
    auto m = nlohmann::json::parse(read_file(out / "refine.iter1.manifest.json"));
    c.expect(m["counts"]["pairs"] == 3, "manifest pairs");
    c.expect(m["counts"]["kept_examples"] == 4, "manifest kept_examples");
    c.expect(m["counts"]["degenerate"] == 1, "manifest degenerate");
    c.expect(file_lines(out / dt_filename(1)).size() == 4, "dataset line count differs from manifest");
  } catch (const std::exception& e) {
    c.expect(false, e.what());
  }
  fs::remove_all(dir);
  return c;
}

// ---- 7 -------------------------------------------------------------------

Check criterion7() {
  Check c;
  // Per query: 3 judged documents that mention the topic term once in long
  // text, and 7 short distractors that repeat it. BM25 prefers the
  // distractors; the reranker's labels follow the judgments on 90% of pairs.
  const std::string filler = " lorem ipsum dolor sit amet consectetur adipiscing elit sed do eiusmod tempor";
  std::vector<Document> docs;
  std::vector<Query> queries;
  Qrels qrels;
  std::map<std::string, int> label_of;
  for (int q = 0; q < 20; ++q) {
    const std::string term = "topic" + std::string(1, static_cast<char>('a' + q)) + "z";
    queries.push_back({"q" + std::to_string(q), term, "d"});
    for (int d = 0; d < 10; ++d) {
      const std::string id = "doc" + std::to_string(q * 10 + d);
      const bool judged = d < 3;
      std::string text = judged ? term + filler + filler : term + " " + term + " " + term + " note";
      text += " MARK" + id + "X";
      docs.push_back({id, {}, text, {}});
      const int gain = d == 0 ? 2 : judged ? 1 : 0;
      if (gain > 0) qrels[queries.back().id][id] = gain;
      label_of[id] = gain;
    }
  }
  // Disagree on exactly 20 of the 200 pairs.
  std::vector<std::string> ids;
  for (const auto& d : docs) ids.push_back(d.id);
  Rng rng(7);
  shuffle(ids, rng);
  for (std::size_t i = 0; i < 20; ++i) label_of[ids[i]] = (label_of[ids[i]] + 1 + static_cast<int>(i % 2)) % 3;

  auto mock = std::make_shared<MockBackend>();
  for (const auto& [id, label] : label_of)
    mock->add_rule({"MARK" + id + "X"}, {"Reasoning.\nRelevance: " + std::to_string(label)});
  Gateway gateway(mock);
  Corpus corpus(docs);
  auto index = build_index(corpus);

  Run first_stage, reranked;
  std::size_t pairs = 0, agree = 0;
  for (const auto& q : queries) {
    auto hits = bm25_search(index, q.text, 100);
    for (const auto& h : hits) first_stage.push_back({q.id, h.doc_id, h.rank, h.score, "bm25"});
    auto scored = rerank(q, hits, corpus, gateway, RerankConfig{});
    for (const auto& s : scored) {
      ++pairs;
      const auto it = qrels[q.id].find(s.doc_id);
      agree += s.label == (it == qrels[q.id].end() ? 0 : it->second) ? 1 : 0;
    }
    auto rows = to_run(q.id, scored);
    reranked.insert(reranked.end(), rows.begin(), rows.end());
  }
  c.expect(pairs == 200, "expected 200 reranked pairs, got " + std::to_string(pairs));
  c.expect(agree * 10 == pairs * 9, "label agreement is " + std::to_string(agree) + "/" + std::to_string(pairs));

  auto mean = [](const std::map<std::string, double>& m) {
    double s = 0;
    for (const auto& [k, v] : m) s += v;
    return s / static_cast<double>(m.size());
  };
  const double before = mean(per_query_ndcg(first_stage, qrels, 10));
  const double after = mean(per_query_ndcg(reranked, qrels, 10));
  std::ostringstream msg;
  msg << "BM25 " << before << " -> rerank " << after;
  c.expect(after - before >= 0.1, msg.str());
  std::cout << "  criterion 7 detail: nDCG@10 " << msg.str() << "\n";
  return c;
}

// ---- 8 -------------------------------------------------------------------

Check criterion8() {
  Check c;
  std::map<std::string, double> base;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 25; ++i) base["q" + std::to_string(i)] = u(rng);
  auto same = paired_t_test(base, base);
  c.expect(same.t == 0.0 && same.p == 1.0, "identical runs");

  // Differences 0.1, -0.05, 0.2, 0.0, 0.15: mean 0.08, variance 0.01075,
  // t = 0.08 / sqrt(0.01075 / 5) = 1.725324...
  std::map<std::string, double> a{{"1", 0.6}, {"2", 0.45}, {"3", 0.7}, {"4", 0.5}, {"5", 0.65}};
  std::map<std::string, double> b{{"1", 0.5}, {"2", 0.5}, {"3", 0.5}, {"4", 0.5}, {"5", 0.5}};
  auto r = paired_t_test(a, b);
  const double t = 0.08 / std::sqrt(0.01075 / 5.0);
  boost::math::students_t dist(4.0);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
  c.expect(r.n == 5, "pair count");
  c.expect(std::fabs(r.mean_difference - 0.08) <= 1e-6, "mean difference");
  c.expect(std::fabs(r.t - t) <= 1e-6, "t statistic");
  c.expect(std::fabs(r.p - p) <= 1e-6, "p value");

  for (int trial = 0; trial < 100; ++trial) {
    std::map<std::string, double> x, y;
    for (int i = 0, n = 2 + static_cast<int>(rng() % 30); i < n; ++i) {
      x[std::to_string(i)] = u(rng);
      y[std::to_string(i)] = u(rng);
    }
    auto xy = paired_t_test(x, y), yx = paired_t_test(y, x);
    c.expect(xy.t == -yx.t && xy.p == yx.p, "antisymmetry, trial " + std::to_string(trial));
  }
  return c;
}

// ---- 9 -------------------------------------------------------------------

bool full_pipeline(const std::string& config, const fs::path& out) {
  const std::string o = out.string();
  const std::vector<std::vector<std::string>> steps{
      {"index"},
      {"retrieve"},
      {"rerank", o + "/retrieve.run"},
      {"datagen"},
      {"refine"},
      {"eval", o + "/retrieve.run", o + "/rerank.run"},
      {"compare", o + "/retrieve.run", o + "/rerank.run"},
  };
  for (const auto& step : steps) {
    std::vector<std::string> args{"--config", config, "--out", o};
    args.insert(args.end(), step.begin(), step.end());
    if (run_cli(args) != 0) return false;
  }
  return true;
}

Check criterion9() {
  Check c;
  const std::string config = (fs::path(EXPLAINRANK_FIXTURES) / "pipeline" / "config.json").string();
  const fs::path dir = make_temp_dir();
  const auto t0 = Clock::now();
  const bool ok_a = full_pipeline(config, dir / "a");
  const double secs = seconds_since(t0);
  const bool ok_b = full_pipeline(config, dir / "b");
  c.expect(ok_a && ok_b, "a pipeline command failed");
  auto ha = hash_dir(dir / "a"), hb = hash_dir(dir / "b");
  c.expect(ha.size() >= 15, "expected every command's outputs, found " + std::to_string(ha.size()) + " files");
  for (const auto& [name, h] : ha) c.expect(hb.count(name) && hb[name] == h, name + " differs between reruns");
  c.expect(ha.size() == hb.size(), "file sets differ between reruns");

  // Rerunning a command in place must also reproduce its outputs.
  const std::string o = (dir / "a").string();
  c.expect(run_cli({"--config", config, "--out", o, "rerank", "--instruct", o + "/retrieve.run"}) == 0, "rerank --instruct");
  auto first = hash_dir(dir / "a");
  c.expect(run_cli({"--config", config, "--out", o, "rerank", "--instruct", o + "/retrieve.run"}) == 0, "rerank --instruct");
  c.expect(hash_dir(dir / "a") == first, "rerank --instruct differs on rerun");

  c.expect(secs < 60.0, "pipeline took " + std::to_string(secs) + " s");
  std::cout << "  criterion 9 detail: full pipeline in " << secs << " s, " << ha.size() << " files\n";
  fs::remove_all(dir);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: explainrank_acceptance <explainrank-binary>\n";
    return 2;
  }
  g_cli = argv[1];
  const std::vector<std::pair<std::string, std::function<Check()>>> criteria{
      {"BM25 matches hand values and brute force", criterion1},
      {"nDCG@10 matches brute force and the fixed example", criterion2},
      {"hybrid score orders by label then retrieval score", criterion3},
      {"reward normalization, threshold filter and weights", criterion4},
      {"synthetic data record-count law and reproducibility", criterion5},
      {"refinement keeps two weighted drafts per group", criterion6},
      {"reranking beats first-stage BM25 by at least 0.1 nDCG@10", criterion7},
      {"paired t-test", criterion8},
      {"CLI outputs are byte-identical across reruns", criterion9},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check check;
    try {
      check = criteria[i].second();
    } catch (const std::exception& e) {
      check.failures.push_back(std::string("exception: ") + e.what());
    }
    const bool pass = check.failures.empty();
    failed += pass ? 0 : 1;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first << "\n";
    for (const auto& f : check.failures) std::cout << "  " << f << "\n";
  }
  return failed;
}
