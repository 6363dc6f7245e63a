#include <gtest/gtest.h>

#include <random>

#include "explainrank/error.hpp"
#include "explainrank/model.hpp"
#include "explainrank/prompts.hpp"
#include "explainrank/text.hpp"
#include "test_util.hpp"

using namespace explainrank;

namespace {

std::string words(std::size_t n, const std::string& stem = "w") {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + stem + std::to_string(i);
  return s;
}

std::string all_text(const Messages& m) {
  std::string s;
  for (const auto& x : m) s += x.content + "\n";
  return s;
}

}  // namespace

TEST(ApproxTokens, RoundsUpWordsTimesOnePointThree) {
  EXPECT_EQ(approx_tokens(""), 0u);
  EXPECT_EQ(approx_tokens("one"), 2u);
  EXPECT_EQ(approx_tokens(words(10)), 13u);
  EXPECT_EQ(approx_tokens(words(3)), 4u);
  EXPECT_EQ(approx_tokens(words(100)), 130u);
}

TEST(Truncate, FittingTextIsUnchanged) {
  const auto text = words(10);
  EXPECT_EQ(truncate_to_budget(text, 100), text);
}

TEST(Truncate, ThousandWordsAtBudget130KeepsHundred) {
  const auto out = truncate_to_budget(words(1000), 130);
  EXPECT_EQ(out, words(100) + " " + std::string(kTruncationMarker));
}

TEST(Truncate, BudgetOneKeepsFirstWord) {
  EXPECT_EQ(truncate_to_budget("alpha beta gamma", 1), "alpha " + std::string(kTruncationMarker));
  EXPECT_THROW(truncate_to_budget("a", 0), ValidationError);
}

TEST(Truncate, IsIdempotent) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto text = words(rng() % 300);
    const std::size_t budget = 1 + rng() % 200;
    const auto once = truncate_to_budget(text, budget);
    EXPECT_EQ(truncate_to_budget(once, budget), once);
    if (once != text) {
      const auto body = once.substr(0, once.size() - kTruncationMarker.size());
      EXPECT_TRUE(approx_tokens(body) <= budget || split_whitespace(body).size() == 1);
    }
  }
}

TEST(Template, RenderRequiresEveryPlaceholder) {
  PromptTemplate t{"t", "sys {a}", "user {b} {{literal}}"};
  auto m = t.render({{"a", "A"}, {"b", "B"}});
  EXPECT_EQ(m[0].content, "sys A");
  EXPECT_EQ(m[1].content, "user B {literal}");
  EXPECT_THROW(t.render({{"a", "A"}}), ValidationError);
  EXPECT_EQ(t.placeholders(), (std::vector<std::string>{"a", "b"}));
}

TEST(Template, ParseFormatRoundTrip) {
  for (const auto* t : {&PromptSet::defaults().rerank, &PromptSet::defaults().teacher,
                        &PromptSet::defaults().related_queries, &PromptSet::defaults().reward}) {
    auto back = parse_template(t->name, format_template(*t));
    EXPECT_EQ(back.system, t->system);
    EXPECT_EQ(back.user, t->user);
  }
  EXPECT_THROW(parse_template("x", "no sections"), ValidationError);
}

TEST(Template, ShippedFilesMatchBuiltInDefaults) {
  auto loaded = PromptSet::load_dir(EXPLAINRANK_TEMPLATES);
  const auto& d = PromptSet::defaults();
  EXPECT_EQ(loaded.rerank.system, d.rerank.system);
  EXPECT_EQ(loaded.rerank.user, d.rerank.user);
  EXPECT_EQ(loaded.teacher.system, d.teacher.system);
  EXPECT_EQ(loaded.teacher.user, d.teacher.user);
  EXPECT_EQ(loaded.related_queries.system, d.related_queries.system);
  EXPECT_EQ(loaded.related_queries.user, d.related_queries.user);
  EXPECT_EQ(loaded.reward.system, d.reward.system);
  EXPECT_EQ(loaded.reward.user, d.reward.user);
}

TEST(Template, DirectoryOverridesOneFile) {
  testutil::TempDir dir;
  write_file(dir / "rerank.txt", "[system]\ncustom {relevance_definition}\n[user]\n{query} | {document}\n");
  auto set = PromptSet::load_dir(dir.path());
  auto m = render_rerank_prompt("q", "d", std::nullopt, set);
  EXPECT_EQ(m[0].content, "custom ");
  EXPECT_EQ(m[1].content, "q | d");
  EXPECT_EQ(set.teacher.user, PromptSet::defaults().teacher.user);
}

TEST(RerankPrompt, ContainsInputsAndEndsWithLabelInstruction) {
  auto m = render_rerank_prompt("what is bm25", "BM25 is a ranking function.");
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].role, Role::kSystem);
  EXPECT_NE(m[1].content.find("what is bm25"), std::string::npos);
  EXPECT_NE(m[1].content.find("BM25 is a ranking function."), std::string::npos);
  const std::string tail = "write exactly \"Relevance: <label>\" where <label> is 0, 1, or 2.";
  ASSERT_GE(m[1].content.size(), tail.size());
  EXPECT_EQ(m[1].content.substr(m[1].content.size() - tail.size()), tail);
  EXPECT_EQ(m[0].content.find("Relevance definition"), std::string::npos);
}

TEST(RerankPrompt, DefinitionGoesIntoSystemText) {
  const std::string def = "In biology, relevant means the document explains the mechanism.";
  auto m = render_rerank_prompt("q", "doc", def);
  EXPECT_NE(m[0].content.find(def), std::string::npos);
  EXPECT_EQ(m[1].content.find(def), std::string::npos);
}

TEST(RerankPrompt, LongDocumentIsTruncatedToFit) {
  ContextBudget budget{400, 100};
  auto m = render_rerank_prompt("q", words(2000, "x"), std::nullopt, PromptSet::defaults(), budget);
  EXPECT_NE(m[1].content.find(std::string(kTruncationMarker)), std::string::npos);
  EXPECT_LE(approx_tokens(all_text(m)), budget.context_tokens - budget.generation_tokens + 2);
  EXPECT_NE(m[1].content.find("x0 x1 x2"), std::string::npos);
}

TEST(TeacherPrompt, AnnotationPhrasingAndPreconditions) {
  auto a = render_teacher_prompt("q", "d");
  EXPECT_NE(all_text(a).find("Annotate the relevance"), std::string::npos);
  EXPECT_NE(all_text(a).find("explanation"), std::string::npos);
  EXPECT_EQ(a, render_teacher_prompt("q", "d"));
  EXPECT_THROW(render_teacher_prompt("q", ""), ValidationError);
  EXPECT_THROW(render_rerank_prompt("", "d"), ValidationError);
}

TEST(RelatedQueriesPrompt, EmbedsAnswerAndDocs) {
  auto m = render_related_queries_prompt("q text", "<b>answer</b> text",
                                         {{"https://x.org/a", "linked body"}});
  const auto s = all_text(m);
  EXPECT_NE(s.find("q text"), std::string::npos);
  EXPECT_NE(s.find("answer text"), std::string::npos);
  EXPECT_NE(s.find("https://x.org/a"), std::string::npos);
  EXPECT_NE(s.find("linked body"), std::string::npos);
  EXPECT_NE(s.find("numbered list"), std::string::npos);
  EXPECT_EQ(m, render_related_queries_prompt("q text", "<b>answer</b> text", {{"https://x.org/a", "linked body"}}));
}

TEST(RelatedQueriesPrompt, NoDocsOmitsSection) {
  auto s = all_text(render_related_queries_prompt("q", "a", {}));
  EXPECT_EQ(s.find("Documents linked"), std::string::npos);
  EXPECT_THROW(render_related_queries_prompt("q", "", {}), ValidationError);
}

TEST(RewardPrompt, CarriesAllThreeInputs) {
  auto s = all_text(render_reward_prompt("Q1", "D1", "OUT1"));
  EXPECT_NE(s.find("Q1"), std::string::npos);
  EXPECT_NE(s.find("D1"), std::string::npos);
  EXPECT_NE(s.find("OUT1"), std::string::npos);
}
