#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "explainrank/model.hpp"

namespace explainrank {

/// nDCG@k with linear gains. Zero when the ideal DCG is zero.
double ndcg_at_k(const std::vector<std::string>& ranking, const std::map<std::string, int>& gains,
                 std::size_t k = 10);

struct EvalReport {
  std::size_t k = 10;
  std::map<std::string, double> per_query;
  /// Domain means in reporting order.
  std::vector<std::pair<std::string, double>> per_domain;
  double overall = 0.0;
  std::size_t missing_queries = 0;

  nlohmann::ordered_json to_json() const;
  /// Aligned columns: one per domain then "Avg.".
  std::string to_table(const std::string& run_name = "run") const;
};

/// Aligned-column table: a header row of domains then "Avg.", one row per
/// report. Columns follow the first report's domain order.
std::string format_eval_table(const std::vector<std::pair<std::string, EvalReport>>& reports);

/// Scores every judged query (absent from the run -> 0, counted in
/// missing_queries). `domain_order` fixes the column order; when empty,
/// domains appear sorted by name. Throws ValidationError when a run query
/// has no judgments, or a query has no domain, or its domain is not listed.
EvalReport evaluate_run(const Run& run, const Qrels& qrels,
                        const std::map<std::string, std::string>& query_domains,
                        std::size_t k = 10, const std::vector<std::string>& domain_order = {});

/// Per-query nDCG without domain aggregation; judged queries missing from
/// the run score 0.
std::map<std::string, double> per_query_ndcg(const Run& run, const Qrels& qrels, std::size_t k = 10);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  std::size_t n = 0;
  double mean_difference = 0.0;
};

/// Two-sided paired t-test over the queries both maps share. Requires at
/// least two common queries.
TTestResult paired_t_test(const std::map<std::string, double>& a,
                          const std::map<std::string, double>& b);

/// Two-sided tail probability P(|T| >= |t|) for Student's t with `dof`
/// degrees of freedom, by adaptive quadrature of the density.
double student_t_two_sided_p(double t, double dof);

}  // namespace explainrank
