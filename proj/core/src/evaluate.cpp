#include "explainrank/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <set>

#include "explainrank/error.hpp"

namespace explainrank {
namespace {

double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm,
               double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
         simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  if (a == b) return 0.0;
  // a few fixed panels first so a narrow peak cannot hide between samples
  constexpr int kPanels = 16;
  double total = 0.0;
  const double h = (b - a) / kPanels;
  for (int i = 0; i < kPanels; ++i) {
    const double lo = a + i * h, hi = (i + 1 == kPanels) ? b : lo + h;
    const double flo = f(lo), fhi = f(hi), fmid = f(0.5 * (lo + hi));
    const double whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
    total += simpson(f, lo, hi, flo, fmid, fhi, whole, tol / kPanels, 40);
  }
  return total;
}

std::string fmt(double v, const char* f = "%.4f") {
  char buf[32];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

double ndcg_at_k(const std::vector<std::string>& ranking, const std::map<std::string, int>& gains,
                 std::size_t k) {
  if (k == 0) throw ValidationError("ndcg: k must be >= 1");
  double dcg = 0.0;
  const std::size_t depth = std::min(k, ranking.size());
  for (std::size_t i = 0; i < depth; ++i) {
    auto it = gains.find(ranking[i]);
    if (it != gains.end() && it->second > 0) dcg += it->second / std::log2(static_cast<double>(i + 2));
  }
  std::vector<int> ideal;
  for (const auto& [doc, g] : gains)
    if (g > 0) ideal.push_back(g);
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i)
    idcg += ideal[i] / std::log2(static_cast<double>(i + 2));
  return idcg > 0.0 ? dcg / idcg : 0.0;
}

std::map<std::string, double> per_query_ndcg(const Run& run, const Qrels& qrels, std::size_t k) {
  std::map<std::string, std::vector<std::string>> rankings;
  for (const auto& [qid, entries] : group_run(run)) {
    auto& r = rankings[qid];
    for (const auto& e : entries) r.push_back(e.doc_id);
  }
  std::map<std::string, double> out;
  for (const auto& [qid, gains] : qrels) {
    auto it = rankings.find(qid);
    out[qid] = it == rankings.end() ? 0.0 : ndcg_at_k(it->second, gains, k);
  }
  return out;
}

EvalReport evaluate_run(const Run& run, const Qrels& qrels,
                        const std::map<std::string, std::string>& query_domains, std::size_t k,
                        const std::vector<std::string>& domain_order) {
  EvalReport report;
  report.k = k;
  for (const auto& [qid, entries] : group_run(run))
    if (!qrels.count(qid)) throw ValidationError("run query '" + qid + "' has no relevance judgments");

  std::vector<std::string> order = domain_order;
  if (order.empty()) {
    for (const auto& [qid, gains] : qrels) {
      auto it = query_domains.find(qid);
      if (it != query_domains.end() && std::find(order.begin(), order.end(), it->second) == order.end())
        order.push_back(it->second);
    }
    std::sort(order.begin(), order.end());
  }

  std::set<std::string> in_run;
  for (const auto& e : run) in_run.insert(e.query_id);
  report.per_query = per_query_ndcg(run, qrels, k);

  std::map<std::string, std::pair<double, std::size_t>> sums;
  for (const auto& [qid, score] : report.per_query) {
    auto it = query_domains.find(qid);
    if (it == query_domains.end()) throw ValidationError("judged query '" + qid + "' is not in the query set");
    if (std::find(order.begin(), order.end(), it->second) == order.end())
      throw ValidationError("query '" + qid + "' has unknown domain '" + it->second + "'");
    if (!in_run.count(qid)) ++report.missing_queries;
    auto& [sum, count] = sums[it->second];
    sum += score;
    ++count;
  }
  double total = 0.0;
  for (const auto& d : order) {
    auto it = sums.find(d);
    if (it == sums.end()) continue;
    double mean = it->second.first / static_cast<double>(it->second.second);
    report.per_domain.emplace_back(d, mean);
    total += mean;
  }
  report.overall = report.per_domain.empty() ? 0.0 : total / static_cast<double>(report.per_domain.size());
  return report;
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["k"] = k;
  j["overall"] = overall;
  j["missing_queries"] = missing_queries;
  auto domains = nlohmann::ordered_json::object();
  for (const auto& [d, v] : per_domain) domains[d] = v;
  j["per_domain"] = domains;
  auto queries = nlohmann::ordered_json::object();
  for (const auto& [q, v] : per_query) queries[q] = v;
  j["per_query"] = queries;
  return j;
}

std::string EvalReport::to_table(const std::string& run_name) const {
  return format_eval_table({{run_name, *this}});
}

std::string format_eval_table(const std::vector<std::pair<std::string, EvalReport>>& reports) {
  if (reports.empty()) return "";
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"run"};
  for (const auto& [d, v] : reports.front().second.per_domain) header.push_back(d);
  header.push_back("Avg.");
  rows.push_back(header);
  for (const auto& [name, report] : reports) {
    std::vector<std::string> row{name};
    for (std::size_t c = 1; c + 1 < header.size(); ++c) {
      auto it = std::find_if(report.per_domain.begin(), report.per_domain.end(),
                             [&](const auto& p) { return p.first == header[c]; });
      row.push_back(it == report.per_domain.end() ? "-" : fmt(it->second));
    }
    row.push_back(fmt(report.overall));
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const auto fill = std::string(width[c] - row[c].size(), ' ');
      if (c) out += "  ";
      out += c == 0 ? row[c] + fill : fill + row[c];
    }
    out += '\n';
  }
  return out;
}

double student_t_two_sided_p(double t, double dof) {
  if (!(dof > 0.0)) throw ValidationError("degrees of freedom must be positive");
  if (std::isnan(t)) throw ValidationError("t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  if (t == 0.0) return 1.0;
  // With s = sqrt(dof) tan(theta) the t density becomes
  // c * cos(theta)^(dof-1) on [0, pi/2), c = Gamma((dof+1)/2) / (sqrt(pi) Gamma(dof/2));
  // this is the incomplete-beta relation P = I_{dof/(dof+t^2)}(dof/2, 1/2)
  // under u = cos^2(theta).
  const double c = std::exp(std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof)) /
                   std::sqrt(std::numbers::pi);
  const double theta_t = std::atan(std::abs(t) / std::sqrt(dof));
  auto integrand = [dof](double theta) { return std::pow(std::cos(theta), dof - 1.0); };
  double tail = integrate(integrand, theta_t, 0.5 * std::numbers::pi, 1e-13);
  return std::clamp(2.0 * c * tail, 0.0, 1.0);
}

TTestResult paired_t_test(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
  std::vector<double> diffs;
  for (const auto& [qid, va] : a) {
    auto it = b.find(qid);
    if (it != b.end()) diffs.push_back(va - it->second);
  }
  if (diffs.size() < 2) throw ValidationError("paired t-test needs at least two common queries");
  TTestResult r;
  r.n = diffs.size();
  const double n = static_cast<double>(r.n);
  double sum = 0.0;
  for (double d : diffs) sum += d;
  r.mean_difference = sum / n;
  double ss = 0.0;
  for (double d : diffs) ss += (d - r.mean_difference) * (d - r.mean_difference);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (sd == 0.0) {
    if (r.mean_difference == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = std::copysign(std::numeric_limits<double>::infinity(), r.mean_difference);
      r.p = 0.0;
    }
    return r;
  }
  r.t = r.mean_difference / (sd / std::sqrt(n));
  r.p = student_t_two_sided_p(r.t, n - 1.0);
  return r;
}

}  // namespace explainrank
