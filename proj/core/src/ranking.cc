#include "qqse/ranking.h"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "json.hpp"
#include "qqse/util.h"

namespace qqse {

RankedList rank_by_score(const ScoreVector& scores) {
  RankedList ranked;
  std::iota(ranked.begin(), ranked.end(), 1);
  std::stable_sort(ranked.begin(), ranked.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a - 1)] > scores[static_cast<std::size_t>(b - 1)];
  });
  return ranked;
}

double reciprocal_rank(const RankedList& ranked, const std::set<int>& relevant) {
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (relevant.contains(ranked[i])) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

double average_precision(const RankedList& ranked, const std::set<int>& relevant) {
  if (relevant.empty()) return 0.0;
  double sum = 0.0;
  int hits = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (relevant.contains(ranked[i])) {
      ++hits;
      sum += hits / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(relevant.size());
}

double precision_at_k(const RankedList& ranked, const std::set<int>& relevant, int k) {
  if (k < 1 || k > kNumQuestions) {
    throw Error("precision_at_k: k = " + std::to_string(k) + " outside 1..16");
  }
  int hits = 0;
  for (int i = 0; i < k; ++i) hits += relevant.contains(ranked[static_cast<std::size_t>(i)]);
  return hits / static_cast<double>(k);
}

namespace {

template <typename F>
double mean_over(std::span<const RankedQuery> queries, const char* metric, F&& f) {
  if (queries.empty()) throw Error(std::string(metric) + ": empty query set");
  double sum = 0.0;
  for (const auto& q : queries) sum += f(q);
  return sum / static_cast<double>(queries.size());
}

}  // namespace

double mean_reciprocal_rank(std::span<const RankedQuery> queries) {
  return mean_over(queries, "mrr",
                   [](const RankedQuery& q) { return reciprocal_rank(q.ranked, q.relevant); });
}

double mean_average_precision(std::span<const RankedQuery> queries) {
  return mean_over(queries, "map",
                   [](const RankedQuery& q) { return average_precision(q.ranked, q.relevant); });
}

double mean_precision_at_k(std::span<const RankedQuery> queries, int k) {
  return mean_over(queries, "precision_at_k",
                   [k](const RankedQuery& q) { return precision_at_k(q.ranked, q.relevant, k); });
}

EvalReport evaluate(const Scorer& scorer, const Corpus& test) {
  if (test.empty()) throw Error("evaluate: test corpus is empty");
  std::vector<RankedQuery> ranked;
  ranked.reserve(test.size());
  EvalReport report;
  report.scorer = scorer.name();
  for (const auto& q : test.queries()) {
    ranked.push_back({rank_by_score(scorer.score(q.tokens)), q.valid_cq_ids});
    if (q.valid_cq_ids.empty()) ++report.without_relevant;
  }
  report.n = ranked.size();
  report.mrr = mean_reciprocal_rank(ranked);
  report.map = mean_average_precision(ranked);
  report.p1 = mean_precision_at_k(ranked, 1);
  report.p2 = mean_precision_at_k(ranked, 2);
  report.p3 = mean_precision_at_k(ranked, 3);
  return report;
}

namespace {

nlohmann::json report_json(const EvalReport& r) {
  return {{"scorer", r.scorer}, {"mrr", r.mrr}, {"map", r.map}, {"p1", r.p1},
          {"p2", r.p2},         {"p3", r.p3},   {"n", r.n}};
}

}  // namespace

std::string eval_report_to_json(const EvalReport& report) { return report_json(report).dump(); }

std::string eval_reports_to_json(std::span<const EvalReport> reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(report_json(r));
  return arr.dump(2);
}

std::string format_eval_table(std::span<const EvalReport> reports) {
  std::size_t width = 6;
  for (const auto& r : reports) width = std::max(width, r.scorer.size());
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-*s  %6s  %6s  %6s  %6s  %6s  %6s\n",
                static_cast<int>(width), "scorer", "MRR", "MAP", "P@1", "P@2", "P@3", "n");
  out += line;
  out += std::string(width + 8 * 6, '-') + "\n";
  for (const auto& r : reports) {
    std::snprintf(line, sizeof(line), "%-*s  %6.3f  %6.3f  %6.3f  %6.3f  %6.3f  %6zu\n",
                  static_cast<int>(width), r.scorer.c_str(), r.mrr, r.map, r.p1, r.p2, r.p3, r.n);
    out += line;
  }
  return out;
}

}  // namespace qqse
