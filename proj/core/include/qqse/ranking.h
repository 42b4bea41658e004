#ifndef QQSE_RANKING_H_
#define QQSE_RANKING_H_

#include <array>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "qqse/catalog.h"

namespace qqse {

/// The 16 question ids by descending score; equal scores order by
/// ascending id.
using RankedList = std::array<int, kNumQuestions>;

RankedList rank_by_score(const ScoreVector& scores);

/// 1 / rank of the first relevant id, 0 when `relevant` is empty.
double reciprocal_rank(const RankedList& ranked, const std::set<int>& relevant);

/// Mean over relevant items of (relevant items at or above its rank) / rank;
/// 0 when `relevant` is empty.
double average_precision(const RankedList& ranked, const std::set<int>& relevant);

/// |relevant within the top k| / k, for 1 <= k <= 16.
double precision_at_k(const RankedList& ranked, const std::set<int>& relevant, int k);

struct RankedQuery {
  RankedList ranked;
  std::set<int> relevant;
};

double mean_reciprocal_rank(std::span<const RankedQuery> queries);
double mean_average_precision(std::span<const RankedQuery> queries);
double mean_precision_at_k(std::span<const RankedQuery> queries, int k);

/// Anything that scores the 16 catalog questions for a query.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::string name() const = 0;
  virtual ScoreVector score(const Tokens& query) const = 0;
};

struct EvalReport {
  std::string scorer;
  double mrr = 0;
  double map = 0;
  double p1 = 0;
  double p2 = 0;
  double p3 = 0;
  std::size_t n = 0;
  std::size_t without_relevant = 0;
};

EvalReport evaluate(const Scorer& scorer, const Corpus& test);

/// {"scorer", "mrr", "map", "p1", "p2", "p3", "n"}
std::string eval_report_to_json(const EvalReport& report);
/// JSON array of report objects, in the given order.
std::string eval_reports_to_json(std::span<const EvalReport> reports);
/// Aligned plain-text table, one row per report.
std::string format_eval_table(std::span<const EvalReport> reports);

}  // namespace qqse

#endif  // QQSE_RANKING_H_
