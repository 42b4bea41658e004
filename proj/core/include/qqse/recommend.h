#ifndef QQSE_RECOMMEND_H_
#define QQSE_RECOMMEND_H_

#include <optional>
#include <string>
#include <vector>

#include "qqse/catalog.h"
#include "qqse/ranking.h"

namespace qqse {

/// Probability floor below which no question is shown.
inline constexpr double kServingThreshold = 0.5;

struct ScoredQuestion {
  int cq_id = 0;
  double score = 0;
};

struct Recommendation {
  int cq_id = 0;
  std::string question;
  std::vector<std::string> answers;
  double score = 0;
};

/// All 16 questions by descending score, ties by ascending id (the same
/// ordering `rank_by_score` uses for evaluation).
std::vector<ScoredQuestion> rank_questions(const ScoreVector& scores);
std::vector<ScoredQuestion> rank_questions(const Scorer& scorer, const Tokens& query);

/// The highest-ranked question when its score is >= threshold, else nothing.
std::optional<Recommendation> top_recommendation(const std::vector<ScoredQuestion>& ranked,
                                                 const Catalog& catalog,
                                                 double threshold = kServingThreshold);

/// Appends the tokenized answer to the query. Throws when the answer has no
/// terms.
Tokens reformulate(const Tokens& query, std::string_view answer);

}  // namespace qqse

#endif  // QQSE_RECOMMEND_H_
