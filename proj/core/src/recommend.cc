#include "qqse/recommend.h"

#include "qqse/util.h"

namespace qqse {

std::vector<ScoredQuestion> rank_questions(const ScoreVector& scores) {
  std::vector<ScoredQuestion> out;
  out.reserve(kNumQuestions);
  for (int id : rank_by_score(scores)) {
    out.push_back({id, scores[static_cast<std::size_t>(id - 1)]});
  }
  return out;
}

std::vector<ScoredQuestion> rank_questions(const Scorer& scorer, const Tokens& query) {
  return rank_questions(scorer.score(query));
}

std::optional<Recommendation> top_recommendation(const std::vector<ScoredQuestion>& ranked,
                                                 const Catalog& catalog, double threshold) {
  if (ranked.empty() || ranked.front().score < threshold) return std::nullopt;
  const auto& q = catalog.at(ranked.front().cq_id);
  return Recommendation{q.id, q.text, q.common_answers, ranked.front().score};
}

Tokens reformulate(const Tokens& query, std::string_view answer) {
  Tokens appended = tokenize(answer);
  if (appended.empty()) throw Error("reformulate: answer is empty");
  Tokens out = query;
  out.insert(out.end(), appended.begin(), appended.end());
  return out;
}

}  // namespace qqse
