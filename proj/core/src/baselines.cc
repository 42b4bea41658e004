#include "qqse/baselines.h"

#include <cstdio>

namespace qqse {

ModelScorer::ModelScorer(ModelWeights weights, const EmbeddingTable& table,
                         const Catalog& catalog, std::string name)
    : weights_(std::move(weights)), predictor_(weights_, table, catalog), name_(std::move(name)) {
  if (name_.empty()) name_ = weights_.hyperparams().query_only ? "Query Only" : "Neural ranker";
}

EmbeddingSimilarityScorer::EmbeddingSimilarityScorer(const EmbeddingTable& table,
                                                     const Catalog& catalog, SimilarityMode mode,
                                                     double threshold)
    : table_(table), mode_(mode), threshold_(threshold) {
  for (const auto& q : catalog) {
    auto v = average_embedding(table, question_tokens(q));
    const auto a = average_embedding(table, answer_tokens(q));
    for (std::size_t d = 0; d < v.size(); ++d) v[d] += a[d];
    question_vectors_.push_back(std::move(v));
  }
}

std::string EmbeddingSimilarityScorer::name() const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s Emb. (delta %s %.1f)",
                mode_ == SimilarityMode::kSimilar ? "Similar" : "Dissimilar",
                mode_ == SimilarityMode::kSimilar ? ">=" : "<=", threshold_);
  return buf;
}

ScoreVector EmbeddingSimilarityScorer::deltas(const Tokens& query) const {
  const auto qv = average_embedding(table_, query);
  ScoreVector out{};
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = cosine_similarity(qv, question_vectors_[j]);
  }
  return out;
}

ScoreVector EmbeddingSimilarityScorer::score(const Tokens& query) const {
  auto d = deltas(query);
  if (mode_ == SimilarityMode::kDissimilar) {
    for (double& x : d) x = -x;
  }
  return d;
}

std::array<bool, kNumQuestions> EmbeddingSimilarityScorer::classify(const Tokens& query) const {
  const auto d = deltas(query);
  std::array<bool, kNumQuestions> out{};
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = mode_ == SimilarityMode::kSimilar ? d[j] >= threshold_ : d[j] <= threshold_;
  }
  return out;
}

namespace {

Rng query_rng(std::uint64_t seed, const Tokens& query, std::uint64_t stream) {
  return Rng(fnv1a64(join_tokens(query), seed * 0x9e3779b97f4a7c15ULL + stream));
}

}  // namespace

ScoreVector RandomScorer::score(const Tokens& query) const {
  Rng rng = query_rng(seed_, query, 1);
  ScoreVector out{};
  for (double& x : out) x = rng.uniform();
  return out;
}

std::array<bool, kNumQuestions> RandomScorer::classify(const Tokens& query) const {
  Rng rng = query_rng(seed_, query, 2);
  std::array<bool, kNumQuestions> out{};
  for (bool& b : out) b = (rng.next() >> 63) != 0;
  return out;
}

HyperParams query_only_hyperparams(HyperParams hp) {
  hp.query_only = true;
  return hp;
}

TrainResult<float> train_query_only(const Corpus& corpus, const Catalog& catalog,
                                    const EmbeddingTable& table, const HyperParams& hp,
                                    const TrainOptions& options) {
  return train<float>(corpus, catalog, table, query_only_hyperparams(hp), options);
}

}  // namespace qqse
