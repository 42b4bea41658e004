#ifndef QQSE_BASELINES_H_
#define QQSE_BASELINES_H_

#include <array>
#include <memory>

#include "qqse/embeddings.h"
#include "qqse/model.h"
#include "qqse/ranking.h"
#include "qqse/trainer.h"

namespace qqse {

/// Scores with a trained network. Used for the full model and for the
/// query-only variant alike.
class ModelScorer : public Scorer {
 public:
  ModelScorer(ModelWeights weights, const EmbeddingTable& table, const Catalog& catalog,
              std::string name = {});
  ModelScorer(const ModelScorer&) = delete;
  ModelScorer& operator=(const ModelScorer&) = delete;

  std::string name() const override { return name_; }
  ScoreVector score(const Tokens& query) const override { return predictor_.predict(query); }
  const ModelWeights& weights() const { return weights_; }

 private:
  ModelWeights weights_;
  Predictor<float> predictor_;
  std::string name_;
};

enum class SimilarityMode { kSimilar, kDissimilar };

/// Cosine between the averaged query embedding and the sum of the averaged
/// question and averaged answer embeddings.
///
/// The binary decision is delta >= threshold (similar) or delta <= threshold
/// (dissimilar). For ranking, the score is delta in similar mode and -delta in
/// dissimilar mode.
class EmbeddingSimilarityScorer : public Scorer {
 public:
  EmbeddingSimilarityScorer(const EmbeddingTable& table, const Catalog& catalog,
                            SimilarityMode mode, double threshold);

  std::string name() const override;
  ScoreVector score(const Tokens& query) const override;

  /// Raw cosine per question.
  ScoreVector deltas(const Tokens& query) const;
  std::array<bool, kNumQuestions> classify(const Tokens& query) const;

 private:
  const EmbeddingTable& table_;
  SimilarityMode mode_;
  double threshold_;
  std::vector<std::vector<double>> question_vectors_;
};

/// Seeded coin flips for classification and seeded uniform scores for
/// ranking. Outputs depend only on (seed, query tokens).
class RandomScorer : public Scorer {
 public:
  explicit RandomScorer(std::uint64_t seed) : seed_(seed) {}

  std::string name() const override { return "Random"; }
  ScoreVector score(const Tokens& query) const override;
  std::array<bool, kNumQuestions> classify(const Tokens& query) const;

 private:
  std::uint64_t seed_;
};

/// Copy of `hp` configured for the query-only ablation.
HyperParams query_only_hyperparams(HyperParams hp);

/// Trains the query-only ablation with otherwise identical settings.
TrainResult<float> train_query_only(const Corpus& corpus, const Catalog& catalog,
                                    const EmbeddingTable& table, const HyperParams& hp,
                                    const TrainOptions& options = {});

}  // namespace qqse

#endif  // QQSE_BASELINES_H_
