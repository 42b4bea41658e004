#ifndef QQSE_TRAINER_H_
#define QQSE_TRAINER_H_

#include <functional>
#include <utility>
#include <vector>

#include "qqse/catalog.h"
#include "qqse/embeddings.h"
#include "qqse/model.h"

namespace qqse {

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double validation_loss = 0;

  bool operator==(const EpochStats&) const = default;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  std::size_t stopping_epoch = 0;
  bool early_stopped = false;
  std::size_t train_queries = 0;
  std::size_t validation_queries = 0;
  std::uint64_t seed = 0;
  double wall_seconds = 0;
  /// Training ran single-threaded and is bitwise reproducible for the seed.
  bool deterministic = true;

  /// Equality ignores wall time.
  bool operator==(const TrainReport& o) const {
    return epochs == o.epochs && best_epoch == o.best_epoch &&
           stopping_epoch == o.stopping_epoch && early_stopped == o.early_stopped &&
           train_queries == o.train_queries && validation_queries == o.validation_queries &&
           seed == o.seed && deterministic == o.deterministic;
  }
};

struct TrainOptions {
  /// Called after every epoch.
  std::function<void(const EpochStats&)> on_epoch;
};

template <typename Real>
struct TrainResult {
  BasicModelWeights<Real> weights;
  TrainReport report;
};

/// Minibatch BCE training with Adam over the 16 triplets of every query.
///
/// A seeded, query-level `validation_fraction` of `corpus` is held out for
/// early stopping; the returned weights are those of the epoch with the
/// lowest validation loss (training loss when no queries are held out).
template <typename Real = float>
TrainResult<Real> train(const Corpus& corpus, const Catalog& catalog, const EmbeddingTable& table,
                        const HyperParams& hp, const TrainOptions& options = {});

/// Mean BCE of the model over all triplets of `corpus`.
template <typename Real>
double mean_loss(const BasicModelWeights<Real>& weights, const EmbeddingTable& table,
                 const Catalog& catalog, const Corpus& corpus);

std::string train_report_to_json(const TrainReport& report);

}  // namespace qqse

#endif  // QQSE_TRAINER_H_
