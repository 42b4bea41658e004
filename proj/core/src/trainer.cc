#include "qqse/trainer.h"

#include <chrono>
#include <map>

#include "json.hpp"

namespace qqse {

namespace {

struct TripletRef {
  std::uint32_t query;
  std::uint8_t question;  // 0-based catalog index
  std::uint8_t label;
};

template <typename Real>
struct QuestionInputs {
  std::vector<SequenceMatrix> question;
  std::vector<SequenceMatrix> answers;

  QuestionInputs(const HyperParams& hp, const EmbeddingTable& table, const Catalog& catalog) {
    for (const auto& q : catalog) {
      question.push_back(embed_sequence(table, question_tokens(q), hp.max_len_cq));
      answers.push_back(embed_sequence(table, answer_tokens(q), hp.max_len_ans));
    }
  }
};

/// One optimization step over a minibatch. Each distinct query and question
/// in the batch is encoded once; upstream gradients from all triplets that
/// share an encoding are summed before that branch is back-propagated.
template <typename Real>
double train_batch(BasicModelWeights<Real>& weights, BasicModelWeights<Real>& grads,
                   AdamOptimizer<Real>& adam, std::span<const TripletRef> batch,
                   const std::vector<SequenceMatrix>& queries, const QuestionInputs<Real>& inputs) {
  const HyperParams& hp = weights.hyperparams();
  const auto fc = static_cast<Eigen::Index>(hp.cnn_fc_out);
  const auto lstm = static_cast<Eigen::Index>(2 * hp.lstm_hidden);

  struct QueryState {
    CnnTrace<Real> trace;
    Vector<Real> grad;
  };
  struct QuestionState {
    BiLstmTrace<Real> lstm;
    CnnTrace<Real> answers;
    Vector<Real> code, answer_code, grad_code, grad_answers;
  };
  std::map<std::uint32_t, QueryState> query_states;
  std::map<std::uint8_t, QuestionState> question_states;

  for (const auto& t : batch) {
    if (auto [it, inserted] = query_states.try_emplace(t.query); inserted) {
      cnn_branch_forward(weights, CnnBranch::kQuery, queries[t.query], &it->second.trace);
      it->second.grad = Vector<Real>::Zero(fc);
    }
    if (auto [it, inserted] = question_states.try_emplace(t.question); inserted) {
      auto& s = it->second;
      if (hp.query_only) {
        s.code = question_one_hot<Real>(t.question + 1);
      } else {
        s.code = bilstm_branch_forward(weights, inputs.question[t.question], &s.lstm);
        s.answer_code =
            cnn_branch_forward(weights, CnnBranch::kAnswers, inputs.answers[t.question], &s.answers);
        s.grad_code = Vector<Real>::Zero(lstm);
        s.grad_answers = Vector<Real>::Zero(fc);
      }
    }
  }

  grads.set_zero();
  const Real scale = Real(1) / static_cast<Real>(batch.size());
  double loss = 0;
  HeadTrace<Real> head;
  for (const auto& t : batch) {
    auto& q = query_states[t.query];
    auto& c = question_states[t.question];
    head_forward(weights,
                 head_input<Real>(hp, q.trace.output, c.code, c.answer_code, t.question + 1),
                 &head);
    loss += bce_loss(static_cast<double>(head.probability), t.label);
    const Real d_logit =
        (static_cast<Real>(sigmoid(static_cast<double>(head.logit))) - Real(t.label)) * scale;
    Vector<Real> d_input = head_backward(weights, head, d_logit, grads);
    q.grad += d_input.head(fc);
    if (!hp.query_only) {
      c.grad_code += d_input.segment(fc, lstm);
      c.grad_answers += d_input.tail(fc);
    }
  }
  for (auto& [index, q] : query_states) {
    cnn_branch_backward(weights, CnnBranch::kQuery, q.trace, q.grad, grads);
  }
  if (!hp.query_only) {
    for (auto& [index, c] : question_states) {
      bilstm_branch_backward(weights, c.lstm, c.grad_code, grads);
      cnn_branch_backward(weights, CnnBranch::kAnswers, c.answers, c.grad_answers, grads);
    }
  }
  adam.step(weights, grads);
  return loss;
}

template <typename Real>
double corpus_loss(const BasicModelWeights<Real>& weights, const EmbeddingTable& table,
                   const Catalog& catalog, const std::vector<SequenceMatrix>& queries,
                   const Corpus& corpus) {
  if (corpus.empty()) return 0.0;
  Predictor<Real> predictor(weights, table, catalog);
  double total = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto scores = predictor.predict(queries[i]);
    const auto& valid = corpus.queries()[i].valid_cq_ids;
    for (int j = 0; j < kNumQuestions; ++j) {
      total += bce_loss(scores[static_cast<std::size_t>(j)], valid.contains(j + 1) ? 1 : 0);
    }
  }
  return total / static_cast<double>(corpus.size() * kNumQuestions);
}

std::vector<SequenceMatrix> embed_queries(const Corpus& corpus, const EmbeddingTable& table,
                                          std::size_t max_len) {
  std::vector<SequenceMatrix> out;
  out.reserve(corpus.size());
  for (const auto& q : corpus.queries()) out.push_back(embed_sequence(table, q.tokens, max_len));
  return out;
}

}  // namespace

template <typename Real>
TrainResult<Real> train(const Corpus& corpus, const Catalog& catalog, const EmbeddingTable& table,
                        const HyperParams& hp, const TrainOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  hp.validate();
  if (corpus.empty()) throw Error("train: corpus is empty");
  if (catalog.size() != kNumQuestions) throw Error("train: catalog must have 16 questions");

  Corpus fit = corpus;
  Corpus validation;
  if (hp.validation_fraction > 0 && corpus.size() > 1) {
    std::tie(fit, validation) =
        split_corpus(corpus, 1.0 - hp.validation_fraction, hp.seed ^ 0x5eedf00dULL);
  }

  TrainResult<Real> result{init_weights<Real>(hp, table.dimension(), table.fingerprint()), {}};
  TrainReport& report = result.report;
  report.seed = hp.seed;
  report.train_queries = fit.size();
  report.validation_queries = validation.size();

  const auto fit_inputs = embed_queries(fit, table, hp.max_len_query);
  const auto validation_inputs = embed_queries(validation, table, hp.max_len_query);
  const QuestionInputs<Real> question_inputs(hp, table, catalog);

  std::vector<TripletRef> triplets;
  triplets.reserve(fit.size() * kNumQuestions);
  for (std::size_t i = 0; i < fit.size(); ++i) {
    for (int j = 0; j < kNumQuestions; ++j) {
      triplets.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint8_t>(j),
                          static_cast<std::uint8_t>(fit.queries()[i].valid_cq_ids.contains(j + 1))});
    }
  }

  BasicModelWeights<Real>& weights = result.weights;
  BasicModelWeights<Real> best = weights;
  BasicModelWeights<Real> grads = weights.zeros_like();
  AdamOptimizer<Real> adam(hp, weights.values().size());
  Rng shuffle_rng(hp.seed * 0x9e3779b97f4a7c15ULL + 1);

  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= hp.max_epochs; ++epoch) {
    shuffle_rng.shuffle(std::span(triplets));
    double train_loss = 0;
    for (std::size_t start = 0; start < triplets.size(); start += hp.batch_size) {
      const std::size_t n = std::min(hp.batch_size, triplets.size() - start);
      train_loss += train_batch(weights, grads, adam,
                                std::span<const TripletRef>(triplets).subspan(start, n), fit_inputs,
                                question_inputs);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = train_loss / static_cast<double>(triplets.size());
    stats.validation_loss =
        validation.empty()
            ? corpus_loss(weights, table, catalog, fit_inputs, fit)
            : corpus_loss(weights, table, catalog, validation_inputs, validation);
    report.epochs.push_back(stats);
    report.stopping_epoch = epoch;
    if (options.on_epoch) options.on_epoch(stats);

    if (stats.validation_loss < best_loss) {
      best_loss = stats.validation_loss;
      best = weights;
      report.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= hp.early_stop_patience) {
      report.early_stopped = true;
      break;
    }
  }
  weights = std::move(best);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

template <typename Real>
double mean_loss(const BasicModelWeights<Real>& weights, const EmbeddingTable& table,
                 const Catalog& catalog, const Corpus& corpus) {
  check_fingerprint(weights.fingerprint(), table);
  return corpus_loss(weights, table, catalog,
                     embed_queries(corpus, table, weights.hyperparams().max_len_query), corpus);
}

std::string train_report_to_json(const TrainReport& report) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : report.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"validation_loss", e.validation_loss}});
  }
  nlohmann::json j = {{"epochs", epochs},
                      {"best_epoch", report.best_epoch},
                      {"stopping_epoch", report.stopping_epoch},
                      {"early_stopped", report.early_stopped},
                      {"train_queries", report.train_queries},
                      {"validation_queries", report.validation_queries},
                      {"seed", report.seed},
                      {"wall_seconds", report.wall_seconds},
                      {"deterministic", report.deterministic}};
  return j.dump(2);
}

template TrainResult<float> train<float>(const Corpus&, const Catalog&, const EmbeddingTable&,
                                         const HyperParams&, const TrainOptions&);
template TrainResult<double> train<double>(const Corpus&, const Catalog&, const EmbeddingTable&,
                                           const HyperParams&, const TrainOptions&);
template double mean_loss<float>(const ModelWeights&, const EmbeddingTable&, const Catalog&,
                                 const Corpus&);
template double mean_loss<double>(const ModelWeights64&, const EmbeddingTable&, const Catalog&,
                                  const Corpus&);

}  // namespace qqse
