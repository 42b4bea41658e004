#ifndef QQSE_MODEL_H_
#define QQSE_MODEL_H_

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qqse/catalog.h"
#include "qqse/embeddings.h"
#include "qqse/util.h"

namespace qqse {

/// Network and training configuration. Sizes are in tokens or units.
struct HyperParams {
  std::size_t max_len_query = 12;
  std::size_t max_len_cq = 16;
  std::size_t max_len_ans = 16;
  std::vector<std::size_t> cnn_filter_widths = {2, 3};
  std::size_t cnn_filters_per_width = 64;
  std::size_t cnn_fc_out = 64;
  std::size_t lstm_hidden = 64;
  std::size_t head_hidden = 64;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 20;
  std::size_t early_stop_patience = 3;
  std::uint64_t seed = 0;
  double probability_clamp_eps = 1e-7;
  /// Fraction of training queries held out for early stopping.
  double validation_fraction = 0.1;
  /// Ablation: the question branch becomes a one-hot cq id and the answers
  /// branch is dropped.
  bool query_only = false;

  /// Throws Error when a size is zero or a filter is wider than its input.
  void validate() const;
  std::size_t cnn_features() const { return cnn_filter_widths.size() * cnn_filters_per_width; }
  std::size_t head_input_width() const {
    return query_only ? cnn_fc_out + kNumQuestions : 2 * cnn_fc_out + 2 * lstm_hidden;
  }

  bool operator==(const HyperParams&) const = default;
};

std::string hyperparams_to_json(const HyperParams& hp);
/// Missing keys keep their defaults; unknown keys are rejected.
HyperParams hyperparams_from_json(std::string_view json_text);

/// A named, shaped slice of the flat parameter vector.
struct ParamBlock {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;

  bool operator==(const ParamBlock&) const = default;
};

struct CnnBlocks {
  std::vector<std::size_t> kernels;  // per width: [filters, width * dim]
  std::vector<std::size_t> biases;   // per width: [filters]
  std::size_t fc_weight = 0;         // [fc_out, features]
  std::size_t fc_bias = 0;           // [fc_out]

  bool operator==(const CnnBlocks&) const = default;
};

struct LstmBlocks {
  std::size_t input_weight = 0;      // [4H, dim], gate order i, f, g, o
  std::size_t recurrent_weight = 0;  // [4H, H]
  std::size_t bias = 0;              // [4H]

  bool operator==(const LstmBlocks&) const = default;
};

/// Parameter layout in serialization order: query CNN, question BiLSTM
/// (forward then backward), answers CNN, dense head, output unit. The
/// query-only variant has no BiLSTM or answers CNN blocks.
struct ModelLayout {
  std::vector<ParamBlock> blocks;
  std::size_t total = 0;
  CnnBlocks query_cnn;
  LstmBlocks lstm_forward;
  LstmBlocks lstm_backward;
  CnnBlocks answer_cnn;
  std::size_t head_weight = 0;
  std::size_t head_bias = 0;
  std::size_t output_weight = 0;
  std::size_t output_bias = 0;

  static ModelLayout build(const HyperParams& hp, std::size_t embedding_dim);

  bool operator==(const ModelLayout&) const = default;
};

/// All learned parameters of the ranker plus the configuration they were
/// built for. Gradients use the same type and layout.
template <typename Real>
class BasicModelWeights {
 public:
  using Scalar = Real;

  BasicModelWeights() = default;
  /// Zero-initialized parameters.
  BasicModelWeights(HyperParams hp, std::size_t embedding_dim, std::string fingerprint);

  const HyperParams& hyperparams() const { return hp_; }
  std::size_t embedding_dim() const { return dim_; }
  const std::string& fingerprint() const { return fingerprint_; }
  const ModelLayout& layout() const { return layout_; }

  std::span<Real> values() { return values_; }
  std::span<const Real> values() const { return values_; }
  std::span<Real> block(std::size_t index);
  std::span<const Real> block(std::size_t index) const;

  BasicModelWeights zeros_like() const;
  void set_zero();

  template <typename Other>
  BasicModelWeights<Other> cast() const {
    BasicModelWeights<Other> out(hp_, dim_, fingerprint_);
    auto dst = out.values();
    for (std::size_t i = 0; i < values_.size(); ++i) dst[i] = static_cast<Other>(values_[i]);
    return out;
  }

  bool operator==(const BasicModelWeights&) const = default;

 private:
  HyperParams hp_;
  std::size_t dim_ = 0;
  std::string fingerprint_;
  ModelLayout layout_;
  std::vector<Real> values_;
};

using ModelWeights = BasicModelWeights<float>;
using ModelWeights64 = BasicModelWeights<double>;

/// Uniform init in [-sqrt(1/fan_in), +sqrt(1/fan_in)] per block, drawn in
/// layout order from Rng(hp.seed).
template <typename Real>
BasicModelWeights<Real> init_weights(const HyperParams& hp, std::size_t embedding_dim,
                                     std::string fingerprint = {});

template <typename Real>
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
template <typename Real>
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class CnnBranch { kQuery, kAnswers };

template <typename Real>
struct CnnTrace {
  Matrix<Real> input;                    // rows actually convolved
  std::vector<std::size_t> windows;      // per width: number of window positions
  std::vector<std::vector<std::size_t>> argmax;  // per width, per filter
  Vector<Real> pooled_pre;               // max over time before ReLU, per feature
  Vector<Real> features;                 // ReLU of pooled_pre
  Vector<Real> fc_pre;
  Vector<Real> output;
};

template <typename Real>
struct LstmDirectionTrace {
  // One row per processed step, in processing order.
  Matrix<Real> input, gate_i, gate_f, gate_g, gate_o, cell, cell_tanh, hidden;
};

template <typename Real>
struct BiLstmTrace {
  std::size_t length = 0;
  LstmDirectionTrace<Real> forward;
  LstmDirectionTrace<Real> backward;
  Vector<Real> output;  // mean over steps of [h_forward; h_backward]

  /// Concatenated hidden state at original position `t`.
  Vector<Real> step_state(std::size_t t) const;
};

template <typename Real>
struct HeadTrace {
  Vector<Real> input;
  Vector<Real> hidden_pre;
  Vector<Real> hidden;
  Real logit = 0;
  Real probability = 0;  // clamped sigmoid
};

/// Embedded inputs of one (query, question, answers) triplet.
struct TripletInput {
  SequenceMatrix query;
  SequenceMatrix question;
  SequenceMatrix answers;
  int cq_id = 0;
};

template <typename Real>
struct ForwardTrace {
  CnnTrace<Real> query;
  BiLstmTrace<Real> question;
  CnnTrace<Real> answers;
  HeadTrace<Real> head;
  Real probability() const { return head.probability; }
};

/// Conv (valid, per width) -> ReLU -> max over time -> concat -> FC -> ReLU.
///
/// Windows cover the first true_length rows; a sequence shorter than a
/// filter uses the single zero-padded window at position 0.
template <typename Real>
Vector<Real> cnn_branch_forward(const BasicModelWeights<Real>& weights, CnnBranch branch,
                                const SequenceMatrix& seq, CnnTrace<Real>* trace = nullptr);

template <typename Real>
void cnn_branch_backward(const BasicModelWeights<Real>& weights, CnnBranch branch,
                         const CnnTrace<Real>& trace, const Vector<Real>& d_output,
                         BasicModelWeights<Real>& grads);

/// Forward and backward LSTM over the first true_length rows; the output is
/// the mean of the per-step concatenated hidden states.
template <typename Real>
Vector<Real> bilstm_branch_forward(const BasicModelWeights<Real>& weights,
                                   const SequenceMatrix& seq, BiLstmTrace<Real>* trace = nullptr);

template <typename Real>
void bilstm_branch_backward(const BasicModelWeights<Real>& weights, const BiLstmTrace<Real>& trace,
                            const Vector<Real>& d_output, BasicModelWeights<Real>& grads);

/// Dense + ReLU, output unit, clamped sigmoid. Fills `trace` when given.
template <typename Real>
Real head_forward(const BasicModelWeights<Real>& weights, const Vector<Real>& input,
                  HeadTrace<Real>* trace = nullptr);

/// Accumulates head parameter gradients for upstream d(loss)/d(logit) and
/// returns d(loss)/d(input).
template <typename Real>
Vector<Real> head_backward(const BasicModelWeights<Real>& weights, const HeadTrace<Real>& trace,
                           Real d_logit, BasicModelWeights<Real>& grads);

/// One-hot encoding of a question id, used by the query-only variant.
template <typename Real>
Vector<Real> question_one_hot(int cq_id);

/// Concatenates the branch encodings in head order.
template <typename Real>
Vector<Real> head_input(const HyperParams& hp, const Vector<Real>& query_code,
                        const Vector<Real>& question_code, const Vector<Real>& answer_code,
                        int cq_id);

template <typename Real>
ForwardTrace<Real> forward(const BasicModelWeights<Real>& weights, const TripletInput& input);

/// Gradients of bce_loss(forward(...), label). d(loss)/d(logit) is taken as
/// sigmoid(logit) - label, which equals the exact derivative wherever the
/// probability clamp is inactive.
template <typename Real>
void backward(const BasicModelWeights<Real>& weights, const ForwardTrace<Real>& trace, int label,
              BasicModelWeights<Real>& grads);

/// Same as above with an explicit upstream d(loss)/d(logit).
template <typename Real>
void backward_from_logit(const BasicModelWeights<Real>& weights, const ForwardTrace<Real>& trace,
                         Real d_logit, BasicModelWeights<Real>& grads);

/// -[y ln p + (1 - y) ln(1 - p)]
double bce_loss(double probability, int label);

double sigmoid(double z);
/// Sigmoid clamped to [eps, 1 - eps].
double clamped_sigmoid(double z, double eps);

/// Throws when `table` is not the embedding file the weights were trained on.
void check_fingerprint(const std::string& expected, const EmbeddingTable& table);

TripletInput embed_triplet(const HyperParams& hp, const EmbeddingTable& table,
                           const Tokens& query, const ClarificationQuestion& question);

/// Probability that `question` applies to `query`.
template <typename Real>
Real forward_probability(const BasicModelWeights<Real>& weights, const EmbeddingTable& table,
                         const Tokens& query, const ClarificationQuestion& question);

/// Scores all catalog questions for one query. The question-side encodings
/// depend only on the weights, so they are computed once at construction.
template <typename Real>
class Predictor {
 public:
  Predictor(const BasicModelWeights<Real>& weights, const EmbeddingTable& table,
            const Catalog& catalog);

  ScoreVector predict(const Tokens& query) const;
  /// Scores from an already embedded query.
  ScoreVector predict(const SequenceMatrix& query) const;

 private:
  const BasicModelWeights<Real>& weights_;
  const EmbeddingTable& table_;
  std::vector<Vector<Real>> question_codes_;
  std::vector<Vector<Real>> answer_codes_;
};

template <typename Real>
ScoreVector predict_scores(const BasicModelWeights<Real>& weights, const EmbeddingTable& table,
                           const Catalog& catalog, const Tokens& query);

/// Standard Adam with bias correction.
template <typename Real>
class AdamOptimizer {
 public:
  AdamOptimizer(double learning_rate, double beta1, double beta2, double eps,
                std::size_t parameter_count);
  explicit AdamOptimizer(const HyperParams& hp, std::size_t parameter_count)
      : AdamOptimizer(hp.learning_rate, hp.adam_beta1, hp.adam_beta2, hp.adam_eps,
                      parameter_count) {}

  /// Throws Error naming the first block that holds a non-finite gradient;
  /// weights are untouched in that case.
  void step(BasicModelWeights<Real>& weights, const BasicModelWeights<Real>& grads);
  void step(std::span<Real> params, std::span<const Real> grads);

  std::uint64_t timestep() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

/// Model file: "QQSEMDL1", one line of JSON header, little-endian float32
/// parameters in layout order.
class ModelFormatError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kModelFormatVersion = 1;

std::string serialize_model(const ModelWeights& weights);
ModelWeights deserialize_model(std::string_view bytes);
void save_model(const ModelWeights& weights, const std::filesystem::path& path);
ModelWeights load_model(const std::filesystem::path& path);

}  // namespace qqse

#endif  // QQSE_MODEL_H_
