#include "qqse/model.h"

#include <algorithm>
#include <cmath>

namespace qqse {

namespace {

template <typename Real>
using ConstMap = Eigen::Map<const Matrix<Real>>;
template <typename Real>
using MutMap = Eigen::Map<Matrix<Real>>;
template <typename Real>
using ConstVecMap = Eigen::Map<const Vector<Real>>;
template <typename Real>
using MutVecMap = Eigen::Map<Vector<Real>>;

template <typename Real>
ConstMap<Real> matrix_block(const BasicModelWeights<Real>& w, std::size_t index) {
  const auto& b = w.layout().blocks[index];
  return ConstMap<Real>(w.block(index).data(), static_cast<Eigen::Index>(b.shape[0]),
                        static_cast<Eigen::Index>(b.shape[1]));
}

template <typename Real>
MutMap<Real> matrix_block(BasicModelWeights<Real>& w, std::size_t index) {
  const auto& b = w.layout().blocks[index];
  return MutMap<Real>(w.block(index).data(), static_cast<Eigen::Index>(b.shape[0]),
                      static_cast<Eigen::Index>(b.shape[1]));
}

template <typename Real>
ConstVecMap<Real> vector_block(const BasicModelWeights<Real>& w, std::size_t index) {
  auto s = w.block(index);
  return ConstVecMap<Real>(s.data(), static_cast<Eigen::Index>(s.size()));
}

template <typename Real>
MutVecMap<Real> vector_block(BasicModelWeights<Real>& w, std::size_t index) {
  auto s = w.block(index);
  return MutVecMap<Real>(s.data(), static_cast<Eigen::Index>(s.size()));
}

template <typename Real>
Real sigmoid_r(Real z) {
  if (z >= Real(0)) return Real(1) / (Real(1) + std::exp(-z));
  const Real e = std::exp(z);
  return e / (Real(1) + e);
}

template <typename Real>
Vector<Real> relu(const Vector<Real>& v) {
  return v.cwiseMax(Real(0));
}

/// First `rows` rows of `seq` converted to Real.
template <typename Real>
Matrix<Real> rows_as(const SequenceMatrix& seq, std::size_t rows) {
  Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
      seq.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(seq.dim));
  return m.template cast<Real>();
}

const CnnBlocks& cnn_blocks(const ModelLayout& layout, CnnBranch branch) {
  return branch == CnnBranch::kQuery ? layout.query_cnn : layout.answer_cnn;
}

void add_block(ModelLayout& layout, std::string name, std::vector<std::size_t> shape) {
  ParamBlock b;
  b.name = std::move(name);
  b.shape = std::move(shape);
  b.size = 1;
  for (auto s : b.shape) b.size *= s;
  b.offset = layout.total;
  layout.total += b.size;
  layout.blocks.push_back(std::move(b));
}

CnnBlocks add_cnn(ModelLayout& layout, const std::string& prefix, const HyperParams& hp,
                  std::size_t dim) {
  CnnBlocks c;
  for (auto w : hp.cnn_filter_widths) {
    c.kernels.push_back(layout.blocks.size());
    add_block(layout, prefix + ".conv" + std::to_string(w) + ".kernel",
              {hp.cnn_filters_per_width, w * dim});
    c.biases.push_back(layout.blocks.size());
    add_block(layout, prefix + ".conv" + std::to_string(w) + ".bias", {hp.cnn_filters_per_width});
  }
  c.fc_weight = layout.blocks.size();
  add_block(layout, prefix + ".fc.weight", {hp.cnn_fc_out, hp.cnn_features()});
  c.fc_bias = layout.blocks.size();
  add_block(layout, prefix + ".fc.bias", {hp.cnn_fc_out});
  return c;
}

LstmBlocks add_lstm(ModelLayout& layout, const std::string& prefix, const HyperParams& hp,
                    std::size_t dim) {
  LstmBlocks l;
  const std::size_t h = hp.lstm_hidden;
  l.input_weight = layout.blocks.size();
  add_block(layout, prefix + ".input_weight", {4 * h, dim});
  l.recurrent_weight = layout.blocks.size();
  add_block(layout, prefix + ".recurrent_weight", {4 * h, h});
  l.bias = layout.blocks.size();
  add_block(layout, prefix + ".bias", {4 * h});
  return l;
}

/// Fan-in used for the uniform init bound of each block.
std::vector<std::size_t> fan_ins(const ModelLayout& layout, const HyperParams& hp,
                                 std::size_t dim) {
  std::vector<std::size_t> fan(layout.blocks.size(), 1);
  auto cnn = [&](const CnnBlocks& c) {
    for (std::size_t k = 0; k < c.kernels.size(); ++k) {
      fan[c.kernels[k]] = hp.cnn_filter_widths[k] * dim;
      fan[c.biases[k]] = hp.cnn_filter_widths[k] * dim;
    }
    fan[c.fc_weight] = fan[c.fc_bias] = hp.cnn_features();
  };
  auto lstm = [&](const LstmBlocks& l) {
    fan[l.input_weight] = fan[l.recurrent_weight] = fan[l.bias] = dim + hp.lstm_hidden;
  };
  cnn(layout.query_cnn);
  if (!hp.query_only) {
    lstm(layout.lstm_forward);
    lstm(layout.lstm_backward);
    cnn(layout.answer_cnn);
  }
  fan[layout.head_weight] = fan[layout.head_bias] = hp.head_input_width();
  fan[layout.output_weight] = fan[layout.output_bias] = hp.head_hidden;
  return fan;
}

template <typename Real>
void run_lstm_direction(const BasicModelWeights<Real>& weights, const LstmBlocks& blocks,
                        Matrix<Real> input, LstmDirectionTrace<Real>& tr) {
  const auto h = static_cast<Eigen::Index>(weights.hyperparams().lstm_hidden);
  const Eigen::Index steps = input.rows();
  auto w_ih = matrix_block(weights, blocks.input_weight);
  auto w_hh = matrix_block(weights, blocks.recurrent_weight);
  auto bias = vector_block(weights, blocks.bias);

  Matrix<Real> pre = input * w_ih.transpose();
  pre.rowwise() += bias.transpose();

  tr.input = std::move(input);
  for (auto* m : {&tr.gate_i, &tr.gate_f, &tr.gate_g, &tr.gate_o, &tr.cell, &tr.cell_tanh,
                  &tr.hidden}) {
    m->resize(steps, h);
  }
  Vector<Real> h_prev = Vector<Real>::Zero(h);
  Vector<Real> c_prev = Vector<Real>::Zero(h);
  for (Eigen::Index t = 0; t < steps; ++t) {
    Vector<Real> a = pre.row(t).transpose() + w_hh * h_prev;
    for (Eigen::Index j = 0; j < h; ++j) {
      const Real gi = sigmoid_r(a(j));
      const Real gf = sigmoid_r(a(h + j));
      const Real gg = std::tanh(a(2 * h + j));
      const Real go = sigmoid_r(a(3 * h + j));
      const Real c = gf * c_prev(j) + gi * gg;
      const Real ct = std::tanh(c);
      tr.gate_i(t, j) = gi;
      tr.gate_f(t, j) = gf;
      tr.gate_g(t, j) = gg;
      tr.gate_o(t, j) = go;
      tr.cell(t, j) = c;
      tr.cell_tanh(t, j) = ct;
      tr.hidden(t, j) = go * ct;
    }
    h_prev = tr.hidden.row(t).transpose();
    c_prev = tr.cell.row(t).transpose();
  }
}

/// BPTT for one direction, with d(loss)/d(h_t) = `d_hidden` at every step.
template <typename Real>
void backprop_lstm_direction(const BasicModelWeights<Real>& weights, const LstmBlocks& blocks,
                             const LstmDirectionTrace<Real>& tr, const Vector<Real>& d_hidden,
                             BasicModelWeights<Real>& grads) {
  const auto h = static_cast<Eigen::Index>(weights.hyperparams().lstm_hidden);
  const Eigen::Index steps = tr.hidden.rows();
  auto w_hh = matrix_block(weights, blocks.recurrent_weight);

  Matrix<Real> d_pre(steps, 4 * h);
  Vector<Real> dh_next = Vector<Real>::Zero(h);
  Vector<Real> dc_next = Vector<Real>::Zero(h);
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    Vector<Real> dh = d_hidden + dh_next;
    for (Eigen::Index j = 0; j < h; ++j) {
      const Real gi = tr.gate_i(t, j), gf = tr.gate_f(t, j), gg = tr.gate_g(t, j),
                 go = tr.gate_o(t, j), ct = tr.cell_tanh(t, j);
      const Real c_prev = t > 0 ? tr.cell(t - 1, j) : Real(0);
      const Real d_o = dh(j) * ct;
      const Real dc = dh(j) * go * (Real(1) - ct * ct) + dc_next(j);
      d_pre(t, j) = dc * gg * gi * (Real(1) - gi);
      d_pre(t, h + j) = dc * c_prev * gf * (Real(1) - gf);
      d_pre(t, 2 * h + j) = dc * gi * (Real(1) - gg * gg);
      d_pre(t, 3 * h + j) = d_o * go * (Real(1) - go);
      dc_next(j) = dc * gf;
    }
    dh_next = w_hh.transpose() * d_pre.row(t).transpose();
  }

  auto g_ih = matrix_block(grads, blocks.input_weight);
  auto g_hh = matrix_block(grads, blocks.recurrent_weight);
  auto g_b = vector_block(grads, blocks.bias);
  g_ih.noalias() += d_pre.transpose() * tr.input;
  if (steps > 1) {
    g_hh.noalias() += d_pre.bottomRows(steps - 1).transpose() * tr.hidden.topRows(steps - 1);
  }
  g_b += d_pre.colwise().sum().transpose();
}

}  // namespace

void HyperParams::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw Error(std::string("hyperparams: ") + name + " must be positive");
  };
  positive(max_len_query, "max_len_query");
  positive(max_len_cq, "max_len_cq");
  positive(max_len_ans, "max_len_ans");
  positive(cnn_filters_per_width, "cnn_filters_per_width");
  positive(cnn_fc_out, "cnn_fc_out");
  positive(lstm_hidden, "lstm_hidden");
  positive(head_hidden, "head_hidden");
  positive(batch_size, "batch_size");
  positive(max_epochs, "max_epochs");
  if (cnn_filter_widths.empty()) throw Error("hyperparams: cnn_filter_widths is empty");
  for (auto w : cnn_filter_widths) {
    positive(w, "cnn filter width");
    if (w > max_len_query || w > max_len_ans) {
      throw Error("hyperparams: filter width " + std::to_string(w) +
                  " exceeds a CNN branch max_len");
    }
  }
  if (!(learning_rate > 0)) throw Error("hyperparams: learning_rate must be positive");
  if (!(probability_clamp_eps > 0 && probability_clamp_eps < 0.5)) {
    throw Error("hyperparams: probability_clamp_eps must be in (0, 0.5)");
  }
  if (!(validation_fraction >= 0 && validation_fraction < 1)) {
    throw Error("hyperparams: validation_fraction must be in [0, 1)");
  }
}

ModelLayout ModelLayout::build(const HyperParams& hp, std::size_t dim) {
  hp.validate();
  if (dim == 0) throw Error("model: embedding dimension must be positive");
  ModelLayout layout;
  layout.query_cnn = add_cnn(layout, "query_cnn", hp, dim);
  if (!hp.query_only) {
    layout.lstm_forward = add_lstm(layout, "question_lstm.forward", hp, dim);
    layout.lstm_backward = add_lstm(layout, "question_lstm.backward", hp, dim);
    layout.answer_cnn = add_cnn(layout, "answer_cnn", hp, dim);
  }
  layout.head_weight = layout.blocks.size();
  add_block(layout, "head.weight", {hp.head_hidden, hp.head_input_width()});
  layout.head_bias = layout.blocks.size();
  add_block(layout, "head.bias", {hp.head_hidden});
  layout.output_weight = layout.blocks.size();
  add_block(layout, "output.weight", {1, hp.head_hidden});
  layout.output_bias = layout.blocks.size();
  add_block(layout, "output.bias", {1});
  return layout;
}

template <typename Real>
BasicModelWeights<Real>::BasicModelWeights(HyperParams hp, std::size_t embedding_dim,
                                           std::string fingerprint)
    : hp_(std::move(hp)),
      dim_(embedding_dim),
      fingerprint_(std::move(fingerprint)),
      layout_(ModelLayout::build(hp_, embedding_dim)),
      values_(layout_.total, Real(0)) {}

template <typename Real>
std::span<Real> BasicModelWeights<Real>::block(std::size_t index) {
  const auto& b = layout_.blocks.at(index);
  return {values_.data() + b.offset, b.size};
}

template <typename Real>
std::span<const Real> BasicModelWeights<Real>::block(std::size_t index) const {
  const auto& b = layout_.blocks.at(index);
  return {values_.data() + b.offset, b.size};
}

template <typename Real>
BasicModelWeights<Real> BasicModelWeights<Real>::zeros_like() const {
  BasicModelWeights out = *this;
  out.set_zero();
  return out;
}

template <typename Real>
void BasicModelWeights<Real>::set_zero() {
  std::fill(values_.begin(), values_.end(), Real(0));
}

template <typename Real>
BasicModelWeights<Real> init_weights(const HyperParams& hp, std::size_t embedding_dim,
                                     std::string fingerprint) {
  BasicModelWeights<Real> w(hp, embedding_dim, std::move(fingerprint));
  const auto fan = fan_ins(w.layout(), hp, embedding_dim);
  Rng rng(hp.seed);
  for (std::size_t b = 0; b < w.layout().blocks.size(); ++b) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fan[b]));
    for (Real& x : w.block(b)) x = static_cast<Real>(rng.uniform(-bound, bound));
  }
  return w;
}

template <typename Real>
Vector<Real> cnn_branch_forward(const BasicModelWeights<Real>& weights, CnnBranch branch,
                                const SequenceMatrix& seq, CnnTrace<Real>* trace) {
  const HyperParams& hp = weights.hyperparams();
  const CnnBlocks& blocks = cnn_blocks(weights.layout(), branch);
  if (hp.query_only && branch == CnnBranch::kAnswers) {
    throw Error("cnn_branch_forward: the query-only model has no answers branch");
  }
  if (seq.dim != weights.embedding_dim()) {
    throw Error("cnn_branch_forward: sequence dimension " + std::to_string(seq.dim) +
                " does not match model dimension " + std::to_string(weights.embedding_dim()));
  }
  const std::size_t max_width =
      *std::max_element(hp.cnn_filter_widths.begin(), hp.cnn_filter_widths.end());
  if (seq.max_len < max_width) {
    throw Error("cnn_branch_forward: sequence of " + std::to_string(seq.max_len) +
                " rows is shorter than filter width " + std::to_string(max_width));
  }

  CnnTrace<Real> local;
  CnnTrace<Real>& tr = trace ? *trace : local;
  const std::size_t dim = seq.dim;
  const std::size_t filters = hp.cnn_filters_per_width;
  tr.input = rows_as<Real>(seq, std::max(seq.true_length, max_width));
  tr.windows.clear();
  tr.argmax.assign(hp.cnn_filter_widths.size(), {});
  tr.pooled_pre.resize(static_cast<Eigen::Index>(hp.cnn_features()));

  for (std::size_t k = 0; k < hp.cnn_filter_widths.size(); ++k) {
    const std::size_t width = hp.cnn_filter_widths[k];
    const std::size_t positions = seq.true_length >= width ? seq.true_length - width + 1 : 1;
    tr.windows.push_back(positions);
    // Window p is the contiguous run of rows p .. p + width - 1.
    Eigen::Map<const Matrix<Real>, 0, Eigen::OuterStride<>> windows(
        tr.input.data(), static_cast<Eigen::Index>(positions),
        static_cast<Eigen::Index>(width * dim), Eigen::OuterStride<>(static_cast<Eigen::Index>(dim)));
    auto kernel = matrix_block(weights, blocks.kernels[k]);
    auto bias = vector_block(weights, blocks.biases[k]);
    Matrix<Real> z = windows * kernel.transpose();
    z.rowwise() += bias.transpose();

    auto& arg = tr.argmax[k];
    arg.assign(filters, 0);
    for (std::size_t f = 0; f < filters; ++f) {
      Eigen::Index best = 0;
      z.col(static_cast<Eigen::Index>(f)).maxCoeff(&best);
      arg[f] = static_cast<std::size_t>(best);
      tr.pooled_pre(static_cast<Eigen::Index>(k * filters + f)) =
          z(best, static_cast<Eigen::Index>(f));
    }
  }
  tr.features = relu(tr.pooled_pre);
  tr.fc_pre = matrix_block(weights, blocks.fc_weight) * tr.features;
  tr.fc_pre += vector_block(weights, blocks.fc_bias);
  tr.output = relu(tr.fc_pre);
  return tr.output;
}

template <typename Real>
void cnn_branch_backward(const BasicModelWeights<Real>& weights, CnnBranch branch,
                         const CnnTrace<Real>& tr, const Vector<Real>& d_output,
                         BasicModelWeights<Real>& grads) {
  const HyperParams& hp = weights.hyperparams();
  const CnnBlocks& blocks = cnn_blocks(weights.layout(), branch);
  const std::size_t dim = weights.embedding_dim();
  const std::size_t filters = hp.cnn_filters_per_width;

  Vector<Real> d_fc = d_output.cwiseProduct(
      (tr.fc_pre.array() > Real(0)).template cast<Real>().matrix());
  matrix_block(grads, blocks.fc_weight).noalias() += d_fc * tr.features.transpose();
  vector_block(grads, blocks.fc_bias) += d_fc;
  Vector<Real> d_features = matrix_block(weights, blocks.fc_weight).transpose() * d_fc;

  for (std::size_t k = 0; k < hp.cnn_filter_widths.size(); ++k) {
    const std::size_t width = hp.cnn_filter_widths[k];
    auto g_kernel = matrix_block(grads, blocks.kernels[k]);
    auto g_bias = vector_block(grads, blocks.biases[k]);
    for (std::size_t f = 0; f < filters; ++f) {
      const auto feature = static_cast<Eigen::Index>(k * filters + f);
      if (!(tr.pooled_pre(feature) > Real(0))) continue;
      const Real g = d_features(feature);
      const Real* window = tr.input.data() + tr.argmax[k][f] * dim;
      for (std::size_t i = 0; i < width * dim; ++i) {
        g_kernel(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(i)) += g * window[i];
      }
      g_bias(static_cast<Eigen::Index>(f)) += g;
    }
  }
}

template <typename Real>
Vector<Real> BiLstmTrace<Real>::step_state(std::size_t t) const {
  const auto h = forward.hidden.cols();
  Vector<Real> out(2 * h);
  out.head(h) = forward.hidden.row(static_cast<Eigen::Index>(t)).transpose();
  out.tail(h) = backward.hidden.row(static_cast<Eigen::Index>(length - 1 - t)).transpose();
  return out;
}

template <typename Real>
Vector<Real> bilstm_branch_forward(const BasicModelWeights<Real>& weights,
                                   const SequenceMatrix& seq, BiLstmTrace<Real>* trace) {
  if (weights.hyperparams().query_only) {
    throw Error("bilstm_branch_forward: the query-only model has no question branch");
  }
  if (seq.true_length == 0) throw Error("bilstm_branch_forward: zero-length sequence");
  if (seq.dim != weights.embedding_dim()) {
    throw Error("bilstm_branch_forward: sequence dimension does not match the model");
  }
  BiLstmTrace<Real> local;
  BiLstmTrace<Real>& tr = trace ? *trace : local;
  const auto steps = static_cast<Eigen::Index>(seq.true_length);
  tr.length = seq.true_length;

  Matrix<Real> input = rows_as<Real>(seq, seq.true_length);
  Matrix<Real> reversed = input.colwise().reverse();
  run_lstm_direction(weights, weights.layout().lstm_forward, std::move(input), tr.forward);
  run_lstm_direction(weights, weights.layout().lstm_backward, std::move(reversed), tr.backward);

  const auto h = static_cast<Eigen::Index>(weights.hyperparams().lstm_hidden);
  tr.output.resize(2 * h);
  tr.output.head(h) = tr.forward.hidden.colwise().sum().transpose() / Real(steps);
  tr.output.tail(h) = tr.backward.hidden.colwise().sum().transpose() / Real(steps);
  return tr.output;
}

template <typename Real>
void bilstm_branch_backward(const BasicModelWeights<Real>& weights, const BiLstmTrace<Real>& tr,
                            const Vector<Real>& d_output, BasicModelWeights<Real>& grads) {
  const auto h = static_cast<Eigen::Index>(weights.hyperparams().lstm_hidden);
  const Real inv_steps = Real(1) / Real(tr.length);
  Vector<Real> d_fwd = d_output.head(h) * inv_steps;
  Vector<Real> d_bwd = d_output.tail(h) * inv_steps;
  backprop_lstm_direction(weights, weights.layout().lstm_forward, tr.forward, d_fwd, grads);
  backprop_lstm_direction(weights, weights.layout().lstm_backward, tr.backward, d_bwd, grads);
}

template <typename Real>
Real head_forward(const BasicModelWeights<Real>& weights, const Vector<Real>& input,
                  HeadTrace<Real>* trace) {
  const auto& layout = weights.layout();
  if (static_cast<std::size_t>(input.size()) != weights.hyperparams().head_input_width()) {
    throw Error("head_forward: input width mismatch");
  }
  HeadTrace<Real> local;
  HeadTrace<Real>& tr = trace ? *trace : local;
  tr.input = input;
  tr.hidden_pre = matrix_block(weights, layout.head_weight) * input;
  tr.hidden_pre += vector_block(weights, layout.head_bias);
  tr.hidden = relu(tr.hidden_pre);
  tr.logit = vector_block(weights, layout.output_weight).dot(tr.hidden) +
             weights.block(layout.output_bias)[0];
  const Real eps = static_cast<Real>(weights.hyperparams().probability_clamp_eps);
  tr.probability = std::clamp(sigmoid_r(tr.logit), eps, Real(1) - eps);
  return tr.probability;
}

template <typename Real>
Vector<Real> head_backward(const BasicModelWeights<Real>& weights, const HeadTrace<Real>& tr,
                           Real d_logit, BasicModelWeights<Real>& grads) {
  const auto& layout = weights.layout();
  vector_block(grads, layout.output_weight) += d_logit * tr.hidden;
  grads.block(layout.output_bias)[0] += d_logit;
  Vector<Real> d_hidden = d_logit * vector_block(weights, layout.output_weight);
  d_hidden = d_hidden.cwiseProduct((tr.hidden_pre.array() > Real(0)).template cast<Real>().matrix());
  matrix_block(grads, layout.head_weight).noalias() += d_hidden * tr.input.transpose();
  vector_block(grads, layout.head_bias) += d_hidden;
  return matrix_block(weights, layout.head_weight).transpose() * d_hidden;
}

template <typename Real>
Vector<Real> question_one_hot(int cq_id) {
  if (cq_id < 1 || cq_id > kNumQuestions) throw Error("question_one_hot: id out of range");
  Vector<Real> v = Vector<Real>::Zero(kNumQuestions);
  v(cq_id - 1) = Real(1);
  return v;
}

template <typename Real>
Vector<Real> head_input(const HyperParams& hp, const Vector<Real>& query_code,
                        const Vector<Real>& question_code, const Vector<Real>& answer_code,
                        int cq_id) {
  Vector<Real> x(static_cast<Eigen::Index>(hp.head_input_width()));
  if (hp.query_only) {
    x << query_code, question_one_hot<Real>(cq_id);
  } else {
    x << query_code, question_code, answer_code;
  }
  return x;
}

template <typename Real>
ForwardTrace<Real> forward(const BasicModelWeights<Real>& weights, const TripletInput& input) {
  const HyperParams& hp = weights.hyperparams();
  ForwardTrace<Real> tr;
  Vector<Real> q = cnn_branch_forward(weights, CnnBranch::kQuery, input.query, &tr.query);
  Vector<Real> cq, ans;
  if (!hp.query_only) {
    cq = bilstm_branch_forward(weights, input.question, &tr.question);
    ans = cnn_branch_forward(weights, CnnBranch::kAnswers, input.answers, &tr.answers);
  }
  head_forward(weights, head_input<Real>(hp, q, cq, ans, input.cq_id), &tr.head);
  return tr;
}

template <typename Real>
void backward_from_logit(const BasicModelWeights<Real>& weights, const ForwardTrace<Real>& tr,
                         Real d_logit, BasicModelWeights<Real>& grads) {
  const HyperParams& hp = weights.hyperparams();
  const auto fc = static_cast<Eigen::Index>(hp.cnn_fc_out);
  const auto lstm = static_cast<Eigen::Index>(2 * hp.lstm_hidden);
  Vector<Real> d_input = head_backward(weights, tr.head, d_logit, grads);
  cnn_branch_backward(weights, CnnBranch::kQuery, tr.query, Vector<Real>(d_input.head(fc)), grads);
  if (!hp.query_only) {
    bilstm_branch_backward(weights, tr.question, Vector<Real>(d_input.segment(fc, lstm)), grads);
    cnn_branch_backward(weights, CnnBranch::kAnswers, tr.answers,
                        Vector<Real>(d_input.tail(fc)), grads);
  }
}

template <typename Real>
void backward(const BasicModelWeights<Real>& weights, const ForwardTrace<Real>& tr, int label,
              BasicModelWeights<Real>& grads) {
  const Real d_logit = sigmoid_r(tr.head.logit) - static_cast<Real>(label);
  backward_from_logit(weights, tr, d_logit, grads);
}

double sigmoid(double z) { return sigmoid_r(z); }

double clamped_sigmoid(double z, double eps) { return std::clamp(sigmoid_r(z), eps, 1.0 - eps); }

double bce_loss(double p, int label) {
  return label == 1 ? -std::log(p) : -std::log1p(-p);
}

void check_fingerprint(const std::string& expected, const EmbeddingTable& table) {
  if (expected != table.fingerprint()) {
    throw Error("embedding fingerprint mismatch: model expects " + expected + ", table is " +
                table.fingerprint());
  }
}

TripletInput embed_triplet(const HyperParams& hp, const EmbeddingTable& table,
                           const Tokens& query, const ClarificationQuestion& question) {
  TripletInput in;
  in.query = embed_sequence(table, query, hp.max_len_query);
  in.question = embed_sequence(table, question_tokens(question), hp.max_len_cq);
  in.answers = embed_sequence(table, answer_tokens(question), hp.max_len_ans);
  in.cq_id = question.id;
  return in;
}

template <typename Real>
Real forward_probability(const BasicModelWeights<Real>& weights, const EmbeddingTable& table,
                         const Tokens& query, const ClarificationQuestion& question) {
  check_fingerprint(weights.fingerprint(), table);
  return forward(weights, embed_triplet(weights.hyperparams(), table, query, question))
      .probability();
}

template <typename Real>
Predictor<Real>::Predictor(const BasicModelWeights<Real>& weights, const EmbeddingTable& table,
                           const Catalog& catalog)
    : weights_(weights), table_(table) {
  check_fingerprint(weights.fingerprint(), table);
  const HyperParams& hp = weights.hyperparams();
  for (const auto& q : catalog) {
    if (hp.query_only) {
      question_codes_.push_back(question_one_hot<Real>(q.id));
      answer_codes_.emplace_back();
      continue;
    }
    question_codes_.push_back(
        bilstm_branch_forward(weights, embed_sequence(table, question_tokens(q), hp.max_len_cq)));
    answer_codes_.push_back(cnn_branch_forward(
        weights, CnnBranch::kAnswers, embed_sequence(table, answer_tokens(q), hp.max_len_ans)));
  }
}

template <typename Real>
ScoreVector Predictor<Real>::predict(const Tokens& query) const {
  return predict(embed_sequence(table_, query, weights_.hyperparams().max_len_query));
}

template <typename Real>
ScoreVector Predictor<Real>::predict(const SequenceMatrix& query) const {
  const HyperParams& hp = weights_.hyperparams();
  Vector<Real> q = cnn_branch_forward(weights_, CnnBranch::kQuery, query);
  ScoreVector scores{};
  for (int j = 0; j < kNumQuestions; ++j) {
    const auto idx = static_cast<std::size_t>(j);
    Vector<Real> x(static_cast<Eigen::Index>(hp.head_input_width()));
    if (hp.query_only) {
      x << q, question_codes_[idx];
    } else {
      x << q, question_codes_[idx], answer_codes_[idx];
    }
    scores[idx] = static_cast<double>(head_forward(weights_, x));
  }
  return scores;
}

template <typename Real>
ScoreVector predict_scores(const BasicModelWeights<Real>& weights, const EmbeddingTable& table,
                           const Catalog& catalog, const Tokens& query) {
  return Predictor<Real>(weights, table, catalog).predict(query);
}

template <typename Real>
AdamOptimizer<Real>::AdamOptimizer(double learning_rate, double beta1, double beta2, double eps,
                                   std::size_t parameter_count)
    : lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      m_(parameter_count, 0.0),
      v_(parameter_count, 0.0) {}

template <typename Real>
void AdamOptimizer<Real>::step(BasicModelWeights<Real>& weights,
                               const BasicModelWeights<Real>& grads) {
  if (grads.layout() != weights.layout()) throw Error("adam: gradient layout mismatch");
  for (std::size_t b = 0; b < grads.layout().blocks.size(); ++b) {
    for (Real g : grads.block(b)) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw Error("adam: non-finite gradient in block " + grads.layout().blocks[b].name);
      }
    }
  }
  step(weights.values(), grads.values());
}

template <typename Real>
void AdamOptimizer<Real>::step(std::span<Real> params, std::span<const Real> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw Error("adam: parameter count mismatch");
  }
  for (Real g : grads) {
    if (!std::isfinite(static_cast<double>(g))) throw Error("adam: non-finite gradient");
  }
  ++t_;
  const double correction1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double correction2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = static_cast<double>(grads[i]);
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    const double m_hat = m_[i] / correction1;
    const double v_hat = v_[i] / correction2;
    params[i] = static_cast<Real>(static_cast<double>(params[i]) -
                                  lr_ * m_hat / (std::sqrt(v_hat) + eps_));
  }
}

#define QQSE_INSTANTIATE_MODEL(Real)                                                            \
  template class BasicModelWeights<Real>;                                                       \
  template struct BiLstmTrace<Real>;                                                            \
  template class Predictor<Real>;                                                               \
  template class AdamOptimizer<Real>;                                                           \
  template BasicModelWeights<Real> init_weights<Real>(const HyperParams&, std::size_t,          \
                                                      std::string);                             \
  template Vector<Real> cnn_branch_forward<Real>(const BasicModelWeights<Real>&, CnnBranch,     \
                                                 const SequenceMatrix&, CnnTrace<Real>*);       \
  template void cnn_branch_backward<Real>(const BasicModelWeights<Real>&, CnnBranch,            \
                                          const CnnTrace<Real>&, const Vector<Real>&,           \
                                          BasicModelWeights<Real>&);                            \
  template Vector<Real> bilstm_branch_forward<Real>(const BasicModelWeights<Real>&,             \
                                                    const SequenceMatrix&, BiLstmTrace<Real>*); \
  template void bilstm_branch_backward<Real>(const BasicModelWeights<Real>&,                    \
                                             const BiLstmTrace<Real>&, const Vector<Real>&,     \
                                             BasicModelWeights<Real>&);                         \
  template Real head_forward<Real>(const BasicModelWeights<Real>&, const Vector<Real>&,         \
                                   HeadTrace<Real>*);                                           \
  template Vector<Real> head_backward<Real>(const BasicModelWeights<Real>&,                     \
                                            const HeadTrace<Real>&, Real,                       \
                                            BasicModelWeights<Real>&);                          \
  template Vector<Real> question_one_hot<Real>(int);                                            \
  template Vector<Real> head_input<Real>(const HyperParams&, const Vector<Real>&,               \
                                         const Vector<Real>&, const Vector<Real>&, int);        \
  template ForwardTrace<Real> forward<Real>(const BasicModelWeights<Real>&, const TripletInput&); \
  template void backward<Real>(const BasicModelWeights<Real>&, const ForwardTrace<Real>&, int,  \
                               BasicModelWeights<Real>&);                                       \
  template void backward_from_logit<Real>(const BasicModelWeights<Real>&,                       \
                                          const ForwardTrace<Real>&, Real,                      \
                                          BasicModelWeights<Real>&);                            \
  template Real forward_probability<Real>(const BasicModelWeights<Real>&, const EmbeddingTable&, \
                                          const Tokens&, const ClarificationQuestion&);         \
  template ScoreVector predict_scores<Real>(const BasicModelWeights<Real>&,                     \
                                            const EmbeddingTable&, const Catalog&, const Tokens&);

QQSE_INSTANTIATE_MODEL(float)
QQSE_INSTANTIATE_MODEL(double)

#undef QQSE_INSTANTIATE_MODEL

}  // namespace qqse
