#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "gradcheck.h"
#include "helpers.h"
#include "qqse/model.h"
#include "qqse/ranking.h"

namespace qqse {
namespace {

using testing::random_table;
using testing::tiny_hyperparams;

std::vector<std::string> words(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("w" + std::to_string(i));
  return out;
}

std::vector<double> to_std(const Vector<double>& v) { return {v.data(), v.data() + v.size()}; }

void fill_uniform(ModelWeights64& w, std::uint64_t seed, double lo = -1, double hi = 1) {
  Rng rng(seed);
  for (double& x : w.values()) x = rng.uniform(lo, hi);
}

ClarificationQuestion make_question(int id, std::string text, std::vector<std::string> answers) {
  return {id, std::move(text), std::move(answers)};
}

// ---------------------------------------------------------------------------
// Shapes and initialization

TEST(Model, DefaultShapesFollowHyperparameterArithmetic) {
  const HyperParams hp;
  const std::size_t d = 200;
  EXPECT_EQ(hp.head_input_width(), 256u);
  const auto w = init_weights<float>(hp, d);
  std::map<std::string, std::vector<std::size_t>> shapes;
  for (const auto& b : w.layout().blocks) shapes[b.name] = b.shape;
  using S = std::vector<std::size_t>;
  EXPECT_EQ(shapes["query_cnn.conv2.kernel"], (S{64, 400}));
  EXPECT_EQ(shapes["query_cnn.conv3.kernel"], (S{64, 600}));
  EXPECT_EQ(shapes["query_cnn.conv3.bias"], (S{64}));
  EXPECT_EQ(shapes["query_cnn.fc.weight"], (S{64, 128}));
  EXPECT_EQ(shapes["question_lstm.forward.input_weight"], (S{256, 200}));
  EXPECT_EQ(shapes["question_lstm.backward.recurrent_weight"], (S{256, 64}));
  EXPECT_EQ(shapes["question_lstm.backward.bias"], (S{256}));
  EXPECT_EQ(shapes["answer_cnn.fc.bias"], (S{64}));
  EXPECT_EQ(shapes["head.weight"], (S{64, 256}));
  EXPECT_EQ(shapes["output.weight"], (S{1, 64}));
  EXPECT_EQ(shapes["output.bias"], (S{1}));
  EXPECT_EQ(shapes.size(), 22u);

  std::size_t total = 0;
  for (const auto& b : w.layout().blocks) {
    EXPECT_EQ(b.offset, total) << b.name;
    total += b.size;
  }
  EXPECT_EQ(total, w.values().size());
}

TEST(Model, QueryOnlyVariantDropsQuestionBranches) {
  HyperParams hp;
  hp.query_only = true;
  EXPECT_EQ(hp.head_input_width(), 80u);
  const auto w = init_weights<float>(hp, 50);
  for (const auto& b : w.layout().blocks) {
    EXPECT_EQ(b.name.find("question_lstm"), std::string::npos);
    EXPECT_EQ(b.name.find("answer_cnn"), std::string::npos);
  }
  const auto one_hot = question_one_hot<double>(3);
  EXPECT_EQ(one_hot.sum(), 1.0);
  EXPECT_EQ(one_hot(2), 1.0);
  EXPECT_THROW(question_one_hot<double>(0), Error);
}

TEST(Model, InitIsSeededAndBounded) {
  const auto hp = tiny_hyperparams(42);
  const auto a = init_weights<float>(hp, 4);
  const auto b = init_weights<float>(hp, 4);
  EXPECT_EQ(a, b);
  auto other = hp;
  other.seed = 43;
  EXPECT_NE(init_weights<float>(other, 4).values()[0], a.values()[0]);
  EXPECT_FALSE(a == init_weights<float>(other, 4));

  // CNN kernels: fan_in = width * dim.
  const auto& layout = a.layout();
  const double bound1 = std::sqrt(1.0 / 4);
  for (float x : a.block(layout.query_cnn.kernels[0])) EXPECT_LE(std::abs(x), bound1);
  const double bound_lstm = std::sqrt(1.0 / (4 + hp.lstm_hidden));
  for (float x : a.block(layout.lstm_forward.recurrent_weight)) {
    EXPECT_LE(std::abs(x), bound_lstm);
  }
}

TEST(Model, HyperparamsJsonRoundTrip) {
  auto hp = tiny_hyperparams(9);
  hp.learning_rate = 0.003;
  hp.query_only = true;
  EXPECT_EQ(hyperparams_from_json(hyperparams_to_json(hp)), hp);
  EXPECT_EQ(hyperparams_from_json("{}"), HyperParams{});
  EXPECT_THROW(hyperparams_from_json(R"({"lstm_hiden": 3})"), Error);
  EXPECT_THROW(hyperparams_from_json(R"({"lstm_hidden": 0})"), Error);
  EXPECT_THROW(hyperparams_from_json(R"({"max_len_query": 2})"), Error);  // width 3 > 2
}

// ---------------------------------------------------------------------------
// All-zero weights

TEST(Model, ZeroWeightsGiveZeroBranchesAndHalfProbability) {
  const auto hp = tiny_hyperparams();
  const auto table = random_table(words(8), 4, 1);
  const ModelWeights64 w(hp, 4, table.fingerprint());
  const auto cq = make_question(4, "w1 w2 w3", {"w4", "w5 w6"});
  const auto input = embed_triplet(hp, table, {"w0", "w7", "oov"}, cq);

  EXPECT_TRUE(cnn_branch_forward(w, CnnBranch::kQuery, input.query).isZero(0));
  EXPECT_TRUE(cnn_branch_forward(w, CnnBranch::kAnswers, input.answers).isZero(0));
  BiLstmTrace<double> lstm;
  EXPECT_TRUE(bilstm_branch_forward(w, input.question, &lstm).isZero(0));
  // Gates sit at sigmoid(0) = 0.5 and the candidate at tanh(0) = 0.
  EXPECT_TRUE((lstm.forward.gate_i.array() == 0.5).all());
  EXPECT_TRUE((lstm.forward.gate_f.array() == 0.5).all());
  EXPECT_TRUE((lstm.backward.gate_o.array() == 0.5).all());
  EXPECT_TRUE(lstm.forward.cell.isZero(0));

  EXPECT_EQ(forward(w, input).probability(), 0.5);

  const auto wf = w.cast<float>();
  const auto scores = predict_scores(wf, table, testing::shipped_catalog(), {"w0", "w1"});
  for (double s : scores) EXPECT_EQ(s, 0.5);
}

// ---------------------------------------------------------------------------
// CNN branch against explicit loops

/// conv -> ReLU -> max over time -> FC -> ReLU, written with plain loops.
std::vector<double> cnn_loop_oracle(const ModelWeights64& w, const CnnBlocks& blocks,
                                    const SequenceMatrix& seq) {
  const auto& hp = w.hyperparams();
  const std::size_t d = seq.dim;
  std::vector<double> features;
  for (std::size_t k = 0; k < hp.cnn_filter_widths.size(); ++k) {
    const std::size_t width = hp.cnn_filter_widths[k];
    const auto kernel = w.block(blocks.kernels[k]);
    const auto bias = w.block(blocks.biases[k]);
    const std::size_t positions = seq.true_length >= width ? seq.true_length - width + 1 : 1;
    for (std::size_t f = 0; f < hp.cnn_filters_per_width; ++f) {
      double best = -INFINITY;
      for (std::size_t p = 0; p < positions; ++p) {
        double z = bias[f];
        for (std::size_t j = 0; j < width; ++j) {
          for (std::size_t c = 0; c < d; ++c) {
            const double x = p + j < seq.max_len ? seq.values[(p + j) * d + c] : 0.0;
            z += kernel[f * width * d + j * d + c] * x;
          }
        }
        best = std::max(best, std::max(z, 0.0));
      }
      features.push_back(best);
    }
  }
  const auto fc = w.block(blocks.fc_weight);
  const auto fc_b = w.block(blocks.fc_bias);
  std::vector<double> out(hp.cnn_fc_out);
  for (std::size_t o = 0; o < out.size(); ++o) {
    double z = fc_b[o];
    for (std::size_t i = 0; i < features.size(); ++i) z += fc[o * features.size() + i] * features[i];
    out[o] = std::max(z, 0.0);
  }
  return out;
}

TEST(Model, UnitKernelCnnIsMaxOverTimeOfOneCoordinate) {
  HyperParams hp = tiny_hyperparams();
  hp.cnn_filter_widths = {1};
  hp.cnn_filters_per_width = 1;
  hp.cnn_fc_out = 1;
  const std::size_t d = 3;
  ModelWeights64 w(hp, d, "");
  const auto& q = w.layout().query_cnn;
  w.block(q.kernels[0])[1] = 1.0;  // picks coordinate 1
  w.block(q.fc_weight)[0] = 1.0;

  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    SequenceMatrix seq;
    seq.max_len = hp.max_len_query;
    seq.dim = d;
    seq.true_length = 1 + rng.below(seq.max_len);
    seq.values.assign(seq.max_len * d, 0.0f);
    for (std::size_t i = 0; i < seq.true_length * d; ++i) {
      seq.values[i] = static_cast<float>(rng.uniform(-2, 2));
    }
    double expected = 0.0;  // ReLU floor
    for (std::size_t t = 0; t < seq.true_length; ++t) {
      expected = std::max(expected, static_cast<double>(seq.values[t * d + 1]));
    }
    const auto out = cnn_branch_forward(w, CnnBranch::kQuery, seq);
    ASSERT_EQ(out.size(), 1);
    EXPECT_EQ(out(0), expected);
  }
}

TEST(Model, CnnMatchesLoopOracleOnRandomWeights) {
  HyperParams hp = tiny_hyperparams();
  hp.cnn_filter_widths = {1, 2, 3};
  hp.max_len_query = 6;
  hp.max_len_ans = 6;
  const std::size_t d = 4;
  ModelWeights64 w(hp, d, "");
  const auto table = random_table(words(10), d, 8);
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    fill_uniform(w, 100 + trial);
    Tokens t;
    const std::size_t n = 1 + rng.below(8);
    for (std::size_t i = 0; i < n; ++i) t.push_back("w" + std::to_string(rng.below(11)));
    const auto seq = embed_sequence(table, t, hp.max_len_query);
    for (auto branch : {CnnBranch::kQuery, CnnBranch::kAnswers}) {
      const auto& blocks =
          branch == CnnBranch::kQuery ? w.layout().query_cnn : w.layout().answer_cnn;
      const auto got = to_std(cnn_branch_forward(w, branch, seq));
      const auto want = cnn_loop_oracle(w, blocks, seq);
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
    }
  }
}

TEST(Model, CnnIgnoresRowsBeyondTrueLength) {
  const auto hp = tiny_hyperparams();
  ModelWeights64 w(hp, 4, "");
  fill_uniform(w, 5);
  const auto table = random_table(words(6), 4, 2);
  const auto seq = embed_sequence(table, {"w0", "w1", "w2"}, 5);
  auto noisy = seq;
  for (std::size_t i = seq.true_length * 4; i < noisy.values.size(); ++i) noisy.values[i] = 7.5f;
  EXPECT_EQ(to_std(cnn_branch_forward(w, CnnBranch::kQuery, seq)),
            to_std(cnn_branch_forward(w, CnnBranch::kQuery, noisy)));
}

// ---------------------------------------------------------------------------
// BiLSTM branch against an explicit recurrence

struct LoopLstm {
  std::size_t h, d;
  std::vector<double> w_ih, w_hh, b;

  static LoopLstm from(const ModelWeights64& w, const LstmBlocks& blocks) {
    const auto ih = w.block(blocks.input_weight);
    const auto hh = w.block(blocks.recurrent_weight);
    const auto bias = w.block(blocks.bias);
    return {w.hyperparams().lstm_hidden, w.embedding_dim(), {ih.begin(), ih.end()},
            {hh.begin(), hh.end()}, {bias.begin(), bias.end()}};
  }

  std::vector<std::vector<double>> run(const std::vector<std::vector<double>>& xs) const {
    auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    std::vector<double> hs(h, 0.0), cs(h, 0.0);
    std::vector<std::vector<double>> out;
    for (const auto& x : xs) {
      std::vector<double> a(4 * h);
      for (std::size_t r = 0; r < 4 * h; ++r) {
        double z = b[r];
        for (std::size_t c = 0; c < d; ++c) z += w_ih[r * d + c] * x[c];
        for (std::size_t c = 0; c < h; ++c) z += w_hh[r * h + c] * hs[c];
        a[r] = z;
      }
      std::vector<double> next(h);
      for (std::size_t j = 0; j < h; ++j) {
        const double i = sig(a[j]), f = sig(a[h + j]), g = std::tanh(a[2 * h + j]),
                     o = sig(a[3 * h + j]);
        cs[j] = f * cs[j] + i * g;
        next[j] = o * std::tanh(cs[j]);
      }
      hs = next;
      out.push_back(hs);
    }
    return out;
  }
};

std::vector<std::vector<double>> rows_of(const SequenceMatrix& seq) {
  std::vector<std::vector<double>> out;
  for (std::size_t t = 0; t < seq.true_length; ++t) {
    auto r = seq.row(t);
    out.emplace_back(r.begin(), r.end());
  }
  return out;
}

TEST(Model, BiLstmMatchesLoopOracle) {
  const auto hp = tiny_hyperparams();
  const std::size_t d = 4;
  ModelWeights64 w(hp, d, "");
  const auto table = random_table(words(10), d, 4);
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    fill_uniform(w, 300 + trial);
    Tokens t;
    const std::size_t n = 1 + rng.below(hp.max_len_cq);
    for (std::size_t i = 0; i < n; ++i) t.push_back("w" + std::to_string(rng.below(10)));
    const auto seq = embed_sequence(table, t, hp.max_len_cq);

    const auto xs = rows_of(seq);
    auto rev = xs;
    std::reverse(rev.begin(), rev.end());
    const auto fwd = LoopLstm::from(w, w.layout().lstm_forward).run(xs);
    const auto bwd = LoopLstm::from(w, w.layout().lstm_backward).run(rev);

    BiLstmTrace<double> trace;
    const auto out = bilstm_branch_forward(w, seq, &trace);
    const std::size_t h = hp.lstm_hidden;
    for (std::size_t j = 0; j < h; ++j) {
      double mf = 0, mb = 0;
      for (std::size_t s = 0; s < n; ++s) {
        mf += fwd[s][j];
        mb += bwd[s][j];
      }
      EXPECT_NEAR(out(static_cast<Eigen::Index>(j)), mf / n, 1e-12);
      EXPECT_NEAR(out(static_cast<Eigen::Index>(h + j)), mb / n, 1e-12);
    }
    for (std::size_t s = 0; s < n; ++s) {
      const auto state = trace.step_state(s);
      for (std::size_t j = 0; j < h; ++j) {
        EXPECT_NEAR(state(static_cast<Eigen::Index>(j)), fwd[s][j], 1e-12);
        EXPECT_NEAR(state(static_cast<Eigen::Index>(h + j)), bwd[n - 1 - s][j], 1e-12);
      }
    }
  }
}

TEST(Model, BiLstmSingleStepMeanIsThatStep) {
  const auto hp = tiny_hyperparams();
  ModelWeights64 w(hp, 4, "");
  fill_uniform(w, 77);
  const auto table = random_table(words(3), 4, 5);
  BiLstmTrace<double> trace;
  const auto out = bilstm_branch_forward(w, embed_sequence(table, {"w1"}, hp.max_len_cq), &trace);
  EXPECT_EQ(to_std(out), to_std(trace.step_state(0)));
}

TEST(Model, BiLstmReversalSwapsDirections) {
  // With tied direction parameters, reversing the input mirrors the states.
  const auto hp = tiny_hyperparams();
  const std::size_t d = 4;
  ModelWeights64 w(hp, d, "");
  fill_uniform(w, 31);
  const auto& lf = w.layout().lstm_forward;
  const auto& lb = w.layout().lstm_backward;
  for (auto [src, dst] : {std::pair{lf.input_weight, lb.input_weight},
                          std::pair{lf.recurrent_weight, lb.recurrent_weight},
                          std::pair{lf.bias, lb.bias}}) {
    auto s = w.block(src);
    std::copy(s.begin(), s.end(), w.block(dst).begin());
  }
  const auto table = random_table({"a", "b"}, d, 6);
  BiLstmTrace<double> ab, ba;
  bilstm_branch_forward(w, embed_sequence(table, {"a", "b"}, hp.max_len_cq), &ab);
  bilstm_branch_forward(w, embed_sequence(table, {"b", "a"}, hp.max_len_cq), &ba);

  const auto h = static_cast<Eigen::Index>(hp.lstm_hidden);
  auto swapped = [&](const Vector<double>& v) {
    Vector<double> out(2 * h);
    out << v.tail(h), v.head(h);
    return out;
  };
  for (std::size_t t = 0; t < 2; ++t) {
    EXPECT_TRUE(ba.step_state(t).isApprox(swapped(ab.step_state(1 - t)), 1e-14)) << t;
  }
  // Loop oracle for the same two-step example.
  const auto loop = LoopLstm::from(w, lf);
  const auto va = table.find("a"), vb = table.find("b");
  const std::vector<std::vector<double>> xs = {{va.begin(), va.end()}, {vb.begin(), vb.end()}};
  const auto states = loop.run(xs);
  for (Eigen::Index j = 0; j < h; ++j) {
    EXPECT_NEAR(ab.step_state(1)(j), states[1][static_cast<std::size_t>(j)], 1e-14);
  }
}

// ---------------------------------------------------------------------------
// Whole network against a straight-line evaluation

TEST(Model, MinimalNetworkMatchesStraightLineOracle) {
  HyperParams hp;
  hp.max_len_query = 2;
  hp.max_len_cq = 3;
  hp.max_len_ans = 3;
  hp.cnn_filter_widths = {1};
  hp.cnn_filters_per_width = 1;
  hp.cnn_fc_out = 1;
  hp.lstm_hidden = 1;
  hp.head_hidden = 1;

  const auto table = EmbeddingTable::from_entries({{"java", {0.5f, -1.0f}},
                                                   {"mail", {1.5f, 0.25f}},
                                                   {"which", {-0.75f, 2.0f}},
                                                   {"ide", {0.125f, -0.5f}},
                                                   {"eclipse", {1.0f, 1.0f}}});
  const auto cq = make_question(3, "Which IDE?", {"Eclipse"});
  const auto input = embed_triplet(hp, table, {"java", "mail"}, cq);

  ModelWeights64 w(hp, 2, table.fingerprint());
  fill_uniform(w, 2024);
  const auto& L = w.layout();
  // Keep every ReLU in its linear regime so all terms contribute.
  w.block(L.query_cnn.biases[0])[0] = 2.0;
  w.block(L.query_cnn.fc_bias)[0] = 2.0;
  w.block(L.answer_cnn.biases[0])[0] = 2.0;
  w.block(L.answer_cnn.fc_bias)[0] = 2.0;
  w.block(L.head_bias)[0] = 3.0;

  auto p = [&](std::size_t block, std::size_t i = 0) { return w.block(block)[i]; };
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  auto relu = [](double z) { return z > 0 ? z : 0.0; };

  // Query CNN: width-1 filter over ["java", "mail"].
  const auto& qc = L.query_cnn;
  const double q0 = p(qc.kernels[0], 0) * 0.5 + p(qc.kernels[0], 1) * -1.0 + p(qc.biases[0]);
  const double q1 = p(qc.kernels[0], 0) * 1.5 + p(qc.kernels[0], 1) * 0.25 + p(qc.biases[0]);
  const double q_pool = std::max(relu(q0), relu(q1));
  const double q_out = relu(p(qc.fc_weight) * q_pool + p(qc.fc_bias));

  // Question BiLSTM over ["which", "ide"], hidden size 1.
  auto lstm_step = [&](const LstmBlocks& l, double x0, double x1, double& h, double& c) {
    auto gate = [&](std::size_t g) {
      return p(l.input_weight, 2 * g) * x0 + p(l.input_weight, 2 * g + 1) * x1 +
             p(l.recurrent_weight, g) * h + p(l.bias, g);
    };
    const double i = sig(gate(0)), f = sig(gate(1)), g = std::tanh(gate(2)), o = sig(gate(3));
    c = f * c + i * g;
    h = o * std::tanh(c);
  };
  double hf = 0, cf = 0, hb = 0, cb = 0;
  lstm_step(L.lstm_forward, -0.75, 2.0, hf, cf);
  const double hf0 = hf;
  lstm_step(L.lstm_forward, 0.125, -0.5, hf, cf);
  const double hf1 = hf;
  lstm_step(L.lstm_backward, 0.125, -0.5, hb, cb);
  const double hb1 = hb;
  lstm_step(L.lstm_backward, -0.75, 2.0, hb, cb);
  const double hb0 = hb;
  const double cq_fwd = (hf0 + hf1) / 2;
  const double cq_bwd = (hb0 + hb1) / 2;

  // Answers CNN over ["eclipse"].
  const auto& ac = L.answer_cnn;
  const double a0 = p(ac.kernels[0], 0) * 1.0 + p(ac.kernels[0], 1) * 1.0 + p(ac.biases[0]);
  const double a_out = relu(p(ac.fc_weight) * relu(a0) + p(ac.fc_bias));

  const double hidden = relu(p(L.head_weight, 0) * q_out + p(L.head_weight, 1) * cq_fwd +
                             p(L.head_weight, 2) * cq_bwd + p(L.head_weight, 3) * a_out +
                             p(L.head_bias));
  const double logit = p(L.output_weight) * hidden + p(L.output_bias);
  const double expected = sig(logit);

  const auto trace = forward(w, input);
  EXPECT_NEAR(trace.head.logit, logit, 1e-10);
  EXPECT_NEAR(trace.probability(), expected, 1e-10);
  EXPECT_EQ(forward(w, input).probability(), trace.probability());
}

// ---------------------------------------------------------------------------
// Loss, probability clamp

TEST(Model, BceExamples) {
  const double eps = 1e-7;
  EXPECT_NEAR(bce_loss(1 - eps, 1), 0.0, 1e-6);
  EXPECT_NEAR(bce_loss(0.5, 0), 0.693147, 1e-6);
  EXPECT_NEAR(bce_loss(eps, 1), -std::log(eps), 1e-9);
  EXPECT_TRUE(std::isfinite(bce_loss(eps, 1)));
  EXPECT_GT(bce_loss(eps, 1), 16.0);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double p = rng.uniform(eps, 1 - eps);
    EXPECT_GE(bce_loss(p, 0), 0.0);
    EXPECT_GE(bce_loss(p, 1), 0.0);
  }
}

TEST(Model, ProbabilityStaysInsideClamp) {
  const auto hp = tiny_hyperparams(3);
  const auto table = random_table(words(5), 4, 3);
  auto w = init_weights<double>(hp, 4, table.fingerprint());
  const auto input = embed_triplet(hp, table, {"w1"}, make_question(1, "w2 w3", {"w4"}));
  w.block(w.layout().output_bias)[0] = 1e3;
  EXPECT_EQ(forward(w, input).probability(), 1 - hp.probability_clamp_eps);
  w.block(w.layout().output_bias)[0] = -1e3;
  EXPECT_EQ(forward(w, input).probability(), hp.probability_clamp_eps);
  EXPECT_EQ(clamped_sigmoid(50, 1e-7), 1 - 1e-7);
  EXPECT_EQ(sigmoid(0), 0.5);
}

// ---------------------------------------------------------------------------
// Gradients

TEST(Model, GradientsMatchCentralDifferences) {
  for (const auto& c : testing::gradient_check_cases()) {
    for (const auto& e : testing::check_gradients(c)) {
      EXPECT_LE(e.max_relative_error, 1e-4) << e.block << " (seed " << c.hp.seed << ")";
    }
  }
}

TEST(Model, GradientCheckCasesExerciseEveryBlock) {
  for (const auto& c : testing::gradient_check_cases()) {
    std::size_t nonzero = 0;
    const auto errors = testing::check_gradients(c);
    for (const auto& e : errors) nonzero += e.max_abs_gradient > 0;
    // Dead ReLUs may zero a block or two, never most of them.
    EXPECT_GE(nonzero * 4, errors.size() * 3) << "seed " << c.hp.seed;
  }
}

TEST(Model, ZeroUpstreamErrorGivesZeroGradients) {
  const auto hp = tiny_hyperparams(8);
  const auto table = random_table(words(6), 4, 8);
  const auto w = init_weights<double>(hp, 4);
  const auto input = embed_triplet(hp, table, {"w0", "w3"}, make_question(2, "w1 w2", {"w5"}));
  const auto trace = forward(w, input);
  auto grads = w.zeros_like();
  backward_from_logit(w, trace, 0.0, grads);
  for (double g : grads.values()) EXPECT_EQ(g, 0.0);

  // backward() uses sigmoid(logit) - label as the upstream error.
  auto by_label = w.zeros_like();
  backward(w, trace, 1, by_label);
  auto by_logit = w.zeros_like();
  backward_from_logit(w, trace, sigmoid(trace.head.logit) - 1.0, by_logit);
  EXPECT_EQ(by_label, by_logit);
}

TEST(Model, PaddingRowsChangeNeitherOutputsNorGradients) {
  const auto hp = tiny_hyperparams(17);
  const std::size_t d = 4;
  const auto table = random_table(words(8), d, 17);
  const auto w = init_weights<double>(hp, d);
  const Tokens query = {"w0", "w5"};
  const Tokens question = {"w1", "w2", "w6"};
  const Tokens answers = {"w3"};

  auto run = [&](std::size_t pad) {
    TripletInput in;
    in.query = embed_sequence(table, query, hp.max_len_query + pad);
    in.question = embed_sequence(table, question, hp.max_len_cq + pad);
    in.answers = embed_sequence(table, answers, hp.max_len_ans + pad);
    in.cq_id = 1;
    const auto trace = forward(w, in);
    auto grads = w.zeros_like();
    backward(w, trace, 1, grads);
    return std::pair{trace.probability(), grads};
  };
  const auto [p0, g0] = run(0);
  for (std::size_t pad : {1u, 4u, 9u}) {
    const auto [p, g] = run(pad);
    EXPECT_EQ(p, p0) << pad;
    EXPECT_EQ(g, g0) << pad;
  }
}

// ---------------------------------------------------------------------------
// Adam

TEST(Model, AdamLeavesWeightsAloneOnZeroGradients) {
  auto w = init_weights<double>(tiny_hyperparams(1), 4);
  const auto before = w;
  AdamOptimizer<double> adam(w.hyperparams(), w.values().size());
  adam.step(w, w.zeros_like());
  EXPECT_EQ(w, before);
  EXPECT_EQ(adam.timestep(), 1u);
}

TEST(Model, AdamFirstStepMovesByLearningRate) {
  const double lr = 1e-3, eps = 1e-8;
  AdamOptimizer<double> adam(lr, 0.9, 0.999, eps, 1);
  std::vector<double> param{0.25};
  const std::vector<double> grad{1.0};
  adam.step(std::span<double>(param), std::span<const double>(grad));
  // m_hat = 1, v_hat = 1 at t = 1.
  EXPECT_NEAR(param[0], 0.25 - lr / (1 + eps), 1e-15);

  std::vector<double> neg{0.0};
  AdamOptimizer<double> adam2(lr, 0.9, 0.999, eps, 1);
  const std::vector<double> g2{-40.0};
  adam2.step(std::span<double>(neg), std::span<const double>(g2));
  EXPECT_NEAR(neg[0], lr * 40 / (40 + eps), 1e-15);
}

TEST(Model, AdamTrajectoriesAreReproducible) {
  auto run = [] {
    auto w = init_weights<float>(tiny_hyperparams(5), 4);
    AdamOptimizer<float> adam(w.hyperparams(), w.values().size());
    Rng rng(99);
    for (int s = 0; s < 10; ++s) {
      auto g = w.zeros_like();
      for (float& x : g.values()) x = static_cast<float>(rng.normal());
      adam.step(w, g);
    }
    return w;
  };
  EXPECT_EQ(run(), run());
}

TEST(Model, AdamRejectsNonFiniteGradientsNamingTheBlock) {
  auto w = init_weights<double>(tiny_hyperparams(5), 4);
  const auto before = w;
  auto g = w.zeros_like();
  g.block(w.layout().head_bias)[1] = std::nan("");
  AdamOptimizer<double> adam(w.hyperparams(), w.values().size());
  try {
    adam.step(w, g);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("head.bias"), std::string::npos) << e.what();
  }
  EXPECT_EQ(w, before);
}

// ---------------------------------------------------------------------------
// Prediction

TEST(Model, PredictScoresEqualsSixteenForwardCalls) {
  const auto& catalog = testing::shipped_catalog();
  std::vector<std::string> vocab = words(5);
  for (const auto& q : catalog) {
    for (auto& t : question_tokens(q)) vocab.push_back(t);
    for (auto& t : answer_tokens(q)) vocab.push_back(t);
  }
  std::sort(vocab.begin(), vocab.end());
  vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
  const auto table = random_table(vocab, 6, 10);

  HyperParams hp;
  hp.cnn_filters_per_width = 8;
  hp.cnn_fc_out = 8;
  hp.lstm_hidden = 8;
  hp.head_hidden = 8;
  hp.seed = 4;
  const auto w = init_weights<float>(hp, 6, table.fingerprint());
  const Tokens query = {"w1", "windows", "install", "nope"};
  const auto scores = predict_scores(w, table, catalog, query);
  for (const auto& cq : catalog) {
    const double p = forward_probability(w, table, query, cq);
    EXPECT_EQ(scores[cq.id - 1], p) << cq.id;
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }

  // Sorting the probabilities and sorting the logits give one order.
  ScoreVector logits{}, affine{};
  for (const auto& cq : catalog) {
    const auto trace = forward(w, embed_triplet(hp, table, query, cq));
    logits[cq.id - 1] = trace.head.logit;
    affine[cq.id - 1] = 2 * trace.head.logit + 1;
  }
  EXPECT_EQ(rank_by_score(scores), rank_by_score(logits));
  EXPECT_EQ(rank_by_score(scores), rank_by_score(affine));
}

TEST(Model, QueryOnlyPredictsSixteenProbabilities) {
  HyperParams hp = tiny_hyperparams(12);
  hp.query_only = true;
  const auto table = random_table(words(6), 4, 12);
  const auto w = init_weights<float>(hp, 4, table.fingerprint());
  const auto scores = predict_scores(w, table, testing::shipped_catalog(), {"w1", "w2"});
  std::set<double> distinct;
  for (double s : scores) {
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
    distinct.insert(s);
  }
  EXPECT_GT(distinct.size(), 1u);
}

// ---------------------------------------------------------------------------
// Model file

TEST(ModelFile, RoundTripIsBitwise) {
  const auto table = random_table(words(6), 4, 1);
  const auto w = init_weights<float>(tiny_hyperparams(77), 4, table.fingerprint());
  const auto dir = testing::scratch_dir("model");
  save_model(w, dir / "m.bin");
  const auto loaded = load_model(dir / "m.bin");
  EXPECT_EQ(loaded, w);
  const auto cq = make_question(5, "w1 w2", {"w3"});
  EXPECT_EQ(forward_probability(loaded, table, {"w0", "w4"}, cq),
            forward_probability(w, table, {"w0", "w4"}, cq));

  const auto bytes = serialize_model(w);
  EXPECT_EQ(bytes.substr(0, 8), "QQSEMDL1");
  EXPECT_EQ(bytes.size() - bytes.find('\n') - 1, w.values().size() * 4);
}

TEST(ModelFile, TruncationAndCorruptionFailTheChecksum) {
  const auto w = init_weights<float>(tiny_hyperparams(1), 4);
  const auto bytes = serialize_model(w);
  auto expect_error = [](const std::string& data, const std::string& needle) {
    try {
      deserialize_model(data);
      ADD_FAILURE() << "expected failure containing " << needle;
    } catch (const ModelFormatError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_error(bytes.substr(0, bytes.size() - 3), "checksum");
  auto flipped = bytes;
  flipped.back() ^= 0x40;
  expect_error(flipped, "checksum");
  expect_error("XXXXXXXX" + bytes.substr(8), "magic");
  expect_error(bytes.substr(0, 20), "header");

  auto versioned = bytes;
  const auto at = versioned.find("\"format_version\":1");
  ASSERT_NE(at, std::string::npos);
  versioned.replace(at, 18, "\"format_version\":2");
  expect_error(versioned, "format version");
}

TEST(ModelFile, WrongEmbeddingFileIsRejectedAtUse) {
  const auto right = random_table(words(6), 4, 1);
  const auto wrong = random_table(words(6), 4, 2);
  const auto w = init_weights<float>(tiny_hyperparams(2), 4, right.fingerprint());
  const auto loaded = deserialize_model(serialize_model(w));
  const auto cq = make_question(1, "w1", {});
  EXPECT_NO_THROW(forward_probability(loaded, right, {"w0"}, cq));
  EXPECT_THROW(forward_probability(loaded, wrong, {"w0"}, cq), Error);
  EXPECT_THROW(Predictor<float>(loaded, wrong, testing::shipped_catalog()), Error);
}

}  // namespace
}  // namespace qqse
