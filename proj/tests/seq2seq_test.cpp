// Copyright 2026 The domixt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "domixt/seq2seq/checkpoint.hpp"
#include "domixt/seq2seq/model.hpp"
#include "domixt/seq2seq/search.hpp"
#include "domixt/nncore/adam.hpp"
#include "test_support.hpp"

using namespace domixt;
using namespace domixt::s2s;
using domixt::testing::check_gradients;

namespace {

HyperParams tiny(std::size_t vocab = 7, std::size_t dim = 4) {
  HyperParams hp;
  hp.src_vocab = hp.tgt_vocab = vocab;
  hp.embed_dim = hp.hidden_dim = hp.attn_dim = hp.maxout_units = dim;
  hp.lstm_layers = 2;
  hp.dropout_rate = 0.0;
  return hp;
}

std::vector<int> random_ids(std::mt19937_64& rng, std::size_t vocab, std::size_t lo, std::size_t hi) {
  std::uniform_int_distribution<std::size_t> len(lo, hi);
  std::uniform_int_distribution<int> id(4, static_cast<int>(vocab) - 1);
  std::vector<int> s(len(rng));
  for (auto& v : s) v = id(rng);
  return s;
}

template <class T>
std::vector<Tensor<T>> annotation_values(const ModelParams<T>& m, const std::vector<int>& src) {
  Graph<T> g;
  Bound<T> P(g, m);
  auto enc = encode(g, P, {src});
  std::vector<Tensor<T>> out;
  for (Var a : enc.annotations) out.push_back(g.value(a));
  return out;
}

template <class T>
double eval_loss(const ModelParams<T>& m, const std::vector<TrainPair>& batch, std::size_t* tokens = nullptr) {
  Graph<T> g;
  Bound<T> P(g, m);
  auto L = batch_loss(g, P, batch);
  if (tokens) *tokens = L.tokens;
  return static_cast<double>(g.value(L.loss).data[0]);
}

/// Log probability of emitting `ys` in order, computed by rerunning the
/// decoder teacher-forced from scratch for every prefix.
double sequence_logp(const ModelParams<double>& m, const std::vector<int>& src, const std::vector<int>& ys) {
  Graph<double> g;
  Bound<double> P(g, m);
  auto enc = encode(g, P, {src});
  auto state = enc.final_state;
  int prev = Vocabulary::kBos;
  double lp = 0;
  for (int y : ys) {
    auto step = decode_step(g, P, enc, state, {prev});
    const auto& p = g.value(g.softmax(step.logits));
    lp += std::log(p.at(0, static_cast<std::size_t>(y)));
    state = step.state;
    prev = y;
  }
  return lp;
}

}  // namespace

TEST(Encode, OneAnnotationPerPosition) {
  auto m = init_params<float>(tiny(20, 6), 1);
  std::vector<int> src{4, 5, 6, 7, 8};
  auto ann = annotation_values(m, src);
  ASSERT_EQ(ann.size(), src.size());
  for (const auto& a : ann) {
    EXPECT_EQ(a.rows(), 1u);
    EXPECT_EQ(a.cols(), 6u);
  }
}

TEST(Encode, DeterministicInEvalMode) {
  auto m = init_params<float>(tiny(20, 6), 2);
  std::vector<int> src{9, 4, 11};
  auto a = annotation_values(m, src), b = annotation_values(m, src);
  for (std::size_t j = 0; j < a.size(); ++j) EXPECT_EQ(a[j].data, b[j].data);
}

TEST(Encode, OrderMatters) {
  auto m = init_params<double>(tiny(20, 6), 3);
  auto a = annotation_values(m, {5, 9}), b = annotation_values(m, {9, 5});
  EXPECT_NE(a.back().data, b.back().data);
  EXPECT_NE(a.front().data, b.back().data);
}

TEST(Encode, RejectsOutOfRangeIds) {
  auto m = init_params<float>(tiny(10, 4), 4);
  Graph<float> g;
  Bound<float> P(g, m);
  try {
    encode(g, P, {{4, 10}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IdOutOfRange);
  }
}

TEST(DecodeStep, DistributionsNormalise) {
  std::mt19937_64 rng(5);
  auto m = init_params<float>(tiny(30, 8), 5, 1.0);
  Graph<float> g;
  Bound<float> P(g, m);
  std::vector<std::vector<int>> srcs{random_ids(rng, 30, 1, 6), random_ids(rng, 30, 1, 6), random_ids(rng, 30, 1, 6)};
  auto enc = encode(g, P, srcs);
  auto state = enc.final_state;
  std::vector<int> prev(3, Vocabulary::kBos);
  for (int t = 0; t < 4; ++t) {
    auto step = decode_step(g, P, enc, state, prev);
    const auto& p = g.value(g.softmax(step.logits));
    const auto& a = g.value(step.attention);
    for (std::size_t r = 0; r < 3; ++r) {
      double sp = 0, sa = 0;
      for (float v : p.row(r)) sp += v;
      for (std::size_t j = 0; j < a.cols(); ++j) {
        sa += a.at(r, j);
        if (j >= srcs[r].size()) {
          EXPECT_EQ(a.at(r, j), 0.f);
        }
      }
      EXPECT_NEAR(sp, 1.0, 1e-6);
      EXPECT_NEAR(sa, 1.0, 1e-6);
    }
    state = step.state;
    prev = {4, 5, 6};
  }
}

TEST(DecodeStep, SinglePositionGetsAllAttention) {
  auto m = init_params<float>(tiny(12, 4), 6, 1.0);
  Graph<float> g;
  Bound<float> P(g, m);
  auto enc = encode(g, P, {{7}});
  auto step = decode_step(g, P, enc, enc.final_state, {Vocabulary::kBos});
  EXPECT_EQ(g.value(step.attention).at(0, 0), 1.0f);
}

TEST(DecodeStep, MaxoutMatchesBruteForceBranches) {
  std::mt19937_64 rng(7);
  const std::size_t In = 10, M = 6;
  auto W = nn::uniform_tensor<double>(In, kMaxoutPieces * M, -1.0, 1.0, rng);
  auto b = nn::uniform_tensor<double>(1, kMaxoutPieces * M, -1.0, 1.0, rng);
  auto x = nn::uniform_tensor<double>(4, In, -1.0, 1.0, rng);
  Graph<double> g;
  Var h = g.add_row(g.matmul(g.constant(x), g.constant(W)), g.constant(b));
  const auto& out = g.value(g.max_over_groups(h, kMaxoutPieces));
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t u = 0; u < M; ++u) {
      double best = -1e300;
      for (std::size_t p = 0; p < kMaxoutPieces; ++p) {
        std::size_t col = p * M + u;
        double v = b.at(0, col);
        for (std::size_t i = 0; i < In; ++i) v += x.at(r, i) * W.at(i, col);
        best = std::max(best, v);
      }
      EXPECT_NEAR(out.at(r, u), best, 1e-12);
    }
}

TEST(BatchLoss, UniformInitIsNearLogV) {
  auto hp = HyperParams::desk();
  hp.src_vocab = hp.tgt_vocab = 500;
  auto m = init_params<float>(hp, 8);
  std::mt19937_64 rng(8);
  std::vector<TrainPair> batch;
  for (int i = 0; i < 16; ++i) batch.push_back({random_ids(rng, 500, 3, 9), random_ids(rng, 500, 3, 9)});
  double loss = eval_loss(m, batch);
  EXPECT_NEAR(loss, std::log(500.0), 0.05 * std::log(500.0));
}

TEST(BatchLoss, TokenWeightedMeanOfPairLosses) {
  std::mt19937_64 rng(9);
  auto m = init_params<double>(tiny(15, 5), 9, 0.5);
  std::vector<TrainPair> batch;
  for (int i = 0; i < 5; ++i) batch.push_back({random_ids(rng, 15, 1, 7), random_ids(rng, 15, 1, 7)});
  std::size_t total_tokens = 0;
  double joint = eval_loss(m, batch, &total_tokens);
  double acc = 0;
  std::size_t sum_tokens = 0;
  for (const auto& p : batch) {
    std::size_t n = 0;
    acc += eval_loss(m, {p}, &n) * static_cast<double>(n);
    sum_tokens += n;
  }
  EXPECT_EQ(sum_tokens, total_tokens);
  EXPECT_NEAR(joint, acc / static_cast<double>(sum_tokens), 1e-12);
}

TEST(BatchLoss, PaddingDoesNotLeakIntoOtherRows) {
  std::mt19937_64 rng(10);
  auto m = init_params<double>(tiny(15, 5), 10, 0.5);
  TrainPair a{{4, 5}, {6}};
  std::size_t na = 0;
  double alone = eval_loss(m, {a}, &na);
  for (int trial = 0; trial < 5; ++trial) {
    TrainPair b{random_ids(rng, 15, 3, 9), random_ids(rng, 15, 3, 9)};
    std::size_t nab = 0, nb = 0;
    double both = eval_loss(m, {a, b}, &nab);
    double only_b = eval_loss(m, {b}, &nb);
    EXPECT_NEAR(both * nab - only_b * nb, alone * na, 1e-10);
  }
}

TEST(BatchLoss, EmptyBatchRaises) {
  auto m = init_params<float>(tiny(), 11);
  Graph<float> g;
  Bound<float> P(g, m);
  try {
    batch_loss(g, P, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyBatch);
  }
}

TEST(BatchLoss, GradientMatchesFiniteDifferences) {
  auto m = init_params<double>(tiny(7, 4), 12, 0.5);
  std::vector<TrainPair> batch{{{4, 5, 6}, {6, 4}}, {{6}, {5, 5, 4}}, {{5, 4}, {4}}};
  auto loss = [&](bool bp) {
    Graph<double> g(nn::Mode::Eval);
    g.set_recording(true);
    Bound<double> P(g, m);
    auto L = batch_loss(g, P, batch);
    if (bp) g.backward(L.loss);
    return g.value(L.loss).data[0];
  };
  auto r = check_gradients(m.all(), loss);
  EXPECT_LT(r.max_rel, 1e-4) << r.checked << " entries";
  EXPECT_GT(r.checked, 500u);
}

TEST(BatchLoss, GradientWithDropoutMaskMatches) {
  auto hp = tiny(7, 4);
  hp.dropout_rate = 0.2;
  auto m = init_params<double>(hp, 13, 0.5);
  std::vector<TrainPair> batch{{{4, 5, 6}, {6, 4}}, {{6, 6}, {5}}};
  auto loss = [&](bool bp) {
    Graph<double> g(nn::Mode::Train, 42);
    Bound<double> P(g, m);
    auto L = batch_loss(g, P, batch);
    if (bp) g.backward(L.loss);
    return g.value(L.loss).data[0];
  };
  EXPECT_LT(check_gradients(m.all(), loss).max_rel, 1e-4);
}

TEST(BatchLoss, MemorisesFiftyPairs) {
  auto hp = HyperParams::desk();
  hp.src_vocab = hp.tgt_vocab = 40;
  auto m = init_params<float>(hp, 14);
  std::mt19937_64 rng(14);
  std::vector<TrainPair> data;
  for (int i = 0; i < 50; ++i) data.push_back({random_ids(rng, 40, 3, 6), random_ids(rng, 40, 3, 6)});
  nn::AdamConfig ac;
  ac.weight_decay = hp.weight_decay;
  nn::AdamState<float> st(ac);
  auto params = m.all();
  double loss = 1e9;
  int epoch = 0;
  for (; epoch < 200 && loss >= 0.1; ++epoch) {
    for (std::size_t b = 0; b < data.size(); b += hp.batch_size) {
      std::vector<TrainPair> batch(data.begin() + b, data.begin() + std::min(data.size(), b + hp.batch_size));
      m.zero_grad();
      Graph<float> g(nn::Mode::Train, 1000 + epoch * 10 + b);
      Bound<float> P(g, m);
      auto L = batch_loss(g, P, batch);
      g.backward(L.loss);
      nn::adam_step<float>(params, st);
    }
    loss = eval_loss(m, data);
  }
  EXPECT_LT(loss, 0.1) << "after " << epoch << " epochs";
}

TEST(BeamSearch, BeamOneIsGreedy) {
  std::mt19937_64 rng(15);
  auto m = init_params<float>(tiny(25, 8), 15, 1.0);
  for (int i = 0; i < 20; ++i) {
    auto src = random_ids(rng, 25, 1, 8);
    auto lim = default_max_out_len(src.size());
    auto gr = greedy_decode(m, src, lim);
    auto bm = beam_search(m, src, 1, lim);
    EXPECT_EQ(gr.tokens, bm.tokens);
    EXPECT_NEAR(gr.log_prob, bm.log_prob, 1e-5 * std::abs(gr.log_prob));
  }
}

TEST(BeamSearch, WiderBeamScoresAtLeastAsHigh) {
  std::mt19937_64 rng(16);
  auto m = init_params<float>(tiny(25, 8), 16, 1.0);
  for (int i = 0; i < 20; ++i) {
    auto src = random_ids(rng, 25, 1, 8);
    auto lim = default_max_out_len(src.size());
    double narrow = beam_search(m, src, 1, lim).score();
    EXPECT_GE(beam_search(m, src, 4, lim).score(), narrow - 1e-5 * std::abs(narrow)) << "input " << i;
  }
}

TEST(BeamSearch, HypothesesAreWellFormed) {
  std::mt19937_64 rng(17);
  auto m = init_params<float>(tiny(25, 8), 17, 1.0);
  for (int i = 0; i < 10; ++i) {
    auto src = random_ids(rng, 25, 1, 8);
    auto lim = default_max_out_len(src.size());
    auto h = beam_search(m, src, 8, lim);
    EXPECT_LE(h.tokens.size(), lim);
    EXPECT_EQ(h.finished, !h.tokens.empty() && h.tokens.back() == Vocabulary::kEos);
    EXPECT_LE(h.log_prob, 0.0);
    for (std::size_t t = 0; t + 1 < h.tokens.size(); ++t) EXPECT_NE(h.tokens[t], Vocabulary::kEos);
  }
}

TEST(BeamSearch, MatchesExhaustiveEnumeration) {
  // Vocabulary of 5: PAD, BOS, EOS, UNK and one word; outputs of at most 3 tokens.
  const std::vector<int> emit{Vocabulary::kEos, Vocabulary::kUnk, 4};
  const std::size_t max_len = 3;
  std::mt19937_64 rng(18);
  for (int draw = 0; draw < 50; ++draw) {
    auto m = init_params<double>(tiny(5, 4), 1000 + draw, 2.0);
    auto src = random_ids(rng, 5, 1, 3);
    double best = -1e300;
    std::vector<int> arg;
    std::vector<std::vector<int>> frontier{{}};
    for (std::size_t len = 1; len <= max_len; ++len) {
      std::vector<std::vector<int>> next;
      for (const auto& pre : frontier)
        for (int y : emit) {
          auto seq = pre;
          seq.push_back(y);
          bool done = y == Vocabulary::kEos;
          if (done || len == max_len) {
            double s = sequence_logp(m, src, seq) / static_cast<double>(seq.size());
            if (s > best) {
              best = s;
              arg = seq;
            }
          }
          if (!done) next.push_back(seq);
        }
      frontier = std::move(next);
    }
    for (std::size_t beam : {16u, 100u}) {
      auto h = beam_search(m, src, beam, max_len);
      EXPECT_EQ(h.tokens, arg) << "draw " << draw << " beam " << beam;
      EXPECT_NEAR(h.score(), best, 1e-9);
    }
  }
}

TEST(Ensemble, SingleMemberAndRepeatsEqualBeam) {
  std::mt19937_64 rng(19);
  auto m = init_params<float>(tiny(25, 8), 19, 1.0);
  for (int i = 0; i < 10; ++i) {
    auto src = random_ids(rng, 25, 1, 8);
    auto lim = default_max_out_len(src.size());
    auto ref = beam_search(m, src, 5, lim);
    EXPECT_EQ(ensemble_decode<float>({&m}, src, 5, lim).tokens, ref.tokens);
    auto three = ensemble_decode<float>({&m, &m, &m}, src, 5, lim);
    EXPECT_EQ(three.tokens, ref.tokens);
    EXPECT_NEAR(three.log_prob, ref.log_prob, 1e-6);
  }
}

TEST(Ensemble, AveragesMemberDistributions) {
  // With a zero output matrix the logits are the bias, so each member's
  // next-token distribution is fixed and known.
  auto make = [](std::vector<double> probs) {
    auto m = init_params<double>(tiny(5, 4), 20, 1.0);
    m["out.W"].value.fill(0.0);
    for (std::size_t v = 0; v < probs.size(); ++v) m["out.b"].value.data[v] = std::log(probs[v]);
    return m;
  };
  auto a = make({0.1, 0.1, 0.2, 0.2, 0.4});
  auto b = make({0.3, 0.3, 0.2, 0.1, 0.1});
  EnsembleStepper<double> st({&a, &b}, {4, 4});
  auto d = st.step({0}, {Vocabulary::kBos});
  const std::vector<double> want{0.2, 0.2, 0.2, 0.15, 0.25};
  double sum = 0;
  for (std::size_t v = 0; v < 5; ++v) {
    EXPECT_NEAR(d[0][v], want[v], 1e-12);
    sum += d[0][v];
  }
  EXPECT_NEAR(sum, 1.0, 1e-6);
}

TEST(Ensemble, RejectsMismatchedArchitectures) {
  auto a = init_params<float>(tiny(10, 4), 21), b = init_params<float>(tiny(10, 6), 21);
  try {
    ensemble_decode<float>({&a, &b}, {4}, 2, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::HyperParamMismatch);
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  domixt::testing::TempDir dir("ckpt");
  Checkpoint ck;
  ck.params = init_params<float>(tiny(11, 5), 22, 1.0);
  ck.tag = CheckpointTag::BestDevBleu;
  ck.epoch = 7;
  ck.dev_loss = 1.2345678901234;
  ck.dev_bleu = 55.5;
  save_checkpoint(ck, dir / "a.ckpt");
  auto bytes = read_file(dir / "a.ckpt");
  EXPECT_EQ(bytes.substr(0, kCheckpointMagic.size()), kCheckpointMagic);
  auto back = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(back.tag, ck.tag);
  EXPECT_EQ(back.epoch, 7u);
  EXPECT_DOUBLE_EQ(back.dev_loss, ck.dev_loss);
  EXPECT_DOUBLE_EQ(back.dev_bleu, ck.dev_bleu);
  EXPECT_TRUE(back.params.hp.same_architecture(ck.params.hp));
  ASSERT_EQ(back.params.tensors.size(), ck.params.tensors.size());
  for (const auto& [name, p] : ck.params.tensors) {
    EXPECT_EQ(back.params[name].value.shape, p.value.shape) << name;
    EXPECT_EQ(back.params[name].value.data, p.value.data) << name;
  }
  EXPECT_EQ(serialize_checkpoint(back), bytes);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  Checkpoint ck;
  ck.params = init_params<float>(tiny(), 23);
  auto bytes = serialize_checkpoint(ck);
  auto code = [](const std::string& b) {
    try {
      parse_checkpoint(b);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  EXPECT_EQ(code("NOTMAGIC" + bytes.substr(8)), ErrorCode::BadCheckpoint);
  EXPECT_EQ(code(bytes.substr(0, bytes.size() - 3)), ErrorCode::BadCheckpoint);
}

TEST(Checkpoint, TagNames) {
  EXPECT_EQ(parse_checkpoint_tag("best-loss"), CheckpointTag::BestDevLoss);
  EXPECT_EQ(parse_checkpoint_tag("best-dev-bleu"), CheckpointTag::BestDevBleu);
  EXPECT_EQ(to_string(CheckpointTag::Final), "final");
  EXPECT_THROW(parse_checkpoint_tag("median"), Error);
}
