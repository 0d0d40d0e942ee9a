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

// Attentional LSTM encoder-decoder.
//
//   source ids -> embedding -> stacked LSTM  -> annotations (one per position)
//   prev token -> embedding -> stacked LSTM  -> h_top
//   attention:  alpha = softmax_j(<annotation_j Wk, h_top Wq>), ctx = sum_j alpha_j annotation_j
//   output:     maxout_2([h_top; ctx] Wm + bm) -> dropout -> Wo + bo -> softmax
//
// The decoder stack starts from the encoder stack's final states. Dropout
// sits between stacked LSTM layers and in front of the output projection.

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "domixt/corpus.hpp"
#include "domixt/error.hpp"
#include "domixt/nncore/graph.hpp"
#include "domixt/nncore/tensor.hpp"

namespace domixt::s2s {

using nn::Graph;
using nn::Param;
using nn::Tensor;
using nn::Var;

inline constexpr std::size_t kMaxoutPieces = 2;

struct HyperParams {
  std::size_t src_vocab = 2000;
  std::size_t tgt_vocab = 2000;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 128;
  std::size_t attn_dim = 128;
  std::size_t maxout_units = 64;
  std::size_t lstm_layers = 2;
  double dropout_rate = 0.2;
  double weight_decay = 1e-6;
  std::size_t batch_size = 32;
  std::size_t max_len = 80;
  std::size_t beam_size = 8;

  static HyperParams full() {
    return {32000, 32000, 620, 1000, 1000, 500, 2, 0.20, 1e-6, 64, 80, 100};
  }
  static HyperParams desk() { return {2000, 2000, 64, 128, 128, 64, 2, 0.20, 1e-6, 32, 80, 8}; }

  void validate() const {
    if (src_vocab == 0 || tgt_vocab == 0 || embed_dim == 0 || hidden_dim == 0 || attn_dim == 0 ||
        maxout_units == 0 || lstm_layers == 0 || batch_size == 0 || max_len == 0 || beam_size == 0) {
      detail::fail(ErrorCode::ConfigError, "hyperparameters must be positive");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) detail::fail(ErrorCode::InvalidRate, "dropout_rate out of range");
    if (weight_decay < 0.0) detail::fail(ErrorCode::ConfigError, "weight_decay must be non-negative");
  }

  /// The parameter shapes depend only on these fields.
  bool same_architecture(const HyperParams& o) const {
    return src_vocab == o.src_vocab && tgt_vocab == o.tgt_vocab && embed_dim == o.embed_dim &&
           hidden_dim == o.hidden_dim && attn_dim == o.attn_dim && maxout_units == o.maxout_units &&
           lstm_layers == o.lstm_layers;
  }

  std::string to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "src_vocab=" << src_vocab << "\ntgt_vocab=" << tgt_vocab << "\nembed_dim=" << embed_dim
       << "\nhidden_dim=" << hidden_dim << "\nattn_dim=" << attn_dim << "\nmaxout_units=" << maxout_units
       << "\nlstm_layers=" << lstm_layers << "\ndropout_rate=" << dropout_rate << "\nweight_decay=" << weight_decay
       << "\nbatch_size=" << batch_size << "\nmax_len=" << max_len << "\nbeam_size=" << beam_size << "\n";
    return os.str();
  }

  /// Applies one `key=value` setting; returns false for unknown keys.
  bool set(const std::string& key, const std::string& value) {
    auto sz = [&] { return static_cast<std::size_t>(std::stoull(value)); };
    if (key == "src_vocab") src_vocab = sz();
    else if (key == "tgt_vocab") tgt_vocab = sz();
    else if (key == "embed_dim") embed_dim = sz();
    else if (key == "hidden_dim") hidden_dim = sz();
    else if (key == "attn_dim") attn_dim = sz();
    else if (key == "maxout_units") maxout_units = sz();
    else if (key == "lstm_layers") lstm_layers = sz();
    else if (key == "dropout_rate") dropout_rate = std::stod(value);
    else if (key == "weight_decay") weight_decay = std::stod(value);
    else if (key == "batch_size") batch_size = sz();
    else if (key == "max_len") max_len = sz();
    else if (key == "beam_size") beam_size = sz();
    else return false;
    return true;
  }
};

/// Named tensors of one model. std::map keeps Param addresses stable, which
/// the autodiff graph relies on.
template <class T>
struct ModelParams {
  HyperParams hp;
  std::map<std::string, Param<T>> tensors;

  Param<T>& operator[](const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) detail::fail(ErrorCode::BadCheckpoint, "missing tensor '", name, "'");
    return it->second;
  }
  const Param<T>& operator[](const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) detail::fail(ErrorCode::BadCheckpoint, "missing tensor '", name, "'");
    return it->second;
  }

  std::vector<Param<T>*> all() {
    std::vector<Param<T>*> out;
    for (auto& [name, p] : tensors) out.push_back(&p);
    return out;
  }
  void zero_grad() {
    for (auto& [name, p] : tensors) p.zero_grad();
  }
  bool all_finite() const {
    for (const auto& [name, p] : tensors)
      if (!p.value.all_finite()) return false;
    return true;
  }

  template <class U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.hp = hp;
    for (const auto& [name, p] : tensors) out.tensors.emplace(name, Param<U>(p.value.template cast<U>()));
    return out;
  }
};

/// Shapes of every tensor, derived from the hyperparameters alone.
inline std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> param_shapes(const HyperParams& hp) {
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> s;
  const auto E = hp.embed_dim, H = hp.hidden_dim, A = hp.attn_dim, M = hp.maxout_units;
  s.push_back({"src_embed", {hp.src_vocab, E}});
  s.push_back({"tgt_embed", {hp.tgt_vocab, E}});
  for (const char* side : {"enc", "dec"}) {
    for (std::size_t l = 0; l < hp.lstm_layers; ++l) {
      std::size_t in = l == 0 ? E : H;
      std::string p = std::string(side) + ".l" + std::to_string(l);
      s.push_back({p + ".W", {in + H, 4 * H}});
      s.push_back({p + ".b", {1, 4 * H}});
    }
  }
  s.push_back({"attn.Wk", {H, A}});
  s.push_back({"attn.Wq", {H, A}});
  s.push_back({"maxout.W", {2 * H, kMaxoutPieces * M}});
  s.push_back({"maxout.b", {1, kMaxoutPieces * M}});
  s.push_back({"out.W", {M, hp.tgt_vocab}});
  s.push_back({"out.b", {1, hp.tgt_vocab}});
  return s;
}

template <class T>
ModelParams<T> init_params(const HyperParams& hp, std::uint64_t seed, double scale = 0.1) {
  hp.validate();
  std::mt19937_64 rng(seed);
  ModelParams<T> m;
  m.hp = hp;
  for (const auto& [name, shape] : param_shapes(hp)) {
    m.tensors.emplace(name, Param<T>(nn::uniform_tensor<T>(shape.first, shape.second, T(-scale), T(scale), rng)));
  }
  return m;
}

/// Graph leaves for one model's tensors, created once per graph.
template <class T>
class Bound {
 public:
  Bound(Graph<T>& g, ModelParams<T>& m) : hp(m.hp) {
    for (auto& [name, p] : m.tensors) vars_.emplace(name, g.parameter(p));
  }
  /// Frozen binding for decoding.
  Bound(Graph<T>& g, const ModelParams<T>& m) : hp(m.hp) {
    for (const auto& [name, p] : m.tensors) vars_.emplace(name, g.parameter(p));
  }
  Var operator[](const std::string& name) const { return vars_.at(name); }
  HyperParams hp;

 private:
  std::map<std::string, Var> vars_;
};

struct LstmState {
  Var h;
  Var c;
};

/// One LSTM step; gate layout in W/b columns is [input | forget | candidate | output].
template <class T>
LstmState lstm_cell(Graph<T>& g, Var W, Var b, Var x, const LstmState& prev, std::size_t H) {
  Var z = g.add_row(g.matmul(g.concat_cols({x, prev.h}), W), b);
  Var hc = g.lstm_pointwise(z, prev.c);
  return {g.slice_cols(hc, 0, H), g.slice_cols(hc, H, H)};
}

struct Encoded {
  std::vector<Var> annotations;  // per source position, rows x hidden
  std::vector<Var> keys;         // annotations projected into attention space
  std::vector<LstmState> final_state;
  std::vector<std::size_t> lengths;
  std::size_t rows = 0;
};

template <class T>
Tensor<T> attention_mask(const Encoded& enc) {
  std::size_t L = enc.annotations.size();
  Tensor<T> m(enc.rows, L);
  for (std::size_t r = 0; r < enc.rows; ++r)
    for (std::size_t j = 0; j < L; ++j) m.at(r, j) = j < enc.lengths[r] ? T(0) : T(-1e9);
  return m;
}

/// Runs the encoder stack over a batch of (unpadded) id sequences.
template <class T>
Encoded encode(Graph<T>& g, const Bound<T>& P, const std::vector<std::vector<int>>& sources, double dropout = 0.0) {
  const auto& hp = P.hp;
  const std::size_t B = sources.size(), H = hp.hidden_dim;
  Encoded enc;
  enc.rows = B;
  std::size_t L = 0;
  for (const auto& s : sources) {
    if (s.empty()) detail::fail(ErrorCode::EmptyInput, "cannot encode an empty source sentence");
    for (int id : s)
      if (id < 0 || static_cast<std::size_t>(id) >= hp.src_vocab) {
        detail::fail(ErrorCode::IdOutOfRange, "source id ", id, " outside [0, ", hp.src_vocab, ")");
      }
    enc.lengths.push_back(s.size());
    L = std::max(L, s.size());
  }
  std::vector<LstmState> state(hp.lstm_layers);
  for (auto& st : state) st = {g.constant(Tensor<T>(B, H)), g.constant(Tensor<T>(B, H))};
  for (std::size_t t = 0; t < L; ++t) {
    std::vector<int> ids(B);
    std::vector<unsigned char> keep(B);
    for (std::size_t r = 0; r < B; ++r) {
      keep[r] = t < sources[r].size();
      ids[r] = keep[r] ? sources[r][t] : Vocabulary::kPad;
    }
    Var x = g.lookup(P["src_embed"], ids);
    for (std::size_t l = 0; l < hp.lstm_layers; ++l) {
      std::string p = "enc.l" + std::to_string(l);
      if (l > 0) x = g.dropout(x, dropout);
      LstmState next = lstm_cell(g, P[p + ".W"], P[p + ".b"], x, state[l], H);
      state[l] = {g.select_rows(keep, next.h, state[l].h), g.select_rows(keep, next.c, state[l].c)};
      x = state[l].h;
    }
    enc.annotations.push_back(x);
    enc.keys.push_back(g.matmul(x, P["attn.Wk"]));
  }
  enc.final_state = state;
  return enc;
}

/// Re-indexes encoder rows, e.g. to replicate one sentence across beam hypotheses.
template <class T>
Encoded gather_rows(Graph<T>& g, const Encoded& enc, const std::vector<int>& idx) {
  Encoded out;
  out.rows = idx.size();
  for (int i : idx) out.lengths.push_back(enc.lengths[static_cast<std::size_t>(i)]);
  for (std::size_t j = 0; j < enc.annotations.size(); ++j) {
    out.annotations.push_back(g.rows(enc.annotations[j], idx));
    out.keys.push_back(g.rows(enc.keys[j], idx));
  }
  for (const auto& s : enc.final_state) out.final_state.push_back({g.rows(s.h, idx), g.rows(s.c, idx)});
  return out;
}

struct StepOut {
  Var logits;     // rows x tgt_vocab
  Var attention;  // rows x source positions
  std::vector<LstmState> state;
};

/// One decoder step from the previous tokens and decoder state to next-token logits.
template <class T>
StepOut decode_step(Graph<T>& g, const Bound<T>& P, const Encoded& enc, const std::vector<LstmState>& state,
                    const std::vector<int>& prev, double dropout = 0.0) {
  const auto& hp = P.hp;
  const std::size_t H = hp.hidden_dim;
  if (prev.size() != enc.rows) detail::fail(ErrorCode::ShapeMismatch, "decode_step: ", prev.size(), " tokens for ", enc.rows, " rows");
  for (int id : prev)
    if (id < 0 || static_cast<std::size_t>(id) >= hp.tgt_vocab) {
      detail::fail(ErrorCode::IdOutOfRange, "target id ", id, " outside [0, ", hp.tgt_vocab, ")");
    }
  StepOut out;
  Var x = g.lookup(P["tgt_embed"], prev);
  for (std::size_t l = 0; l < hp.lstm_layers; ++l) {
    std::string p = "dec.l" + std::to_string(l);
    if (l > 0) x = g.dropout(x, dropout);
    out.state.push_back(lstm_cell(g, P[p + ".W"], P[p + ".b"], x, state[l], H));
    x = out.state.back().h;
  }
  Var query = g.matmul(x, P["attn.Wq"]);
  std::vector<Var> scores;
  scores.reserve(enc.keys.size());
  for (Var k : enc.keys) scores.push_back(g.rowwise_dot(k, query));
  Var s = g.add(g.concat_cols(scores), g.constant(attention_mask<T>(enc)));
  out.attention = g.softmax(s);
  Var ctx = g.scale_rows(enc.annotations[0], out.attention, 0);
  for (std::size_t j = 1; j < enc.annotations.size(); ++j) ctx = g.add(ctx, g.scale_rows(enc.annotations[j], out.attention, j));
  Var hidden = g.add_row(g.matmul(g.concat_cols({x, ctx}), P["maxout.W"]), P["maxout.b"]);
  Var maxed = g.dropout(g.max_over_groups(hidden, kMaxoutPieces), dropout);
  out.logits = g.add_row(g.matmul(maxed, P["out.W"]), P["out.b"]);
  return out;
}

struct TrainPair {
  std::vector<int> source;
  std::vector<int> target;  // without BOS/EOS
};

struct LossOut {
  Var loss;  // mean per-token NLL, 1 x 1
  std::size_t tokens = 0;
};

/// Teacher-forced mean negative log likelihood per target token (EOS included, PAD excluded).
template <class T>
LossOut batch_loss(Graph<T>& g, const Bound<T>& P, const std::vector<TrainPair>& batch) {
  if (batch.empty()) detail::fail(ErrorCode::EmptyBatch, "batch_loss on an empty batch");
  const double drop = g.mode() == nn::Mode::Train ? P.hp.dropout_rate : 0.0;
  std::vector<std::vector<int>> sources;
  std::size_t Lt = 0;
  for (const auto& p : batch) {
    sources.push_back(p.source);
    Lt = std::max(Lt, p.target.size() + 1);
  }
  Encoded enc = encode(g, P, sources, drop);
  std::vector<LstmState> state = enc.final_state;
  const std::size_t B = batch.size();
  std::vector<int> prev(B, Vocabulary::kBos);
  Var total;
  LossOut out;
  for (std::size_t t = 0; t < Lt; ++t) {
    std::vector<int> gold(B);
    std::vector<T> w(B);
    for (std::size_t r = 0; r < B; ++r) {
      const auto& y = batch[r].target;
      if (t < y.size()) gold[r] = y[t];
      else if (t == y.size()) gold[r] = Vocabulary::kEos;
      else gold[r] = Vocabulary::kPad;
      w[r] = t <= y.size() ? T(1) : T(0);
      out.tokens += t <= y.size();
    }
    StepOut step = decode_step(g, P, enc, state, prev, drop);
    Var ce = g.cross_entropy(step.logits, gold, std::move(w));
    total = total.valid() ? g.add(total, ce) : ce;
    state = std::move(step.state);
    prev = std::move(gold);
  }
  out.loss = g.scale(total, T(1) / static_cast<T>(out.tokens));
  return out;
}

}  // namespace domixt::s2s
