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

// Greedy, beam and checkpoint-ensemble decoding.
//
// An ensemble decodes all members in lockstep; the next-token distribution is
// the arithmetic mean of the members' softmax outputs. A single member reduces
// to plain beam search.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "domixt/corpus.hpp"
#include "domixt/error.hpp"
#include "domixt/seq2seq/model.hpp"

namespace domixt::s2s {

struct Hypothesis {
  std::vector<int> tokens;  // generated ids, EOS included when finished
  double log_prob = 0.0;
  bool finished = false;

  /// Length-normalized score used to rank complete hypotheses.
  double score() const { return tokens.empty() ? log_prob : log_prob / static_cast<double>(tokens.size()); }
  /// Hypothesis tokens without the trailing EOS.
  std::vector<int> output() const {
    std::vector<int> out = tokens;
    if (finished && !out.empty()) out.pop_back();
    return out;
  }
};

inline std::size_t default_max_out_len(std::size_t source_len) { return 2 * source_len + 5; }

/// PAD and BOS are never generated.
inline bool emittable(int id) { return id != Vocabulary::kPad && id != Vocabulary::kBos; }

/// Lockstep decoder over one or more models for a single source sentence.
template <class T>
class EnsembleStepper {
 public:
  EnsembleStepper(const std::vector<const ModelParams<T>*>& models, const std::vector<int>& source) {
    if (models.empty()) detail::fail(ErrorCode::EmptyInput, "ensemble needs at least one model");
    for (const auto* m : models) {
      if (!m->hp.same_architecture(models.front()->hp)) {
        detail::fail(ErrorCode::HyperParamMismatch, "ensemble members differ in architecture");
      }
    }
    for (const auto* m : models) {
      auto member = std::make_unique<Member>(*m);
      member->enc = encode(member->graph, member->bound, {source});
      member->state = member->enc.final_state;
      members_.push_back(std::move(member));
    }
    vocab_ = models.front()->hp.tgt_vocab;
  }

  std::size_t vocab() const { return vocab_; }

  /// Averaged next-token probabilities for each row; prev[r] continues parent[r].
  std::vector<std::vector<double>> step(const std::vector<int>& parents, const std::vector<int>& prev) {
    std::vector<std::vector<double>> avg(prev.size(), std::vector<double>(vocab_, 0.0));
    for (auto& m : members_) {
      auto& g = m->graph;
      std::vector<LstmState> state;
      for (const auto& s : m->state) state.push_back({g.rows(s.h, parents), g.rows(s.c, parents)});
      std::vector<int> zeros(prev.size(), 0);
      Encoded enc = gather_rows(g, m->enc, zeros);
      StepOut out = decode_step(g, m->bound, enc, state, prev);
      const auto& P = g.value(g.softmax(out.logits));
      for (std::size_t r = 0; r < prev.size(); ++r)
        for (std::size_t v = 0; v < vocab_; ++v) avg[r][v] += static_cast<double>(P.at(r, v));
      m->state = std::move(out.state);
    }
    const double n = static_cast<double>(members_.size());
    for (auto& row : avg)
      for (auto& p : row) p /= n;
    return avg;
  }

 private:
  struct Member {
    explicit Member(const ModelParams<T>& m) : graph(nn::Mode::Eval), bound(graph, m) {}
    Graph<T> graph;
    Bound<T> bound;
    Encoded enc;
    std::vector<LstmState> state;
  };
  std::vector<std::unique_ptr<Member>> members_;
  std::size_t vocab_ = 0;
};

/// Picks the most probable emittable token at every step.
template <class T>
Hypothesis greedy_decode(const ModelParams<T>& model, const std::vector<int>& source, std::size_t max_out_len) {
  EnsembleStepper<T> stepper({&model}, source);
  Hypothesis h;
  int prev = Vocabulary::kBos;
  for (std::size_t t = 0; t < max_out_len; ++t) {
    auto dist = stepper.step({0}, {prev});
    int best = -1;
    for (std::size_t v = 0; v < dist[0].size(); ++v) {
      if (!emittable(static_cast<int>(v))) continue;
      if (best < 0 || dist[0][v] > dist[0][static_cast<std::size_t>(best)]) best = static_cast<int>(v);
    }
    h.tokens.push_back(best);
    h.log_prob += std::log(dist[0][static_cast<std::size_t>(best)]);
    prev = best;
    if (best == Vocabulary::kEos) {
      h.finished = true;
      break;
    }
  }
  return h;
}

/// Beam search whose beam shrinks as hypotheses finish. Candidates are ranked
/// by cumulative log probability during search; the returned hypothesis is the
/// best length-normalized one among finished hypotheses and those still live
/// when the length limit is reached.
template <class T>
Hypothesis ensemble_decode(const std::vector<const ModelParams<T>*>& models, const std::vector<int>& source,
                           std::size_t beam_size, std::size_t max_out_len) {
  if (beam_size == 0) detail::fail(ErrorCode::ConfigError, "beam_size must be >= 1");
  EnsembleStepper<T> stepper(models, source);
  std::vector<Hypothesis> live(1);
  std::vector<Hypothesis> finished;
  std::vector<int> parents{0};
  std::vector<int> prev{Vocabulary::kBos};

  for (std::size_t t = 0; t < max_out_len && !live.empty(); ++t) {
    auto dist = stepper.step(parents, prev);
    struct Cand {
      double logp;
      std::size_t parent;
      int token;
    };
    std::vector<Cand> cands;
    cands.reserve(live.size() * stepper.vocab());
    for (std::size_t k = 0; k < live.size(); ++k)
      for (std::size_t v = 0; v < stepper.vocab(); ++v)
        if (emittable(static_cast<int>(v))) cands.push_back({live[k].log_prob + std::log(dist[k][v]), k, static_cast<int>(v)});
    std::size_t room = beam_size - finished.size();
    std::size_t keep = std::min(room, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Cand& a, const Cand& b) {
                        if (a.logp != b.logp) return a.logp > b.logp;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis> next;
    parents.clear();
    prev.clear();
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& c = cands[i];
      Hypothesis h = live[c.parent];
      h.tokens.push_back(c.token);
      h.log_prob = c.logp;
      if (c.token == Vocabulary::kEos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        parents.push_back(static_cast<int>(c.parent));
        prev.push_back(c.token);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
    if (finished.size() >= beam_size) break;
  }

  std::vector<Hypothesis> pool = finished;
  pool.insert(pool.end(), live.begin(), live.end());
  if (pool.empty()) return {};
  auto best = std::max_element(pool.begin(), pool.end(), [](const Hypothesis& a, const Hypothesis& b) {
    return a.score() < b.score();
  });
  return *best;
}

template <class T>
Hypothesis beam_search(const ModelParams<T>& model, const std::vector<int>& source, std::size_t beam_size,
                       std::size_t max_out_len) {
  return ensemble_decode<T>({&model}, source, beam_size, max_out_len);
}

}  // namespace domixt::s2s
