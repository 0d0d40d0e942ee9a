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

// Training schedules: which data each stage sees, how stages chain, and the
// per-stage training loop with early stopping on dev BLEU.
//
//   in-only               [in]
//   out-only              [out]
//   fine-tuning           [out] -> [in]
//   multi-domain          [mix+tags]
//   multi-domain-no-tags  [mix]
//   multi-domain+ft       [mix+tags] -> [in+tags]
//   mixed-ft              [out+tags] -> [mix+tags]
//   mixed-ft-no-tags      [out] -> [mix]
//   mixed-ft+ft           [out+tags] -> [mix+tags] -> [in+tags]
//
// "mix" is the out-of-domain corpus shuffled together with the in-domain
// corpus oversampled to the same size.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "domixt/config.hpp"
#include "domixt/corpus.hpp"
#include "domixt/error.hpp"
#include "domixt/eval.hpp"
#include "domixt/nncore/adam.hpp"
#include "domixt/seq2seq/checkpoint.hpp"
#include "domixt/seq2seq/model.hpp"
#include "domixt/seq2seq/search.hpp"
#include "domixt/subword.hpp"
#include "domixt/util.hpp"

namespace domixt {

enum class StageData { OutOfDomain, InDomain, Mixed };
enum class StageInit { Fresh, FromPriorStage };

inline std::string_view to_string(StageData d) {
  switch (d) {
    case StageData::OutOfDomain: return "out";
    case StageData::InDomain: return "in";
    case StageData::Mixed: return "mix";
  }
  return "?";
}

struct StopRule {
  std::size_t patience = 5;
  std::size_t max_epochs = 30;

  void validate() const {
    if (patience < 1) detail::fail(ErrorCode::ConfigError, "patience must be >= 1");
    if (max_epochs < 1) detail::fail(ErrorCode::ConfigError, "max_epochs must be >= 1");
  }
};

struct Stage {
  StageData data = StageData::OutOfDomain;
  bool tags = false;
  bool oversample = false;                      // only meaningful for Mixed
  StageData dev = StageData::OutOfDomain;       // OutOfDomain or InDomain
  StageInit init = StageInit::Fresh;
  StopRule stop;
};

struct Schedule {
  std::string name;
  std::vector<Stage> stages;
  VocabPolicy::Kind vocab = VocabPolicy::Kind::Mixed;
  bool tags = false;
};

inline const std::vector<std::string>& schedule_names() {
  static const std::vector<std::string> names = {"in-only",          "out-only",         "fine-tuning",
                                                 "multi-domain",     "multi-domain-no-tags", "multi-domain+ft",
                                                 "mixed-ft",         "mixed-ft-no-tags", "mixed-ft+ft"};
  return names;
}

/// The six named splits: {out,in}_{train,dev,test}.
struct CorpusRegistry {
  std::string out_domain = "out";
  std::string in_domain = "in";
  std::map<std::string, ParallelCorpus> splits;

  bool has(const std::string& split) const {
    auto it = splits.find(split);
    return it != splits.end() && !it->second.empty();
  }
  const ParallelCorpus& get(const std::string& split) const {
    if (!has(split)) detail::fail(ErrorCode::MissingCorpus, "corpus '", split, "' is not registered");
    return splits.at(split);
  }
};

inline std::string split_name(StageData d, const char* part) {
  return std::string(d == StageData::InDomain ? "in_" : "out_") + part;
}

inline Schedule make_schedule(const std::string& name, const CorpusRegistry& reg, const StopRule& stop) {
  stop.validate();
  const auto& names = schedule_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    detail::fail(ErrorCode::UnknownSchedule, "unknown schedule '", name, "'");
  }
  Schedule s;
  s.name = name;
  auto stage = [&](StageData data, StageData dev, bool tags, bool from_prior) {
    Stage st;
    st.data = data;
    st.dev = dev;
    st.tags = tags;
    st.oversample = data == StageData::Mixed;
    st.init = from_prior ? StageInit::FromPriorStage : StageInit::Fresh;
    st.stop = stop;
    return st;
  };
  using D = StageData;
  if (name == "in-only") {
    s.vocab = VocabPolicy::Kind::InDomainOnly;
    s.stages = {stage(D::InDomain, D::InDomain, false, false)};
  } else if (name == "out-only") {
    s.vocab = VocabPolicy::Kind::OutOfDomainOnly;
    s.stages = {stage(D::OutOfDomain, D::OutOfDomain, false, false)};
  } else if (name == "fine-tuning") {
    s.vocab = VocabPolicy::Kind::OutOfDomainOnly;
    s.stages = {stage(D::OutOfDomain, D::OutOfDomain, false, false), stage(D::InDomain, D::InDomain, false, true)};
  } else {
    s.vocab = VocabPolicy::Kind::Mixed;
    s.tags = name.find("no-tags") == std::string::npos;
    bool t = s.tags;
    if (name.rfind("multi-domain", 0) == 0) {
      s.stages = {stage(D::Mixed, D::InDomain, t, false)};
    } else {
      s.stages = {stage(D::OutOfDomain, D::OutOfDomain, t, false), stage(D::Mixed, D::InDomain, t, true)};
    }
    if (name.size() > 3 && name.compare(name.size() - 3, 3, "+ft") == 0) {
      s.stages.push_back(stage(D::InDomain, D::InDomain, t, true));
    }
  }
  std::vector<std::string> need;
  for (const auto& st : s.stages) {
    if (st.data == D::Mixed) {
      need.insert(need.end(), {"out_train", "in_train"});
    } else {
      need.push_back(split_name(st.data, "train"));
    }
    need.push_back(split_name(st.dev, "dev"));
  }
  for (const auto& n : need) reg.get(n);
  return s;
}

/// Deterministic child seed for a named purpose.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
  Fnv1a h;
  h.update(std::to_string(seed));
  h.update(":");
  h.update(purpose);
  std::uint64_t x = h.digest();
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  return x;
}

/// Subword models, vocabularies and model-side text for one schedule.
struct PreparedData {
  bool bpe = false;
  BpeModel src_bpe, tgt_bpe;
  Vocabulary src_vocab, tgt_vocab;
  std::map<std::string, ParallelCorpus> splits;  // segmented, tagged when the schedule uses tags
};

inline std::vector<ParallelCorpus> policy_corpora(VocabPolicy::Kind kind, const std::map<std::string, ParallelCorpus>& splits) {
  switch (kind) {
    case VocabPolicy::Kind::OutOfDomainOnly: return {splits.at("out_train")};
    case VocabPolicy::Kind::InDomainOnly: return {splits.at("in_train")};
    case VocabPolicy::Kind::Mixed: return {splits.at("out_train"), splits.at("in_train")};
  }
  return {};
}

/// Learns subwords and vocabularies from the corpora the vocabulary policy
/// allows, then segments (and tags) every registered split.
inline PreparedData prepare_data(const Schedule& s, const CorpusRegistry& reg, const Config& cfg) {
  PreparedData d;
  std::map<std::string, ParallelCorpus> raw;
  for (const auto& [name, c] : reg.splits)
    if (!c.empty()) raw[name] = c;
  for (const char* need : {"out_train", "in_train"}) {
    if (!raw.count(need) && (s.vocab == VocabPolicy::Kind::Mixed ||
                             (s.vocab == VocabPolicy::Kind::OutOfDomainOnly) == (std::string(need) == "out_train"))) {
      detail::fail(ErrorCode::MissingCorpus, "corpus '", need, "' is not registered");
    }
  }
  d.bpe = cfg.use_bpe;
  if (d.bpe) {
    auto learn_from = policy_corpora(s.vocab, raw);
    auto [src, tgt] = learn_bpe(word_counts(learn_from, Side::Source), word_counts(learn_from, Side::Target),
                                cfg.bpe_merges, cfg.bpe_mode);
    d.src_bpe = std::move(src);
    d.tgt_bpe = std::move(tgt);
    BpeEncoder se(d.src_bpe), te(d.tgt_bpe);
    for (auto& [name, c] : raw) c = apply_bpe(se, te, c);
  }
  for (auto& [name, c] : raw) {
    if (name.find("train") != std::string::npos) c = filter_by_length(c, cfg.hp.max_len);
    if (s.tags) c = inject_tags(c);
  }
  VocabPolicy policy = s.vocab == VocabPolicy::Kind::OutOfDomainOnly ? VocabPolicy::out_of_domain_only(reg.out_domain)
                       : s.vocab == VocabPolicy::Kind::InDomainOnly  ? VocabPolicy::in_domain_only(reg.in_domain)
                                                                     : VocabPolicy::mixed();
  auto vocab_from = policy_corpora(s.vocab, raw);
  d.src_vocab = build_vocabulary(vocab_from, Side::Source, cfg.hp.src_vocab, policy);
  d.tgt_vocab = build_vocabulary(vocab_from, Side::Target, cfg.hp.tgt_vocab, policy);
  d.splits = std::move(raw);
  return d;
}

/// Model-side train corpus of one stage. The mixture is fixed once per stage.
inline ParallelCorpus stage_corpus(const Stage& st, const PreparedData& d, std::uint64_t seed) {
  switch (st.data) {
    case StageData::OutOfDomain: return d.splits.at("out_train");
    case StageData::InDomain: return d.splits.at("in_train");
    case StageData::Mixed: {
      const auto& out = d.splits.at("out_train");
      ParallelCorpus in = d.splits.at("in_train");
      if (st.oversample && in.size() < out.size()) in = oversample(in, out.size(), derive_seed(seed, "oversample"));
      return mix(out, in, derive_seed(seed, "mix"));
    }
  }
  return {};
}

/// Id-encoded data one stage trains and validates on.
struct StageInputs {
  std::vector<s2s::TrainPair> train;
  std::vector<s2s::TrainPair> dev;
  std::vector<Tokens> dev_references;  // word-level references for dev BLEU
  const Vocabulary* tgt_vocab = nullptr;
  bool bpe = false;
  std::string joiner = "@@";
};

inline std::vector<s2s::TrainPair> encode_pairs(const ParallelCorpus& c, const Vocabulary& src, const Vocabulary& tgt) {
  std::vector<s2s::TrainPair> out;
  out.reserve(c.size());
  for (const auto& p : c.pairs) out.push_back({src.encode(p.source), tgt.encode(p.target)});
  return out;
}

/// Turns model output ids back into words.
inline Tokens postprocess(const std::vector<int>& ids, const Vocabulary& tgt, bool bpe, std::string_view joiner) {
  Tokens t = tgt.decode(ids);
  if (bpe) t = undo_bpe(t, joiner);
  return strip_tags(t);
}

/// Token-weighted mean teacher-forced NLL, no dropout.
template <class T>
double dev_loss(const s2s::ModelParams<T>& model, const std::vector<s2s::TrainPair>& pairs, std::size_t batch) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (std::size_t b = 0; b < pairs.size(); b += batch) {
    std::vector<s2s::TrainPair> chunk(pairs.begin() + static_cast<std::ptrdiff_t>(b),
                                      pairs.begin() + static_cast<std::ptrdiff_t>(std::min(pairs.size(), b + batch)));
    nn::Graph<T> g(nn::Mode::Eval);
    s2s::Bound<T> P(g, model);
    auto L = s2s::batch_loss(g, P, chunk);
    total += static_cast<double>(g.value(L.loss).data[0]) * static_cast<double>(L.tokens);
    tokens += L.tokens;
  }
  return tokens ? total / static_cast<double>(tokens) : 0.0;
}

/// Batched greedy decoding; row r stops at EOS or 2|source_r| + 5 tokens.
template <class T>
std::vector<std::vector<int>> greedy_batch(const s2s::ModelParams<T>& model, const std::vector<std::vector<int>>& sources,
                                           std::size_t batch) {
  std::vector<std::vector<int>> out(sources.size());
  for (std::size_t b = 0; b < sources.size(); b += batch) {
    std::size_t e = std::min(sources.size(), b + batch);
    std::vector<std::vector<int>> chunk(sources.begin() + static_cast<std::ptrdiff_t>(b),
                                        sources.begin() + static_cast<std::ptrdiff_t>(e));
    nn::Graph<T> g(nn::Mode::Eval);
    s2s::Bound<T> P(g, model);
    auto enc = s2s::encode(g, P, chunk);
    auto state = enc.final_state;
    std::vector<int> prev(chunk.size(), Vocabulary::kBos);
    std::vector<std::size_t> limit(chunk.size());
    std::size_t steps = 0;
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      limit[r] = s2s::default_max_out_len(chunk[r].size());
      steps = std::max(steps, limit[r]);
    }
    std::vector<bool> done(chunk.size(), false);
    for (std::size_t t = 0; t < steps; ++t) {
      auto step = s2s::decode_step(g, P, enc, state, prev);
      const auto& L = g.value(step.logits);
      bool all_done = true;
      for (std::size_t r = 0; r < chunk.size(); ++r) {
        if (done[r]) continue;
        int best = -1;
        for (std::size_t v = 0; v < L.cols(); ++v) {
          if (!s2s::emittable(static_cast<int>(v))) continue;
          if (best < 0 || L.at(r, v) > L.at(r, static_cast<std::size_t>(best))) best = static_cast<int>(v);
        }
        out[b + r].push_back(best);
        prev[r] = best;
        done[r] = best == Vocabulary::kEos || out[b + r].size() >= limit[r];
        all_done = all_done && done[r];
      }
      if (all_done) break;
      state = std::move(step.state);
    }
  }
  return out;
}

template <class T>
double dev_bleu(const s2s::ModelParams<T>& model, const StageInputs& in, std::size_t batch) {
  std::vector<std::vector<int>> sources;
  for (const auto& p : in.dev) sources.push_back(p.source);
  auto ids = greedy_batch(model, sources, batch);
  std::vector<Tokens> hyps;
  for (const auto& h : ids) hyps.push_back(postprocess(h, *in.tgt_vocab, in.bpe, in.joiner));
  return bleu4(hyps, in.dev_references).bleu;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = std::numeric_limits<double>::quiet_NaN();  // NaN for the pre-training row
  double dev_loss = 0.0;
  double dev_bleu = 0.0;
};

inline std::string history_tsv(const std::vector<EpochRecord>& h) {
  std::string s = "epoch\ttrain_loss\tdev_loss\tdev_bleu\n";
  for (const auto& r : h) {
    s += std::to_string(r.epoch) + "\t" + (std::isnan(r.train_loss) ? std::string("nan") : format_fixed(r.train_loss, 6)) +
         "\t" + format_fixed(r.dev_loss, 6) + "\t" + format_fixed(r.dev_bleu, 4) + "\n";
  }
  return s;
}

inline std::vector<EpochRecord> parse_history(const std::string& text) {
  std::vector<EpochRecord> h;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    EpochRecord r;
    std::string tl;
    if (!(ls >> r.epoch >> tl >> r.dev_loss >> r.dev_bleu)) detail::fail(ErrorCode::IoError, "bad history line '", line, "'");
    r.train_loss = tl == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(tl);
    h.push_back(r);
  }
  return h;
}

/// Earliest epoch with the highest dev BLEU, counting the pre-training row as
/// epoch 0. Matches the best-dev-bleu checkpoint choice.
inline std::size_t epochs_to_peak(const std::vector<EpochRecord>& h) {
  std::size_t best = 0;
  double score = -1.0;
  for (const auto& r : h) {
    if (r.dev_bleu > score) {
      score = r.dev_bleu;
      best = r.epoch;
    }
  }
  return best;
}

/// Patience bookkeeping on dev BLEU.
class StopTracker {
 public:
  explicit StopTracker(StopRule rule) : rule_(rule) { rule_.validate(); }

  /// Records one epoch; returns true when it is a new best.
  bool update(std::size_t epoch, double bleu) {
    if (bleu > best_) {
      best_ = bleu;
      peak_ = epoch;
      since_ = 0;
      return true;
    }
    ++since_;
    return false;
  }
  bool should_stop(std::size_t epoch) const { return since_ >= rule_.patience || epoch >= rule_.max_epochs; }
  std::size_t peak_epoch() const { return peak_; }

 private:
  StopRule rule_;
  double best_ = -std::numeric_limits<double>::infinity();
  std::size_t peak_ = 0;
  std::size_t since_ = 0;
};

struct StageResult {
  std::vector<EpochRecord> history;
  s2s::Checkpoint best_loss, best_bleu, last;
  std::size_t peak_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains one stage from `init` with fresh ADAM moments.
inline StageResult run_stage(const StageInputs& in, s2s::ModelParams<float> init, const StopRule& stop,
                             const TrainConfig& train, std::uint64_t seed, const EpochCallback& on_epoch = {}) {
  if (in.train.empty()) detail::fail(ErrorCode::EmptyBatch, "stage has no training pairs");
  if (in.dev.empty()) detail::fail(ErrorCode::EmptyInput, "stage has no dev pairs");
  auto& model = init;
  const auto& hp = model.hp;
  nn::AdamConfig ac = train.adam;
  ac.weight_decay = hp.weight_decay;
  nn::AdamState<float> adam(ac);
  auto params = model.all();
  StopTracker tracker(stop);
  StageResult res;
  const std::size_t dev_batch = std::max<std::size_t>(1, train.dev_batch);

  auto snapshot = [&](s2s::CheckpointTag tag, const EpochRecord& r) {
    s2s::Checkpoint ck;
    ck.params.hp = model.hp;
    for (const auto& [name, p] : model.tensors) ck.params.tensors.emplace(name, nn::Param<float>(p.value));
    ck.tag = tag;
    ck.epoch = r.epoch;
    ck.dev_loss = r.dev_loss;
    ck.dev_bleu = r.dev_bleu;
    return ck;
  };

  EpochRecord start;
  start.dev_loss = dev_loss(model, in.dev, dev_batch);
  start.dev_bleu = dev_bleu(model, in, dev_batch);
  res.history.push_back(start);
  if (on_epoch) on_epoch(start);

  std::vector<std::size_t> order(in.train.size());
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 1;; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffler(derive_seed(seed, "epoch" + std::to_string(epoch)));
    std::shuffle(order.begin(), order.end(), shuffler);
    double loss_sum = 0.0;
    std::size_t tokens = 0, batch_index = 0;
    for (std::size_t b = 0; b < order.size(); b += hp.batch_size, ++batch_index) {
      std::vector<s2s::TrainPair> batch;
      for (std::size_t k = b; k < std::min(order.size(), b + hp.batch_size); ++k) batch.push_back(in.train[order[k]]);
      model.zero_grad();
      nn::Graph<float> g(nn::Mode::Train, derive_seed(seed, "drop" + std::to_string(epoch) + "." + std::to_string(batch_index)));
      s2s::Bound<float> P(g, model);
      auto L = s2s::batch_loss(g, P, batch);
      double loss = g.value(L.loss).data[0];
      if (!std::isfinite(loss)) detail::fail(ErrorCode::DivergenceDetected, "non-finite loss at epoch ", epoch);
      g.backward(L.loss);
      nn::adam_step<float>(params, adam);
      loss_sum += loss * static_cast<double>(L.tokens);
      tokens += L.tokens;
    }
    if (!model.all_finite()) detail::fail(ErrorCode::DivergenceDetected, "non-finite parameters at epoch ", epoch);
    EpochRecord r;
    r.epoch = epoch;
    r.train_loss = loss_sum / static_cast<double>(tokens);
    r.dev_loss = dev_loss(model, in.dev, dev_batch);
    r.dev_bleu = dev_bleu(model, in, dev_batch);
    res.history.push_back(r);
    if (on_epoch) on_epoch(r);
    if (r.dev_loss < best_loss) {
      best_loss = r.dev_loss;
      res.best_loss = snapshot(s2s::CheckpointTag::BestDevLoss, r);
    }
    if (tracker.update(epoch, r.dev_bleu)) res.best_bleu = snapshot(s2s::CheckpointTag::BestDevBleu, r);
    if (tracker.should_stop(epoch)) {
      res.last = snapshot(s2s::CheckpointTag::Final, r);
      break;
    }
  }
  res.peak_epoch = tracker.peak_epoch();
  return res;
}

/// Builds the id-encoded inputs of stage `k` (0-based).
inline StageInputs stage_inputs(const Schedule& s, std::size_t k, const PreparedData& d, const CorpusRegistry& reg,
                                std::uint64_t seed) {
  const Stage& st = s.stages.at(k);
  StageInputs in;
  in.train = encode_pairs(stage_corpus(st, d, derive_seed(seed, "stage" + std::to_string(k + 1))), d.src_vocab, d.tgt_vocab);
  const std::string dev = split_name(st.dev, "dev");
  in.dev = encode_pairs(d.splits.at(dev), d.src_vocab, d.tgt_vocab);
  for (const auto& p : reg.get(dev).pairs) in.dev_references.push_back(p.target);
  in.tgt_vocab = &d.tgt_vocab;
  in.bpe = d.bpe;
  in.joiner = d.tgt_bpe.joiner;
  return in;
}

/// Hyperparameters with vocabulary sizes taken from the built vocabularies.
inline s2s::HyperParams schedule_hparams(const Config& cfg, const PreparedData& d) {
  s2s::HyperParams hp = cfg.hp;
  hp.src_vocab = d.src_vocab.size();
  hp.tgt_vocab = d.tgt_vocab.size();
  return hp;
}

}  // namespace domixt
