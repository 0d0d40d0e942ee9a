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

// Seeded two-domain toy translation task.
//
// Source words come in three classes:
//   s<i>  shared     -> T_s<i> in both domains
//   k<i>  ambiguous  -> A_k<i> out of domain, B_k<i> in domain
//   x<i>  exclusive  -> only occurs in one domain; out-of-domain words map to
//                       B_x<i>, in-domain words to A_x<i>
// Exclusive words borrow the other domain's marker so that both domains draw
// on one character inventory and subword models learned on either domain can
// spell every word.
//
// Targets are word-by-word translations with random adjacent swaps. Optional
// noise corrupts in-domain training targets only.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "domixt/corpus.hpp"
#include "domixt/error.hpp"
#include "domixt/util.hpp"

namespace domixt {

struct SynthSpec {
  std::size_t shared_vocab = 60;
  std::size_t ambiguous_vocab = 20;
  std::size_t domain_exclusive_vocab = 10;
  std::size_t min_len = 3;
  std::size_t max_len = 7;
  std::size_t out_size = 20000;
  std::size_t in_size = 1000;
  std::size_t dev_size = 200;
  std::size_t test_size = 200;
  double noise_rate = 0.0;
  double swap_prob = 0.2;
  double zipf_tilt = 0.0;  // 0 = uniform token sampling
  std::string out_domain = "out";
  std::string in_domain = "in";
  std::uint64_t seed = 1;

  void validate() const {
    auto bad = [](const char* what) { detail::fail(ErrorCode::InvalidSpec, what); };
    if (shared_vocab + ambiguous_vocab == 0) bad("need shared or ambiguous vocabulary");
    if (min_len == 0 || min_len > max_len) bad("sentence length range must satisfy 1 <= min_len <= max_len");
    if (out_size == 0 || in_size == 0 || dev_size == 0 || test_size == 0) bad("corpus sizes must be positive");
    if (!(noise_rate >= 0.0 && noise_rate < 1.0)) bad("noise_rate must be in [0, 1)");
    if (!(swap_prob >= 0.0 && swap_prob <= 1.0)) bad("swap_prob must be in [0, 1]");
    if (zipf_tilt < 0.0) bad("zipf_tilt must be non-negative");
    if (!valid_domain_name(out_domain) || !valid_domain_name(in_domain) || out_domain == in_domain) {
      bad("domain names must be distinct and match [a-z0-9_-]+");
    }
  }
};

struct LexiconEntry {
  std::string out_translation;
  std::string in_translation;
};

struct Lexicon {
  std::string out_domain;
  std::string in_domain;
  std::map<std::string, LexiconEntry> entries;
  Tokens shared, ambiguous, out_exclusive, in_exclusive;

  const std::string& translate(const std::string& domain, const std::string& token) const {
    auto it = entries.find(token);
    if (it == entries.end()) detail::fail(ErrorCode::UnknownToken, "token '", token, "' is not in the lexicon");
    if (domain == out_domain) return it->second.out_translation;
    if (domain == in_domain) return it->second.in_translation;
    detail::fail(ErrorCode::UnknownToken, "unknown domain '", domain, "'");
  }
  bool is_ambiguous(const std::string& token) const {
    auto it = entries.find(token);
    return it != entries.end() && it->second.out_translation != it->second.in_translation;
  }

  std::string to_tsv() const {
    std::string s;
    for (const auto& [tok, e] : entries) s += tok + "\t" + e.out_translation + "\t" + e.in_translation + "\n";
    return s;
  }
};

inline Lexicon make_lexicon(const SynthSpec& spec) {
  Lexicon lex;
  lex.out_domain = spec.out_domain;
  lex.in_domain = spec.in_domain;
  for (std::size_t i = 0; i < spec.shared_vocab; ++i) {
    std::string w = "s" + std::to_string(i);
    lex.entries[w] = {"T_" + w, "T_" + w};
    lex.shared.push_back(w);
  }
  for (std::size_t i = 0; i < spec.ambiguous_vocab; ++i) {
    std::string w = "k" + std::to_string(i);
    lex.entries[w] = {"A_" + w, "B_" + w};
    lex.ambiguous.push_back(w);
  }
  for (std::size_t i = 0; i < 2 * spec.domain_exclusive_vocab; ++i) {
    std::string w = "x" + std::to_string(i);
    bool out = i < spec.domain_exclusive_vocab;
    std::string t = (out ? "B_" : "A_") + w;
    lex.entries[w] = {t, t};
    (out ? lex.out_exclusive : lex.in_exclusive).push_back(w);
  }
  return lex;
}

/// Ground-truth word-by-word translation, before reordering and noise.
inline Tokens oracle_translate(const Lexicon& lex, const std::string& domain, const Tokens& source) {
  Tokens out;
  out.reserve(source.size());
  for (const auto& t : source) out.push_back(lex.translate(domain, t));
  return out;
}

struct SynthCorpus {
  ParallelCorpus corpus;
  std::vector<std::vector<std::size_t>> swaps;  // per pair: positions i where target i, i+1 were exchanged
};

struct SynthData {
  Lexicon lexicon;
  SynthCorpus out_train, in_train, out_dev, out_test, in_dev, in_test;
};

namespace detail {

inline SynthCorpus generate_split(const SynthSpec& spec, const Lexicon& lex, const std::string& domain,
                                  const std::string& name, std::size_t size, bool noisy, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::mt19937_64 rng(seq);
  Tokens vocab = lex.shared;
  vocab.insert(vocab.end(), lex.ambiguous.begin(), lex.ambiguous.end());
  const auto& excl = domain == lex.out_domain ? lex.out_exclusive : lex.in_exclusive;
  vocab.insert(vocab.end(), excl.begin(), excl.end());
  std::vector<double> weights(vocab.size());
  for (std::size_t i = 0; i < vocab.size(); ++i) weights[i] = 1.0 / std::pow(static_cast<double>(i + 1), spec.zipf_tilt);
  std::discrete_distribution<std::size_t> pick_token(weights.begin(), weights.end());
  std::uniform_int_distribution<std::size_t> pick_len(spec.min_len, spec.max_len);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  Tokens target_vocab;
  for (const auto& w : vocab) target_vocab.push_back(lex.translate(domain, w));
  std::uniform_int_distribution<std::size_t> pick_target(0, target_vocab.size() - 1);

  SynthCorpus out;
  out.corpus.name = name;
  out.corpus.pairs.reserve(size);
  for (std::size_t n = 0; n < size; ++n) {
    SentencePair p;
    p.domain = domain;
    std::size_t len = pick_len(rng);
    for (std::size_t i = 0; i < len; ++i) p.source.push_back(vocab[pick_token(rng)]);
    p.target = oracle_translate(lex, domain, p.source);
    std::vector<std::size_t> swapped;
    for (std::size_t i = 0; i + 1 < p.target.size();) {
      if (coin(rng) < spec.swap_prob) {
        std::swap(p.target[i], p.target[i + 1]);
        swapped.push_back(i);
        i += 2;
      } else {
        i += 1;
      }
    }
    if (noisy) {
      for (auto& t : p.target)
        if (coin(rng) < spec.noise_rate) t = target_vocab[pick_target(rng)];
    }
    out.corpus.pairs.push_back(std::move(p));
    out.swaps.push_back(std::move(swapped));
  }
  return out;
}

}  // namespace detail

inline SynthData generate(const SynthSpec& spec) {
  spec.validate();
  SynthData d;
  d.lexicon = make_lexicon(spec);
  const auto& L = d.lexicon;
  const auto &od = spec.out_domain, &id = spec.in_domain;
  bool noisy = spec.noise_rate > 0.0;
  d.out_train = detail::generate_split(spec, L, od, "out_train", spec.out_size, false, 1);
  d.in_train = detail::generate_split(spec, L, id, "in_train", spec.in_size, noisy, 2);
  d.out_dev = detail::generate_split(spec, L, od, "out_dev", spec.dev_size, false, 3);
  d.out_test = detail::generate_split(spec, L, od, "out_test", spec.test_size, false, 4);
  d.in_dev = detail::generate_split(spec, L, id, "in_dev", spec.dev_size, false, 5);
  d.in_test = detail::generate_split(spec, L, id, "in_test", spec.test_size, false, 6);
  return d;
}

/// Writes `<split>.src/.tgt` for all six splits plus `lexicon.tsv`.
inline void write_synth(const SynthData& d, const std::filesystem::path& dir) {
  for (const auto* c : {&d.out_train, &d.in_train, &d.out_dev, &d.out_test, &d.in_dev, &d.in_test})
    save_corpus(c->corpus, dir / c->corpus.name);
  write_file_atomic(dir / "lexicon.tsv", d.lexicon.to_tsv());
}

inline Lexicon load_lexicon(const std::filesystem::path& path, std::string out_domain, std::string in_domain) {
  Lexicon lex;
  lex.out_domain = std::move(out_domain);
  lex.in_domain = std::move(in_domain);
  for (const auto& line : read_lines(path)) {
    if (line.empty()) continue;
    auto a = line.find('\t');
    auto b = line.find('\t', a + 1);
    if (a == std::string::npos || b == std::string::npos) detail::fail(ErrorCode::IoError, path.string(), ": bad lexicon line");
    lex.entries[line.substr(0, a)] = {line.substr(a + 1, b - a - 1), line.substr(b + 1)};
  }
  return lex;
}

/// Fraction of ambiguous source-token occurrences whose translation for
/// `domain` appears in the hypothesis, clipped per token like n-gram counts.
inline double ambiguous_accuracy(const Lexicon& lex, const std::string& domain, const std::vector<Tokens>& sources,
                                 const std::vector<Tokens>& hypotheses) {
  if (sources.size() != hypotheses.size()) detail::fail(ErrorCode::LengthMismatch, "sources vs hypotheses");
  std::size_t total = 0, hit = 0;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    std::map<std::string, std::size_t> want;
    for (const auto& t : strip_tags(sources[i]))
      if (lex.is_ambiguous(t)) ++want[lex.translate(domain, t)];
    std::map<std::string, std::size_t> have;
    for (const auto& t : hypotheses[i]) ++have[t];
    for (const auto& [t, n] : want) {
      total += n;
      hit += std::min(n, have[t]);
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 1.0;
}

}  // namespace domixt
