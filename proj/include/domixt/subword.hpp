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

// Byte pair encoding: greedy merge learning over a word frequency profile and
// per-word segmentation by replaying the merges in priority order.

#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "domixt/corpus.hpp"
#include "domixt/error.hpp"
#include "domixt/util.hpp"

namespace domixt {

using WordCounts = std::map<std::string, std::size_t>;
using SymbolPair = std::pair<std::string, std::string>;

inline constexpr std::string_view kEndOfWord = "</w>";
inline constexpr std::string_view kBpeHeader = "#version: domixt-bpe-1";

enum class BpeMode { Separate, Joint };

struct BpeModel {
  std::vector<SymbolPair> merges;  // priority = position
  std::string joiner = "@@";
  std::size_t num_merges = 0;

  friend bool operator==(const BpeModel&, const BpeModel&) = default;
};

/// Splits a UTF-8 word into code points and appends the end-of-word symbol.
inline std::vector<std::string> word_to_symbols(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    auto c = static_cast<unsigned char>(word[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 1;
    len = std::min(len, word.size() - i);
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  out.emplace_back(kEndOfWord);
  return out;
}

namespace detail {

struct BpeWord {
  std::vector<std::string> symbols;
  std::size_t count;
};

inline void add_pairs(const BpeWord& w, std::size_t word_index, std::map<SymbolPair, long long>& counts,
                      std::map<SymbolPair, std::set<std::size_t>>& where, long long sign) {
  for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
    SymbolPair p{w.symbols[i], w.symbols[i + 1]};
    counts[p] += sign * static_cast<long long>(w.count);
    if (sign > 0) where[p].insert(word_index);
  }
}

inline void merge_in_place(std::vector<std::string>& syms, const SymbolPair& p) {
  std::vector<std::string> out;
  out.reserve(syms.size());
  for (std::size_t i = 0; i < syms.size(); ++i) {
    if (i + 1 < syms.size() && syms[i] == p.first && syms[i + 1] == p.second) {
      out.push_back(syms[i] + syms[i + 1]);
      ++i;
    } else {
      out.push_back(syms[i]);
    }
  }
  syms = std::move(out);
}

}  // namespace detail

/// Learns up to `num_merges` rules from one word frequency profile. Domain tags
/// are atomic and never enter the profile.
inline BpeModel learn_bpe(const WordCounts& profile, std::size_t num_merges) {
  std::vector<detail::BpeWord> words;
  for (const auto& [w, n] : profile) {
    if (n == 0 || w.empty() || is_domain_tag(w)) continue;
    words.push_back({word_to_symbols(w), n});
  }
  if (words.empty()) detail::fail(ErrorCode::EmptyProfile, "BPE profile has no words");

  std::map<SymbolPair, long long> counts;
  std::map<SymbolPair, std::set<std::size_t>> where;
  for (std::size_t i = 0; i < words.size(); ++i) detail::add_pairs(words[i], i, counts, where, +1);

  BpeModel model;
  model.num_merges = num_merges;
  while (model.merges.size() < num_merges) {
    // std::map iterates pairs lexicographically, so the first maximum wins ties.
    const SymbolPair* best = nullptr;
    long long best_count = 1;
    for (const auto& [p, n] : counts) {
      if (n > best_count) {
        best = &p;
        best_count = n;
      }
    }
    if (best == nullptr) break;
    SymbolPair rule = *best;
    std::set<std::size_t> affected = where[rule];
    for (auto wi : affected) {
      detail::add_pairs(words[wi], wi, counts, where, -1);
      detail::merge_in_place(words[wi].symbols, rule);
      detail::add_pairs(words[wi], wi, counts, where, +1);
    }
    for (auto it = counts.begin(); it != counts.end();) {
      if (it->second <= 0) {
        where.erase(it->first);
        it = counts.erase(it);
      } else {
        ++it;
      }
    }
    model.merges.push_back(std::move(rule));
  }
  return model;
}

/// Learns a source and a target model. In joint mode both sides share one
/// model learned over the union of the two profiles.
inline std::pair<BpeModel, BpeModel> learn_bpe(const WordCounts& source_profile, const WordCounts& target_profile,
                                               std::size_t num_merges, BpeMode mode) {
  if (mode == BpeMode::Separate) return {learn_bpe(source_profile, num_merges), learn_bpe(target_profile, num_merges)};
  WordCounts joint = source_profile;
  for (const auto& [w, n] : target_profile) joint[w] += n;
  auto m = learn_bpe(joint, num_merges);
  return {m, m};
}

inline WordCounts word_counts(const std::vector<ParallelCorpus>& corpora, Side side) {
  WordCounts wc;
  for (const auto& [tok, n] : token_counts(corpora, side)) wc[tok] = n;
  return wc;
}

/// Segments words by replaying merges in priority order. Build once and reuse;
/// reads are const and safe to share across threads.
class BpeEncoder {
 public:
  explicit BpeEncoder(BpeModel model) : model_(std::move(model)) {
    for (std::size_t i = 0; i < model_.merges.size(); ++i) rank_.emplace(model_.merges[i], i);
  }

  const BpeModel& model() const { return model_; }

  /// Internal symbols of one word, including the end-of-word marker when it survives as its own symbol.
  std::vector<std::string> segment_word(std::string_view word) const {
    auto syms = word_to_symbols(word);
    while (syms.size() > 1) {
      std::size_t best_rank = SIZE_MAX;
      const SymbolPair* best = nullptr;
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        auto it = rank_.find(SymbolPair{syms[i], syms[i + 1]});
        if (it != rank_.end() && it->second < best_rank) {
          best_rank = it->second;
          best = &it->first;
        }
      }
      if (best == nullptr) break;
      detail::merge_in_place(syms, *best);
    }
    return syms;
  }

  Tokens apply(const Tokens& sentence) const {
    Tokens out;
    out.reserve(sentence.size() * 2);
    for (const auto& word : sentence) {
      if (is_domain_tag(word)) {
        out.push_back(word);
        continue;
      }
      auto syms = segment_word(word);
      if (syms.back() == kEndOfWord) {
        syms.pop_back();
      } else {
        syms.back().resize(syms.back().size() - kEndOfWord.size());
      }
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size()) out.push_back(syms[i] + model_.joiner);
        else out.push_back(syms[i]);
      }
    }
    return out;
  }

 private:
  struct PairHash {
    std::size_t operator()(const SymbolPair& p) const {
      std::hash<std::string> h;
      return h(p.first) * 1000003u ^ h(p.second);
    }
  };

  BpeModel model_;
  std::unordered_map<SymbolPair, std::size_t, PairHash> rank_;
};

inline Tokens apply_bpe(const BpeModel& model, const Tokens& sentence) { return BpeEncoder(model).apply(sentence); }

inline ParallelCorpus apply_bpe(const BpeEncoder& source, const BpeEncoder& target, const ParallelCorpus& c) {
  ParallelCorpus out;
  out.name = c.name;
  out.pairs.reserve(c.size());
  for (const auto& p : c.pairs) out.pairs.push_back({source.apply(p.source), target.apply(p.target), p.domain});
  return out;
}

/// Glues every joiner-terminated piece onto the piece that follows it.
inline Tokens undo_bpe(const Tokens& sentence, std::string_view joiner = "@@") {
  Tokens out;
  std::string pending;
  bool open = false;
  for (const auto& piece : sentence) {
    bool continues = !joiner.empty() && std::string_view(piece).ends_with(joiner);
    if (continues) {
      pending.append(piece, 0, piece.size() - joiner.size());
      open = true;
    } else {
      pending += piece;
      out.push_back(std::move(pending));
      pending.clear();
      open = false;
    }
  }
  if (open && !pending.empty()) out.push_back(std::move(pending));
  return out;
}

inline std::string serialize_bpe(const BpeModel& m) {
  std::string s(kBpeHeader);
  s += '\n';
  for (const auto& [a, b] : m.merges) {
    s += a;
    s += ' ';
    s += b;
    s += '\n';
  }
  return s;
}

inline void save_bpe(const BpeModel& m, const std::filesystem::path& path) { write_file_atomic(path, serialize_bpe(m)); }

inline BpeModel load_bpe(const std::filesystem::path& path, std::string joiner = "@@") {
  auto lines = read_lines(path);
  if (lines.empty() || lines[0] != kBpeHeader) detail::fail(ErrorCode::IoError, path.string(), " lacks the BPE header");
  BpeModel m;
  m.joiner = std::move(joiner);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto parts = split_tokens(lines[i]);
    if (parts.size() != 2) detail::fail(ErrorCode::IoError, path.string(), ":", i + 1, ": expected two symbols");
    m.merges.emplace_back(parts[0], parts[1]);
  }
  m.num_merges = m.merges.size();
  return m;
}

}  // namespace domixt
