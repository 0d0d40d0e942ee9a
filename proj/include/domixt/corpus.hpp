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

// Parallel corpora and the transforms applied before training: length
// filtering, domain tagging, oversampling, mixing and vocabulary building.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "domixt/error.hpp"
#include "domixt/util.hpp"

namespace domixt {

inline bool valid_domain_name(std::string_view d) {
  if (d.empty()) return false;
  return std::all_of(d.begin(), d.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
  });
}

/// The source-side token that marks a sentence as belonging to `domain`.
inline std::string domain_tag(std::string_view domain) {
  return "<2" + std::string(domain) + ">";
}

/// True for tokens shaped like `<2name>` with a valid domain name.
inline bool is_domain_tag(std::string_view tok) {
  if (tok.size() < 4 || tok.substr(0, 2) != "<2" || tok.back() != '>') return false;
  return valid_domain_name(tok.substr(2, tok.size() - 3));
}

struct SentencePair {
  Tokens source;
  Tokens target;
  std::string domain;

  friend bool operator==(const SentencePair&, const SentencePair&) = default;
  friend auto operator<=>(const SentencePair&, const SentencePair&) = default;
};

struct ParallelCorpus {
  std::string name;
  std::vector<SentencePair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

/// Loads a pre-tokenized parallel corpus, one sentence per line on each side.
inline ParallelCorpus load_corpus(const std::filesystem::path& source_path,
                                  const std::filesystem::path& target_path,
                                  const std::string& domain) {
  if (!valid_domain_name(domain)) detail::fail(ErrorCode::InvalidSpec, "invalid domain name '", domain, "'");
  auto src = read_lines(source_path);
  auto tgt = read_lines(target_path);
  if (src.empty() && tgt.empty()) {
    detail::fail(ErrorCode::EmptyFile, source_path.string(), " and ", target_path.string(), " are empty");
  }
  if (src.size() != tgt.size()) {
    detail::fail(ErrorCode::LineCountMismatch, source_path.string(), " has ", src.size(), " lines, ",
                 target_path.string(), " has ", tgt.size());
  }
  ParallelCorpus c;
  c.name = source_path.stem().string();
  c.pairs.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!valid_utf8(src[i]) || !valid_utf8(tgt[i])) {
      detail::fail(ErrorCode::EncodingError, "line ", i + 1, " is not valid UTF-8");
    }
    c.pairs.push_back({split_tokens(src[i]), split_tokens(tgt[i]), domain});
  }
  return c;
}

/// Writes the two sides as `<stem>.src` / `<stem>.tgt`.
inline void save_corpus(const ParallelCorpus& c, const std::filesystem::path& stem) {
  std::string src, tgt;
  for (const auto& p : c.pairs) {
    src += join_tokens(p.source);
    src += '\n';
    tgt += join_tokens(p.target);
    tgt += '\n';
  }
  auto s = stem;
  auto t = stem;
  s += ".src";
  t += ".tgt";
  write_file_atomic(s, src);
  write_file_atomic(t, tgt);
}

inline std::string corpus_fingerprint(const ParallelCorpus& c) {
  Fnv1a h;
  for (const auto& p : c.pairs) {
    h.update_line(p.domain);
    h.update_line(join_tokens(p.source));
    h.update_line(join_tokens(p.target));
  }
  return h.hex();
}

/// Drops pairs where either side is longer than max_tokens (or empty).
inline ParallelCorpus filter_by_length(const ParallelCorpus& c, std::size_t max_tokens = 80) {
  if (max_tokens < 1) detail::fail(ErrorCode::InvalidSpec, "max_tokens must be >= 1");
  ParallelCorpus out;
  out.name = c.name;
  for (const auto& p : c.pairs) {
    if (p.source.empty() || p.target.empty()) continue;
    if (p.source.size() <= max_tokens && p.target.size() <= max_tokens) out.pairs.push_back(p);
  }
  return out;
}

inline ParallelCorpus inject_tags(const ParallelCorpus& c) {
  ParallelCorpus out;
  out.name = c.name;
  out.pairs.reserve(c.size());
  for (const auto& p : c.pairs) {
    if (!p.source.empty() && is_domain_tag(p.source.front())) {
      detail::fail(ErrorCode::AlreadyTagged, "corpus '", c.name, "' already starts with ", p.source.front());
    }
    SentencePair q;
    q.domain = p.domain;
    q.target = p.target;
    q.source.reserve(p.source.size() + 1);
    q.source.push_back(domain_tag(p.domain));
    q.source.insert(q.source.end(), p.source.begin(), p.source.end());
    out.pairs.push_back(std::move(q));
  }
  return out;
}

/// Removes every domain-tag token (used before word-level scoring).
inline Tokens strip_tags(const Tokens& toks) {
  Tokens out;
  out.reserve(toks.size());
  for (const auto& t : toks)
    if (!is_domain_tag(t)) out.push_back(t);
  return out;
}

/// Full copies of `small` plus a seeded sample without replacement for the remainder.
inline ParallelCorpus oversample(const ParallelCorpus& small, std::size_t target_size, std::uint64_t seed) {
  if (small.empty()) detail::fail(ErrorCode::EmptyInput, "cannot oversample an empty corpus");
  if (target_size < small.size()) {
    detail::fail(ErrorCode::TargetTooSmall, "target ", target_size, " < corpus size ", small.size());
  }
  ParallelCorpus out;
  out.name = small.name;
  out.pairs.reserve(target_size);
  std::size_t copies = target_size / small.size();
  for (std::size_t k = 0; k < copies; ++k) out.pairs.insert(out.pairs.end(), small.pairs.begin(), small.pairs.end());
  std::size_t remainder = target_size - copies * small.size();
  if (remainder > 0) {
    std::vector<std::size_t> idx(small.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> picked;
    picked.reserve(remainder);
    std::sample(idx.begin(), idx.end(), std::back_inserter(picked), remainder, rng);
    for (auto i : picked) out.pairs.push_back(small.pairs[i]);
  }
  return out;
}

/// Concatenation followed by a seeded shuffle.
inline ParallelCorpus mix(const ParallelCorpus& a, const ParallelCorpus& b, std::uint64_t seed) {
  ParallelCorpus out;
  out.name = a.name + "+" + b.name;
  out.pairs.reserve(a.size() + b.size());
  out.pairs.insert(out.pairs.end(), a.pairs.begin(), a.pairs.end());
  out.pairs.insert(out.pairs.end(), b.pairs.begin(), b.pairs.end());
  std::mt19937_64 rng(seed);
  std::shuffle(out.pairs.begin(), out.pairs.end(), rng);
  return out;
}

inline std::map<std::string, std::size_t> count_by_domain(const ParallelCorpus& c) {
  std::map<std::string, std::size_t> counts;
  for (const auto& p : c.pairs) ++counts[p.domain];
  return counts;
}

enum class Side { Source, Target };

/// Token frequency profile of one side of several corpora.
inline std::map<std::string, std::size_t> token_counts(const std::vector<ParallelCorpus>& corpora, Side side) {
  std::map<std::string, std::size_t> counts;
  for (const auto& c : corpora)
    for (const auto& p : c.pairs)
      for (const auto& t : (side == Side::Source ? p.source : p.target)) ++counts[t];
  return counts;
}

/// Which data a vocabulary is built from. `domain` names the one corpus a
/// single-domain policy accepts.
struct VocabPolicy {
  enum class Kind { OutOfDomainOnly, Mixed, InDomainOnly };
  Kind kind = Kind::Mixed;
  std::string domain;

  static VocabPolicy out_of_domain_only(std::string out_domain) { return {Kind::OutOfDomainOnly, std::move(out_domain)}; }
  static VocabPolicy mixed() { return {Kind::Mixed, {}}; }
  static VocabPolicy in_domain_only(std::string in_domain) { return {Kind::InDomainOnly, std::move(in_domain)}; }
};

inline std::string_view to_string(VocabPolicy::Kind k) {
  switch (k) {
    case VocabPolicy::Kind::OutOfDomainOnly: return "out-of-domain-only";
    case VocabPolicy::Kind::Mixed: return "mixed";
    case VocabPolicy::Kind::InDomainOnly: return "in-domain-only";
  }
  return "?";
}

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary() : Vocabulary(Tokens{}) {}

  /// `tokens` excludes the reserved entries, which always occupy ids 0..3.
  explicit Vocabulary(const Tokens& tokens) {
    id_to_token_ = {"<pad>", "<s>", "</s>", "<unk>"};
    for (const auto& t : tokens) {
      if (token_to_id_.count(t) || t == "<pad>" || t == "<s>" || t == "</s>" || t == "<unk>") continue;
      id_to_token_.push_back(t);
    }
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) token_to_id_[id_to_token_[i]] = static_cast<int>(i);
  }

  std::size_t size() const { return id_to_token_.size(); }
  const std::string& token(int id) const { return id_to_token_.at(static_cast<std::size_t>(id)); }
  bool contains(const std::string& t) const { return token_to_id_.count(t) > 0; }
  int id(const std::string& t) const {
    auto it = token_to_id_.find(t);
    return it == token_to_id_.end() ? kUnk : it->second;
  }
  const Tokens& tokens() const { return id_to_token_; }

  std::vector<int> encode(const Tokens& toks) const {
    std::vector<int> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(id(t));
    return ids;
  }
  /// Stops at EOS; PAD and BOS are skipped.
  Tokens decode(const std::vector<int>& ids) const {
    Tokens out;
    for (int i : ids) {
      if (i == kEos) break;
      if (i == kPad || i == kBos) continue;
      out.push_back(token(i));
    }
    return out;
  }

  std::string serialize() const {
    std::string s;
    for (const auto& t : id_to_token_) {
      s += t;
      s += '\n';
    }
    return s;
  }
  void save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }
  static Vocabulary load(const std::filesystem::path& path) {
    auto lines = read_lines(path);
    if (lines.size() < kReserved || lines[0] != "<pad>" || lines[1] != "<s>" || lines[2] != "</s>" ||
        lines[3] != "<unk>") {
      detail::fail(ErrorCode::IoError, path.string(), " is not a vocabulary file");
    }
    return Vocabulary(Tokens(lines.begin() + kReserved, lines.end()));
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.id_to_token_ == b.id_to_token_; }

 private:
  Tokens id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

inline Vocabulary build_vocabulary(const std::vector<ParallelCorpus>& corpora, Side side, std::size_t cap,
                                   const VocabPolicy& policy) {
  if (corpora.empty()) detail::fail(ErrorCode::EmptyInput, "no corpora given");
  if (policy.kind != VocabPolicy::Kind::Mixed) {
    bool ok = corpora.size() == 1 && !corpora.front().empty();
    if (ok)
      for (const auto& p : corpora.front().pairs) ok = ok && p.domain == policy.domain;
    if (!ok) {
      detail::fail(ErrorCode::PolicyViolation, "policy ", to_string(policy.kind),
                   " requires exactly the '", policy.domain, "' corpus");
    }
  }
  auto counts = token_counts(corpora, side);
  Tokens tags;
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (const auto& [tok, n] : counts) {
    if (is_domain_tag(tok)) tags.push_back(tok);
    else ranked.emplace_back(tok, n);
  }
  if (cap <= Vocabulary::kReserved + tags.size()) {
    detail::fail(ErrorCode::CapTooSmall, "cap ", cap, " leaves no room beyond ", Vocabulary::kReserved,
                 " reserved ids and ", tags.size(), " tags");
  }
  auto by_freq = [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  };
  std::stable_sort(ranked.begin(), ranked.end(), by_freq);
  std::size_t room = cap - Vocabulary::kReserved - tags.size();
  if (ranked.size() > room) ranked.resize(room);
  for (const auto& t : tags) ranked.emplace_back(t, counts[t]);
  std::stable_sort(ranked.begin(), ranked.end(), by_freq);
  Tokens toks;
  toks.reserve(ranked.size());
  for (auto& [t, n] : ranked) toks.push_back(t);
  return Vocabulary(toks);
}

}  // namespace domixt
