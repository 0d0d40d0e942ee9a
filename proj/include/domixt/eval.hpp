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

// Corpus BLEU-4, paired bootstrap resampling, and the results table where a
// score is bold when it belongs to the best system or is not significantly
// worse than it.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "domixt/error.hpp"
#include "domixt/util.hpp"

namespace domixt {

inline constexpr double kSignificanceLevel = 0.05;

/// Per-sentence sufficient statistics; corpus BLEU sums these.
struct BleuStats {
  std::array<long long, 4> matches{};
  std::array<long long, 4> totals{};
  long long cand_len = 0;
  long long ref_len = 0;

  BleuStats& operator+=(const BleuStats& o) {
    for (int n = 0; n < 4; ++n) {
      matches[n] += o.matches[n];
      totals[n] += o.totals[n];
    }
    cand_len += o.cand_len;
    ref_len += o.ref_len;
    return *this;
  }
};

struct BleuScore {
  double bleu = 0.0;  // 0..100
  std::array<double, 4> precisions{};
  double brevity_penalty = 0.0;
  long long cand_len = 0;
  long long ref_len = 0;
};

inline BleuStats sentence_stats(const Tokens& cand, const Tokens& ref) {
  BleuStats s;
  s.cand_len = static_cast<long long>(cand.size());
  s.ref_len = static_cast<long long>(ref.size());
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<std::vector<std::string>, long long> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[Tokens(ref.begin() + i, ref.begin() + i + n)];
    std::map<std::vector<std::string>, long long> cand_counts;
    for (std::size_t i = 0; i + n <= cand.size(); ++i) ++cand_counts[Tokens(cand.begin() + i, cand.begin() + i + n)];
    long long m = 0;
    for (const auto& [g, c] : cand_counts) {
      auto it = ref_counts.find(g);
      if (it != ref_counts.end()) m += std::min(c, it->second);
    }
    s.matches[n - 1] = m;
    s.totals[n - 1] = cand.size() >= n ? static_cast<long long>(cand.size() - n + 1) : 0;
  }
  return s;
}

/// Unsmoothed: any zero n-gram precision gives BLEU 0.
inline BleuScore bleu_from_stats(const BleuStats& s) {
  BleuScore b;
  b.cand_len = s.cand_len;
  b.ref_len = s.ref_len;
  bool zero = false;
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    b.precisions[n] = s.totals[n] > 0 ? static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]) : 0.0;
    if (b.precisions[n] <= 0.0) zero = true;
    else log_sum += std::log(b.precisions[n]);
  }
  if (s.cand_len == 0) b.brevity_penalty = 0.0;
  else if (s.cand_len >= s.ref_len) b.brevity_penalty = 1.0;
  else b.brevity_penalty = std::exp(1.0 - static_cast<double>(s.ref_len) / static_cast<double>(s.cand_len));
  b.bleu = zero ? 0.0 : 100.0 * b.brevity_penalty * std::exp(log_sum / 4.0);
  return b;
}

inline std::vector<BleuStats> corpus_stats(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references) {
  if (candidates.size() != references.size()) {
    detail::fail(ErrorCode::LengthMismatch, candidates.size(), " candidates for ", references.size(), " references");
  }
  if (candidates.empty()) detail::fail(ErrorCode::EmptyInput, "BLEU over an empty corpus");
  std::vector<BleuStats> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) out.push_back(sentence_stats(candidates[i], references[i]));
  return out;
}

inline BleuScore bleu4(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references) {
  BleuStats total;
  for (const auto& s : corpus_stats(candidates, references)) total += s;
  return bleu_from_stats(total);
}

/// "BLEU4 = 45.07 (70.6/42.9/36.4/37.5, BP=1.000)"
inline std::string format_bleu(const BleuScore& b) {
  std::ostringstream os;
  os << "BLEU4 = " << format_fixed(b.bleu, 2) << " (";
  for (int n = 0; n < 4; ++n) os << (n ? "/" : "") << format_fixed(100.0 * b.precisions[n], 1);
  os << ", BP=" << format_fixed(b.brevity_penalty, 3) << ")";
  return os.str();
}

struct SignificanceResult {
  std::string system_a;
  std::string system_b;
  double bleu_a = 0.0;
  double bleu_b = 0.0;
  std::size_t wins_a = 0;
  std::size_t wins_b = 0;
  std::size_t ties = 0;
  std::size_t resamples = 0;
  double p_value = 1.0;
  bool significant = false;
};

/// One scored test set: per-sentence statistics of two systems against the same references.
struct PairedStats {
  std::vector<BleuStats> a;
  std::vector<BleuStats> b;
};

/// Paired bootstrap over one or more test sets. Each resample draws sentence
/// indices with replacement inside every test set (same indices for both
/// systems); the statistic is the mean BLEU over test sets. p is the fraction
/// of resamples in which the observed winner fails to score strictly higher.
inline SignificanceResult bootstrap_significance(const std::vector<PairedStats>& sets, std::size_t resamples,
                                                 std::uint64_t seed) {
  if (sets.empty()) detail::fail(ErrorCode::EmptyInput, "no test sets");
  for (const auto& s : sets) {
    if (s.a.size() != s.b.size()) detail::fail(ErrorCode::LengthMismatch, "system outputs differ in length");
    if (s.a.empty()) detail::fail(ErrorCode::EmptyInput, "empty test set");
  }
  auto mean_bleu = [&](auto pick_a, const std::vector<std::vector<std::size_t>>* idx) {
    double sum = 0.0;
    for (std::size_t k = 0; k < sets.size(); ++k) {
      const auto& v = pick_a ? sets[k].a : sets[k].b;
      BleuStats total;
      if (idx) {
        for (auto i : (*idx)[k]) total += v[i];
      } else {
        for (const auto& s : v) total += s;
      }
      sum += bleu_from_stats(total).bleu;
    }
    return sum / static_cast<double>(sets.size());
  };
  SignificanceResult r;
  r.resamples = resamples;
  r.bleu_a = mean_bleu(true, nullptr);
  r.bleu_b = mean_bleu(false, nullptr);
  const bool a_observed_winner = r.bleu_a >= r.bleu_b;
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> idx(sets.size());
  std::size_t fails = 0;
  for (std::size_t it = 0; it < resamples; ++it) {
    for (std::size_t k = 0; k < sets.size(); ++k) {
      std::uniform_int_distribution<std::size_t> pick(0, sets[k].a.size() - 1);
      idx[k].resize(sets[k].a.size());
      for (auto& i : idx[k]) i = pick(rng);
    }
    double a = mean_bleu(true, &idx);
    double b = mean_bleu(false, &idx);
    if (a > b) ++r.wins_a;
    else if (b > a) ++r.wins_b;
    else ++r.ties;
    bool winner_wins = a_observed_winner ? a > b : b > a;
    if (!winner_wins) ++fails;
  }
  r.p_value = resamples ? static_cast<double>(fails) / static_cast<double>(resamples) : 1.0;
  r.significant = r.p_value < kSignificanceLevel;
  return r;
}

inline SignificanceResult bootstrap_significance(const std::vector<Tokens>& sys_a, const std::vector<Tokens>& sys_b,
                                                 const std::vector<Tokens>& references, std::size_t resamples = 1000,
                                                 std::uint64_t seed = 1) {
  if (sys_a.size() != references.size() || sys_b.size() != references.size()) {
    detail::fail(ErrorCode::LengthMismatch, "system outputs and references differ in length");
  }
  PairedStats ps{corpus_stats(sys_a, references), corpus_stats(sys_b, references)};
  return bootstrap_significance(std::vector<PairedStats>{ps}, resamples, seed);
}

/// One column of the results table. p_vs_best[i] is the p-value of system i
/// against the column's best system (ignored for the best itself).
struct ReportColumn {
  std::string name;
  std::vector<double> scores;
  std::vector<double> p_vs_best;
};

struct EvalReport {
  std::vector<std::string> systems;
  std::vector<ReportColumn> columns;
};

/// Index of the highest score; the first system wins exact ties.
inline std::size_t best_index(const ReportColumn& col) {
  return static_cast<std::size_t>(std::max_element(col.scores.begin(), col.scores.end()) - col.scores.begin());
}

inline std::vector<bool> bold_set(const ReportColumn& col) {
  std::vector<bool> bold(col.scores.size(), false);
  if (col.scores.empty()) return bold;
  std::size_t best = best_index(col);
  for (std::size_t i = 0; i < col.scores.size(); ++i) {
    double p = i < col.p_vs_best.size() ? col.p_vs_best[i] : 0.0;
    bold[i] = i == best || !(p < kSignificanceLevel);
  }
  return bold;
}

/// Markdown table; bold entries are wrapped in `**`.
inline std::string render_report(const EvalReport& report) {
  if (report.systems.empty() || report.columns.empty()) {
    detail::fail(ErrorCode::EmptyInput, "report needs at least one system and one test set");
  }
  std::ostringstream os;
  os << "| System |";
  for (const auto& c : report.columns) os << ' ' << c.name << " |";
  os << "\n|---|";
  for (std::size_t k = 0; k < report.columns.size(); ++k) os << "---:|";
  os << '\n';
  std::vector<std::vector<bool>> bold;
  for (const auto& c : report.columns) {
    if (c.scores.size() != report.systems.size()) detail::fail(ErrorCode::LengthMismatch, "column ", c.name, " has wrong length");
    bold.push_back(bold_set(c));
  }
  for (std::size_t i = 0; i < report.systems.size(); ++i) {
    os << "| " << report.systems[i] << " |";
    for (std::size_t k = 0; k < report.columns.size(); ++k) {
      std::string v = format_fixed(report.columns[k].scores[i], 2);
      os << ' ' << (bold[k][i] ? "**" + v + "**" : v) << " |";
    }
    os << '\n';
  }
  return os.str();
}

/// Outputs of every system on one test set, used to assemble a report column.
struct TestSetOutputs {
  std::string name;
  std::vector<Tokens> references;
  std::vector<std::vector<Tokens>> hypotheses;  // per system
};

/// Scores every system, finds the best, and tests each other system against
/// it. When `average` is set and there are several test sets, an extra column
/// holds the mean BLEU with significance from the stratified bootstrap.
inline EvalReport build_report(const std::vector<std::string>& systems, const std::vector<TestSetOutputs>& sets,
                               std::size_t resamples, std::uint64_t seed, bool average) {
  EvalReport rep;
  rep.systems = systems;
  std::vector<std::vector<std::vector<BleuStats>>> stats(sets.size());
  for (std::size_t k = 0; k < sets.size(); ++k) {
    if (sets[k].hypotheses.size() != systems.size()) detail::fail(ErrorCode::LengthMismatch, "test set ", sets[k].name, ": system count");
    for (const auto& h : sets[k].hypotheses) stats[k].push_back(corpus_stats(h, sets[k].references));
  }
  auto column = [&](const std::string& name, const std::vector<std::size_t>& members) {
    ReportColumn col;
    col.name = name;
    for (std::size_t i = 0; i < systems.size(); ++i) {
      double sum = 0.0;
      for (auto k : members) {
        BleuStats total;
        for (const auto& s : stats[k][i]) total += s;
        sum += bleu_from_stats(total).bleu;
      }
      col.scores.push_back(sum / static_cast<double>(members.size()));
    }
    std::size_t best = best_index(col);
    col.p_vs_best.assign(systems.size(), 1.0);
    for (std::size_t i = 0; i < systems.size(); ++i) {
      if (i == best) continue;
      std::vector<PairedStats> ps;
      for (auto k : members) ps.push_back({stats[k][best], stats[k][i]});
      col.p_vs_best[i] = bootstrap_significance(ps, resamples, seed).p_value;
    }
    return col;
  };
  std::vector<std::size_t> all;
  for (std::size_t k = 0; k < sets.size(); ++k) {
    rep.columns.push_back(column(sets[k].name, {k}));
    all.push_back(k);
  }
  if (average && sets.size() > 1) rep.columns.push_back(column("average", all));
  return rep;
}

}  // namespace domixt
