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

// On-disk runs. Everything lives under one output directory:
//
//   data/                          generated or copied corpora, lexicon.tsv
//   <schedule>/<seed>/
//     src.bpe tgt.bpe src.vocab tgt.vocab provenance.txt
//     stage<k>/checkpoints/{best-dev-loss,best-dev-bleu,final}.ckpt
//     stage<k>/history.tsv  stage<k>/manifest.txt
//     test/<split>.hyp  test/scores.tsv  test/manifest.txt
//   .stage-cache/<key>/            stages shared by several schedules
//   report.md
//
// A stage whose manifest is complete and whose key matches is skipped, which
// makes interrupted experiments resumable.

#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "domixt/config.hpp"
#include "domixt/corpus.hpp"
#include "domixt/error.hpp"
#include "domixt/eval.hpp"
#include "domixt/schedules.hpp"
#include "domixt/seq2seq/checkpoint.hpp"
#include "domixt/seq2seq/search.hpp"
#include "domixt/synthgen.hpp"
#include "domixt/util.hpp"

namespace domixt {

namespace fs = std::filesystem;

using Logger = std::function<void(const std::string&)>;

inline const std::vector<std::string>& split_names() {
  static const std::vector<std::string> names = {"out_train", "in_train", "out_dev", "in_dev", "out_test", "in_test"};
  return names;
}

// ---- key=value manifests ----

using Manifest = std::map<std::string, std::string>;

inline std::string serialize_manifest(const Manifest& m) {
  std::string s;
  for (const auto& [k, v] : m) s += k + "=" + v + "\n";
  return s;
}

inline std::optional<Manifest> read_manifest(const fs::path& path) {
  if (!fs::exists(path)) return std::nullopt;
  Manifest m;
  for (const auto& line : read_lines(path)) {
    auto eq = line.find('=');
    if (eq != std::string::npos) m[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return m;
}

inline bool manifest_complete(const fs::path& path, const std::string& key) {
  auto m = read_manifest(path);
  return m && m->count("status") && m->at("status") == "complete" && m->count("key") && m->at("key") == key;
}

// ---- corpora ----

/// Loads the six splits from `<stem>.src/.tgt` pairs.
inline CorpusRegistry load_registry(const Config& cfg) {
  CorpusRegistry reg;
  reg.out_domain = cfg.data.out_domain;
  reg.in_domain = cfg.data.in_domain;
  for (const auto& split : split_names()) {
    auto it = cfg.data.stems.find(split);
    if (it == cfg.data.stems.end()) continue;
    const std::string& domain = split.rfind("in_", 0) == 0 ? reg.in_domain : reg.out_domain;
    auto c = load_corpus(it->second + ".src", it->second + ".tgt", domain);
    c.name = split;
    reg.splits[split] = std::move(c);
  }
  return reg;
}

inline CorpusRegistry registry_from_synth(const SynthData& d) {
  CorpusRegistry reg;
  reg.out_domain = d.lexicon.out_domain;
  reg.in_domain = d.lexicon.in_domain;
  for (const auto* c : {&d.out_train, &d.in_train, &d.out_dev, &d.in_dev, &d.out_test, &d.in_test})
    reg.splits[c->corpus.name] = c->corpus;
  return reg;
}

struct ExperimentData {
  CorpusRegistry registry;
  std::optional<Lexicon> lexicon;
};

/// Synthetic data is generated into `<root>/data`; explicit corpora are read in place.
inline ExperimentData materialize_data(const Config& cfg, const fs::path& root) {
  ExperimentData ed;
  if (!cfg.data.synthetic) {
    ed.registry = load_registry(cfg);
    return ed;
  }
  SynthSpec spec = cfg.synth;
  spec.out_domain = cfg.data.out_domain;
  spec.in_domain = cfg.data.in_domain;
  auto d = generate(spec);
  fs::path dir = root / "data";
  if (!fs::exists(dir / "lexicon.tsv")) write_synth(d, dir);
  ed.registry = registry_from_synth(d);
  ed.lexicon = d.lexicon;
  return ed;
}

// ---- stage cache ----

/// Completed stages keyed by content hash, shared across schedules and threads.
class StageCache {
 public:
  explicit StageCache(fs::path dir, bool enabled = true) : dir_(std::move(dir)), enabled_(enabled) {}

  fs::path path(const std::string& key) const { return dir_ / key; }

  /// Blocks while another thread computes `key`. Returns true if the entry
  /// exists; otherwise the caller owns `key` and must call release().
  bool acquire(const std::string& key) {
    if (!enabled_) return false;
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !busy_.count(key); });
    if (fs::exists(path(key) / "complete")) return true;
    busy_.insert(key);
    return false;
  }
  void release(const std::string& key) {
    if (!enabled_) return;
    {
      std::lock_guard lock(mu_);
      busy_.erase(key);
    }
    cv_.notify_all();
  }
  /// Stores a finished stage directory.
  void store(const std::string& key, const fs::path& stage_dir) {
    if (!enabled_) return;
    fs::path dst = path(key);
    fs::remove_all(dst);
    fs::create_directories(dst);
    fs::copy(stage_dir / "checkpoints", dst / "checkpoints", fs::copy_options::recursive);
    fs::copy_file(stage_dir / "history.tsv", dst / "history.tsv");
    write_file_atomic(dst / "complete", key + "\n");
  }
  void restore(const std::string& key, const fs::path& stage_dir) const {
    fs::create_directories(stage_dir);
    fs::remove_all(stage_dir / "checkpoints");
    fs::copy(path(key) / "checkpoints", stage_dir / "checkpoints", fs::copy_options::recursive);
    fs::copy_file(path(key) / "history.tsv", stage_dir / "history.tsv", fs::copy_options::overwrite_existing);
  }

 private:
  fs::path dir_;
  bool enabled_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::set<std::string> busy_;
};

// ---- one schedule ----

struct RunOptions {
  bool force = false;
  Logger log;
  StageCache* cache = nullptr;
};

inline fs::path run_dir(const fs::path& root, const std::string& schedule, std::uint64_t seed) {
  return root / schedule / std::to_string(seed);
}

inline const char* checkpoint_file(s2s::CheckpointTag t) {
  switch (t) {
    case s2s::CheckpointTag::BestDevLoss: return "best-dev-loss.ckpt";
    case s2s::CheckpointTag::BestDevBleu: return "best-dev-bleu.ckpt";
    case s2s::CheckpointTag::Final: return "final.ckpt";
  }
  return "?";
}

struct ScheduleRun {
  Schedule schedule;
  PreparedData data;
  fs::path dir;
  std::vector<fs::path> stage_dirs;
  std::vector<std::string> stage_keys;
};

inline std::string train_config_text(const TrainConfig& t) {
  std::ostringstream os;
  os.precision(17);
  os << "alpha=" << t.adam.alpha << " beta1=" << t.adam.beta1 << " beta2=" << t.adam.beta2 << " eps=" << t.adam.epsilon
     << " dev_batch=" << t.dev_batch;
  return os.str();
}

/// Writes `content` unless an identical file exists; differing content is an
/// error so earlier results are never replaced silently.
inline void write_or_verify(const fs::path& path, const std::string& content) {
  if (fs::exists(path)) {
    if (read_file(path) == content) return;
    detail::fail(ErrorCode::ConfigError, path.string(), " was produced from different inputs; rerun with --force");
  }
  write_file_atomic(path, content);
}

inline ScheduleRun run_schedule(const std::string& name, const CorpusRegistry& reg, const Config& cfg, std::uint64_t seed,
                                const fs::path& root, const RunOptions& opt = {}) {
  auto log = [&](const std::string& m) {
    if (opt.log) opt.log(m);
  };
  StopRule stop{cfg.train.patience, cfg.train.max_epochs};
  ScheduleRun run;
  run.schedule = make_schedule(name, reg, stop);
  run.dir = run_dir(root, name, seed);
  if (opt.force) fs::remove_all(run.dir);
  fs::create_directories(run.dir);
  run.data = prepare_data(run.schedule, reg, cfg);
  const auto& d = run.data;
  if (d.bpe) {
    write_or_verify(run.dir / "src.bpe", serialize_bpe(d.src_bpe));
    write_or_verify(run.dir / "tgt.bpe", serialize_bpe(d.tgt_bpe));
  }
  write_or_verify(run.dir / "src.vocab", d.src_vocab.serialize());
  write_or_verify(run.dir / "tgt.vocab", d.tgt_vocab.serialize());
  const s2s::HyperParams hp = schedule_hparams(cfg, d);

  Manifest prov;
  prov["schedule"] = name;
  prov["seed"] = std::to_string(seed);
  prov["vocab_policy"] = std::string(to_string(run.schedule.vocab));
  prov["tags"] = run.schedule.tags ? "true" : "false";
  prov["out_domain"] = reg.out_domain;
  prov["in_domain"] = reg.in_domain;
  for (const auto& [split, c] : reg.splits) prov["corpus." + split] = corpus_fingerprint(c);
  {
    Fnv1a a, b;
    a.update(d.src_vocab.serialize());
    b.update(d.tgt_vocab.serialize());
    prov["src_vocab"] = a.hex();
    prov["tgt_vocab"] = b.hex();
  }

  std::string prior_key = "fresh:" + std::to_string(derive_seed(seed, "init"));
  std::optional<s2s::ModelParams<float>> prior;
  for (std::size_t k = 0; k < run.schedule.stages.size(); ++k) {
    const Stage& st = run.schedule.stages[k];
    const std::uint64_t stage_seed = derive_seed(seed, "stage" + std::to_string(k + 1));
    StageInputs in = stage_inputs(run.schedule, k, d, reg, seed);
    Fnv1a h;
    h.update_line("domixt-stage-2");
    h.update_line(d.src_vocab.serialize());
    h.update_line(d.tgt_vocab.serialize());
    h.update_line(d.bpe ? serialize_bpe(d.src_bpe) + serialize_bpe(d.tgt_bpe) : "no-bpe");
    for (const auto& p : in.train) {
      for (int id : p.source) h.update(std::to_string(id) + " ");
      h.update("|");
      for (int id : p.target) h.update(std::to_string(id) + " ");
      h.update("\n");
    }
    for (const auto& p : in.dev) {
      for (int id : p.source) h.update(std::to_string(id) + " ");
      h.update("\n");
    }
    for (const auto& r : in.dev_references) h.update_line(join_tokens(r));
    h.update_line(hp.to_text());
    h.update_line(train_config_text(cfg.train));
    h.update_line("patience=" + std::to_string(st.stop.patience) + " max_epochs=" + std::to_string(st.stop.max_epochs));
    h.update_line("seed=" + std::to_string(stage_seed));
    h.update_line(st.init == StageInit::Fresh ? "fresh:" + std::to_string(derive_seed(seed, "init")) : "prior:" + prior_key);
    const std::string key = h.hex();

    fs::path sdir = run.dir / ("stage" + std::to_string(k + 1));
    run.stage_dirs.push_back(sdir);
    run.stage_keys.push_back(key);
    const std::string label = name + "/" + std::to_string(seed) + "/stage" + std::to_string(k + 1);

    if (!manifest_complete(sdir / "manifest.txt", key)) {
      if (fs::exists(sdir / "manifest.txt") && read_manifest(sdir / "manifest.txt")->count("key") &&
          read_manifest(sdir / "manifest.txt")->at("key") != key) {
        detail::fail(ErrorCode::ConfigError, sdir.string(), " holds a stage trained on different inputs; rerun with --force");
      }
      bool hit = opt.cache && opt.cache->acquire(key);
      if (hit) {
        log(label + ": reusing cached stage " + key);
        opt.cache->restore(key, sdir);
      } else {
        try {
          s2s::ModelParams<float> init;
          if (st.init == StageInit::Fresh) {
            init = s2s::init_params<float>(hp, derive_seed(seed, "init"));
          } else {
            if (!prior) prior = s2s::load_checkpoint(run.stage_dirs[k - 1] / "checkpoints" / "best-dev-bleu.ckpt").params;
            init = *prior;
          }
          log(label + ": training on " + std::to_string(in.train.size()) + " pairs");
          auto res = run_stage(in, std::move(init), st.stop, cfg.train, stage_seed, [&](const EpochRecord& r) {
            log(label + ": epoch " + std::to_string(r.epoch) + " dev_loss " + format_fixed(r.dev_loss, 4) + " dev_bleu " +
                format_fixed(r.dev_bleu, 2));
          });
          fs::remove_all(sdir);
          fs::create_directories(sdir / "checkpoints");
          for (const auto* ck : {&res.best_loss, &res.best_bleu, &res.last})
            s2s::save_checkpoint(*ck, sdir / "checkpoints" / checkpoint_file(ck->tag));
          write_file_atomic(sdir / "history.tsv", history_tsv(res.history));
          if (opt.cache) opt.cache->store(key, sdir);
        } catch (...) {
          if (opt.cache) opt.cache->release(key);
          throw;
        }
        if (opt.cache) opt.cache->release(key);
      }
      auto hist = parse_history(read_file(sdir / "history.tsv"));
      Manifest m;
      m["schedule"] = name;
      m["stage"] = std::to_string(k + 1);
      m["seed"] = std::to_string(seed);
      m["stage_seed"] = std::to_string(stage_seed);
      m["data"] = std::string(to_string(st.data));
      m["dev"] = std::string(to_string(st.dev));
      m["tags"] = st.tags ? "true" : "false";
      m["oversample"] = st.oversample ? "true" : "false";
      m["init"] = st.init == StageInit::Fresh ? "fresh" : "stage" + std::to_string(k) + "/best-dev-bleu";
      m["train_pairs"] = std::to_string(in.train.size());
      m["epochs"] = std::to_string(hist.empty() ? 0 : hist.back().epoch);
      m["peak_epoch"] = std::to_string(epochs_to_peak(hist));
      m["key"] = key;
      m["status"] = "complete";
      write_file_atomic(sdir / "manifest.txt", serialize_manifest(m));
    } else {
      log(label + ": already complete");
    }
    prior.reset();
    prior_key = key;
    prov["stage" + std::to_string(k + 1) + ".key"] = key;
  }
  std::string text = serialize_manifest(prov) + "\n[config]\n" + cfg.to_text();
  write_file_atomic(run.dir / "provenance.txt", text);
  return run;
}

// ---- test evaluation ----

struct TestScores {
  std::map<std::string, double> bleu;                 // split -> BLEU
  std::map<std::string, double> ambiguous_accuracy;   // split -> accuracy (synthetic data only)
  std::size_t final_stage_peak = 0;
};

inline std::vector<s2s::CheckpointTag> all_checkpoint_tags() {
  return {s2s::CheckpointTag::BestDevLoss, s2s::CheckpointTag::BestDevBleu, s2s::CheckpointTag::Final};
}

/// Ensemble-decodes the test splits with the final stage's checkpoint triple.
inline std::vector<Tokens> translate_split(const std::vector<const s2s::ModelParams<float>*>& models,
                                           const ParallelCorpus& model_side, const PreparedData& d, std::size_t beam) {
  std::vector<Tokens> out;
  out.reserve(model_side.size());
  for (const auto& p : model_side.pairs) {
    auto ids = d.src_vocab.encode(p.source);
    auto h = s2s::ensemble_decode<float>(models, ids, beam, s2s::default_max_out_len(ids.size()));
    out.push_back(postprocess(h.output(), d.tgt_vocab, d.bpe, d.tgt_bpe.joiner));
  }
  return out;
}

inline TestScores evaluate_run(const ScheduleRun& run, const CorpusRegistry& reg, const Config& cfg,
                               const std::optional<Lexicon>& lexicon, const RunOptions& opt = {}) {
  fs::path tdir = run.dir / "test";
  const std::string key = run.stage_keys.back() + ":beam" + std::to_string(cfg.hp.beam_size);
  TestScores ts;
  ts.final_stage_peak = epochs_to_peak(parse_history(read_file(run.stage_dirs.back() / "history.tsv")));
  std::vector<std::string> splits;
  for (const char* s : {"in_test", "out_test"})
    if (reg.has(s)) splits.push_back(s);

  if (!manifest_complete(tdir / "manifest.txt", key)) {
    std::vector<s2s::ModelParams<float>> members;
    for (auto tag : all_checkpoint_tags())
      members.push_back(s2s::load_checkpoint(run.stage_dirs.back() / "checkpoints" / checkpoint_file(tag)).params);
    std::vector<const s2s::ModelParams<float>*> ptrs;
    for (const auto& m : members) ptrs.push_back(&m);
    for (const auto& s : splits) {
      if (opt.log) opt.log(run.schedule.name + "/" + run.dir.filename().string() + ": decoding " + s);
      auto hyps = translate_split(ptrs, run.data.splits.at(s), run.data, cfg.hp.beam_size);
      std::string text;
      for (const auto& h : hyps) text += join_tokens(h) + "\n";
      write_file_atomic(tdir / (s + ".hyp"), text);
    }
    write_file_atomic(tdir / "manifest.txt", serialize_manifest({{"key", key}, {"status", "complete"}}));
  }
  std::string tsv = "split\tbleu\tambiguous_accuracy\n";
  for (const auto& s : splits) {
    std::vector<Tokens> hyps, refs, srcs;
    for (const auto& line : read_lines(tdir / (s + ".hyp"))) hyps.push_back(split_tokens(line));
    for (const auto& p : reg.get(s).pairs) {
      refs.push_back(p.target);
      srcs.push_back(p.source);
    }
    hyps.resize(refs.size());
    ts.bleu[s] = bleu4(hyps, refs).bleu;
    std::string acc = "nan";
    if (lexicon) {
      const std::string& domain = s.rfind("in_", 0) == 0 ? reg.in_domain : reg.out_domain;
      ts.ambiguous_accuracy[s] = ambiguous_accuracy(*lexicon, domain, srcs, hyps);
      acc = format_fixed(ts.ambiguous_accuracy[s], 4);
    }
    tsv += s + "\t" + format_fixed(ts.bleu[s], 4) + "\t" + acc + "\n";
  }
  write_file_atomic(tdir / "scores.tsv", tsv);
  return ts;
}

// ---- report ----

inline std::vector<Tokens> read_hypotheses(const fs::path& path, std::size_t n) {
  std::vector<Tokens> h;
  for (const auto& line : read_lines(path)) h.push_back(split_tokens(line));
  h.resize(n);
  return h;
}

/// Per-seed bold-tie tables plus seed means, from the files under `root`.
inline std::string experiment_report(const Config& cfg, const CorpusRegistry& reg, const std::optional<Lexicon>& lexicon,
                                     const fs::path& root) {
  std::vector<std::string> splits;
  for (const char* s : {"in_test", "out_test"})
    if (reg.has(s)) splits.push_back(s);
  auto column_name = [&](const std::string& s) {
    return (s.rfind("in_", 0) == 0 ? reg.in_domain : reg.out_domain) + " test";
  };
  std::ostringstream os;
  os << "# Domain adaptation results\n\n";
  os << "Corpus BLEU-4 of the self-ensembled final-stage checkpoints (beam " << cfg.hp.beam_size
     << "). Bold marks the best system and every system not significantly worse than it (paired bootstrap, "
     << cfg.resamples << " resamples, p >= " << format_fixed(kSignificanceLevel, 2) << ").\n\n";
  os << "Training pairs: " << reg.out_domain << " " << (reg.has("out_train") ? reg.get("out_train").size() : 0) << ", "
     << reg.in_domain << " " << (reg.has("in_train") ? reg.get("in_train").size() : 0) << ".\n\n";

  std::map<std::string, std::map<std::string, std::vector<double>>> bleu_by;  // system -> split -> per seed
  std::map<std::string, std::map<std::string, std::vector<double>>> acc_by;
  std::map<std::string, std::vector<double>> peak_by;
  for (auto seed : cfg.seeds) {
    std::vector<TestSetOutputs> sets;
    for (const auto& s : splits) {
      TestSetOutputs t;
      t.name = column_name(s);
      for (const auto& p : reg.get(s).pairs) t.references.push_back(p.target);
      for (const auto& sys : cfg.schedules)
        t.hypotheses.push_back(read_hypotheses(run_dir(root, sys, seed) / "test" / (s + ".hyp"), t.references.size()));
      sets.push_back(std::move(t));
    }
    auto rep = build_report(cfg.schedules, sets, cfg.resamples, derive_seed(seed, "bootstrap"), true);
    os << "## Seed " << seed << "\n\n" << render_report(rep) << "\n";
    for (std::size_t i = 0; i < cfg.schedules.size(); ++i) {
      const auto& sys = cfg.schedules[i];
      for (std::size_t k = 0; k < splits.size(); ++k) bleu_by[sys][splits[k]].push_back(rep.columns[k].scores[i]);
      fs::path rd = run_dir(root, sys, seed);
      std::size_t last = 0;
      while (fs::exists(rd / ("stage" + std::to_string(last + 1)) / "history.tsv")) ++last;
      if (last) peak_by[sys].push_back(static_cast<double>(
                    epochs_to_peak(parse_history(read_file(rd / ("stage" + std::to_string(last)) / "history.tsv")))));
      if (lexicon) {
        for (std::size_t k = 0; k < splits.size(); ++k) {
          std::vector<Tokens> srcs;
          for (const auto& p : reg.get(splits[k]).pairs) srcs.push_back(p.source);
          const std::string& domain = splits[k].rfind("in_", 0) == 0 ? reg.in_domain : reg.out_domain;
          acc_by[sys][splits[k]].push_back(ambiguous_accuracy(*lexicon, domain, srcs, sets[k].hypotheses[i]));
        }
      }
    }
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  os << "## Mean over " << cfg.seeds.size() << " seed(s)\n\n| System |";
  for (const auto& s : splits) os << ' ' << column_name(s) << " BLEU |";
  if (lexicon)
    for (const auto& s : splits) os << ' ' << column_name(s) << " ambiguous acc. |";
  os << " final-stage epochs to peak |\n|---|";
  std::size_t ncols = splits.size() * (lexicon ? 2 : 1) + 1;
  for (std::size_t k = 0; k < ncols; ++k) os << "---:|";
  os << "\n";
  for (const auto& sys : cfg.schedules) {
    os << "| " << sys << " |";
    for (const auto& s : splits) os << ' ' << format_fixed(mean(bleu_by[sys][s]), 2) << " |";
    if (lexicon)
      for (const auto& s : splits) os << ' ' << format_fixed(100.0 * mean(acc_by[sys][s]), 1) << " |";
    os << ' ' << format_fixed(mean(peak_by[sys]), 1) << " |\n";
  }
  return os.str();
}

// ---- the full matrix ----

struct ExperimentOptions {
  std::size_t jobs = 1;
  bool force = false;
  bool use_cache = true;
  Logger log;
};

struct CellResult {
  std::string schedule;
  std::uint64_t seed = 0;
  TestScores scores;
};

/// Runs every configured schedule for every seed, then writes report.md.
/// Cells run on up to `jobs` worker threads; each cell owns its run directory.
inline std::vector<CellResult> run_experiment(const Config& cfg, const ExperimentOptions& opt) {
  const auto& known = schedule_names();
  for (const auto& s : cfg.schedules)
    if (std::find(known.begin(), known.end(), s) == known.end()) detail::fail(ErrorCode::UnknownSchedule, "unknown schedule '", s, "'");
  if (cfg.seeds.empty()) detail::fail(ErrorCode::ConfigError, "no seeds configured");
  fs::path root = cfg.out_dir;
  fs::create_directories(root);
  if (opt.force) fs::remove_all(root / ".stage-cache");
  auto ed = materialize_data(cfg, root);
  write_file_atomic(root / "experiment.cfg", cfg.to_text());
  StageCache cache(root / ".stage-cache", opt.use_cache);

  std::mutex log_mu;
  Logger log = [&](const std::string& m) {
    if (!opt.log) return;
    std::lock_guard lock(log_mu);
    opt.log(m);
  };
  std::vector<CellResult> cells;
  for (auto seed : cfg.seeds)
    for (const auto& s : cfg.schedules) cells.push_back({s, seed, {}});

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < cells.size();) {
      try {
        RunOptions ro{opt.force, log, &cache};
        auto run = run_schedule(cells[i].schedule, ed.registry, cfg, cells[i].seed, root, ro);
        cells[i].scores = evaluate_run(run, ed.registry, cfg, ed.lexicon, ro);
      } catch (...) {
        std::lock_guard lock(log_mu);
        if (!error) error = std::current_exception();
        next = cells.size();
      }
    }
  };
  std::size_t jobs = std::clamp<std::size_t>(opt.jobs, 1, cells.size());
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  write_file_atomic(root / "report.md", experiment_report(cfg, ed.registry, ed.lexicon, root));
  return cells;
}

}  // namespace domixt
