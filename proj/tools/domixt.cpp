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

// domixt command line. Exit codes: 0 ok, 2 configuration error, 3 data
// error, 4 training error, 64 usage error.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "domixt/config.hpp"
#include "domixt/corpus.hpp"
#include "domixt/eval.hpp"
#include "domixt/experiment.hpp"
#include "domixt/schedules.hpp"
#include "domixt/seq2seq/checkpoint.hpp"
#include "domixt/seq2seq/search.hpp"
#include "domixt/subword.hpp"
#include "domixt/synthgen.hpp"

namespace fs = std::filesystem;
using namespace domixt;

namespace {

constexpr int kExitUsage = 64;

int exit_code(ErrorClass c) {
  switch (c) {
    case ErrorClass::Config: return 2;
    case ErrorClass::Data: return 3;
    case ErrorClass::Training: return 4;
  }
  return 1;
}

void log_line(const std::string& msg) {
  using clock = std::chrono::system_clock;
  std::time_t t = clock::to_time_t(clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%H:%M:%S", std::localtime(&t));
  std::cerr << "[" << buf << "] " << msg << std::endl;
}

struct ConfigArgs {
  std::string path;
  std::vector<std::string> sets;
  std::string out_dir;

  void attach(CLI::App* app) {
    app->add_option("--config", path, "Config file");
    app->add_option("--set", sets, "Override, e.g. --set train.max_epochs=10")->take_all();
    app->add_option("--out-dir", out_dir, "Output directory");
  }
  Config load() const {
    Config c = path.empty() ? Config{} : load_config(path);
    for (const auto& kv : sets) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) detail::fail(ErrorCode::ConfigError, "--set expects section.key=value, got '", kv, "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!out_dir.empty()) c.out_dir = out_dir;
    c.hp.validate();
    c.synth.validate();
    return c;
  }
};

std::vector<std::string> read_text(const std::string& path) {
  if (path == "-") {
    std::vector<std::string> lines;
    for (std::string l; std::getline(std::cin, l);) lines.push_back(l);
    return lines;
  }
  return read_lines(path);
}

void write_text(const std::string& path, const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) s += l + "\n";
  if (path.empty() || path == "-") std::cout << s;
  else write_file_atomic(path, s);
}

std::vector<Tokens> read_token_lines(const std::string& path) {
  std::vector<Tokens> out;
  for (const auto& l : read_text(path)) out.push_back(split_tokens(l));
  return out;
}

/// "stem" or "stem:domain".
ParallelCorpus load_stem(const std::string& spec, const std::string& default_domain) {
  auto colon = spec.rfind(':');
  std::string stem = colon == std::string::npos ? spec : spec.substr(0, colon);
  std::string domain = colon == std::string::npos ? default_domain : spec.substr(colon + 1);
  auto c = load_corpus(stem + ".src", stem + ".tgt", domain);
  c.name = fs::path(stem).filename().string();
  return c;
}

/// Refuses to replace an existing output unless forced.
void guard_output(const std::string& path, bool force) {
  if (!path.empty() && path != "-" && fs::exists(path) && !force) {
    detail::fail(ErrorCode::ConfigError, path, " exists; pass --force to replace it");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain adaptation workbench for attentional NMT"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate the synthetic two-domain task");
  ConfigArgs synth_cfg;
  synth_cfg.attach(synth);
  bool synth_force = false;
  synth->add_flag("--force", synth_force, "Replace existing files");

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Filter, tag, oversample and mix corpora");
  std::string prep_in, prep_domain = "in", prep_out, prep_mix;
  std::size_t prep_max_len = 80, prep_oversample = 0;
  std::uint64_t prep_seed = 1;
  bool prep_tag = false, prep_force = false;
  prepare->add_option("--input", prep_in, "Input corpus stem[:domain]")->required();
  prepare->add_option("--domain", prep_domain, "Domain of the input corpus");
  prepare->add_option("--output", prep_out, "Output corpus stem")->required();
  prepare->add_option("--max-len", prep_max_len, "Drop pairs longer than this");
  prepare->add_flag("--tag", prep_tag, "Prepend the <2domain> tag to sources");
  prepare->add_option("--oversample", prep_oversample, "Oversample to this many pairs");
  prepare->add_option("--mix", prep_mix, "Shuffle together with this corpus stem[:domain]");
  prepare->add_option("--seed", prep_seed, "Seed for oversampling and mixing");
  prepare->add_flag("--force", prep_force, "Replace existing files");

  // learn-bpe
  auto* learn = app.add_subcommand("learn-bpe", "Learn BPE merges");
  std::vector<std::string> learn_in;
  std::size_t learn_merges = 500;
  std::string learn_mode = "separate", learn_out;
  bool learn_force = false;
  learn->add_option("--input", learn_in, "Corpus stems")->required();
  learn->add_option("--merges", learn_merges, "Number of merges");
  learn->add_option("--mode", learn_mode, "separate or joint")->check(CLI::IsMember({"separate", "joint"}));
  learn->add_option("--output", learn_out, "Output prefix; writes <prefix>.src.bpe and <prefix>.tgt.bpe")->required();
  learn->add_flag("--force", learn_force, "Replace existing files");

  // apply-bpe
  auto* apply = app.add_subcommand("apply-bpe", "Segment (or restore) one side of a corpus");
  std::string apply_codes, apply_in = "-", apply_out = "-";
  bool apply_undo = false, apply_force = false;
  apply->add_option("--codes", apply_codes, "BPE model file");
  apply->add_option("--input", apply_in, "Input text, one sentence per line");
  apply->add_option("--output", apply_out, "Output text");
  apply->add_flag("--undo", apply_undo, "Join subword pieces back into words");
  apply->add_flag("--force", apply_force, "Replace existing files");

  // build-vocab
  auto* vocab = app.add_subcommand("build-vocab", "Build a capped vocabulary");
  std::vector<std::string> vocab_in;
  std::string vocab_side = "source", vocab_policy = "mixed", vocab_domain, vocab_out;
  std::size_t vocab_cap = 2000;
  bool vocab_force = false;
  vocab->add_option("--input", vocab_in, "Corpus stems, each stem[:domain]")->required();
  vocab->add_option("--side", vocab_side, "source or target")->check(CLI::IsMember({"source", "target"}));
  vocab->add_option("--cap", vocab_cap, "Maximum vocabulary size including reserved ids");
  vocab->add_option("--policy", vocab_policy, "mixed, out-only or in-only")
      ->check(CLI::IsMember({"mixed", "out-only", "in-only"}));
  vocab->add_option("--domain", vocab_domain, "Domain required by out-only/in-only");
  vocab->add_option("--output", vocab_out, "Vocabulary file")->required();
  vocab->add_flag("--force", vocab_force, "Replace existing files");

  // train
  auto* train = app.add_subcommand("train", "Run one schedule");
  ConfigArgs train_cfg;
  train_cfg.attach(train);
  std::string train_schedule;
  std::uint64_t train_seed = 1;
  bool train_force = false, train_no_eval = false;
  train->add_option("schedule", train_schedule, "Schedule name")->required();
  train->add_option("--seed", train_seed, "Run seed");
  train->add_flag("--force", train_force, "Discard an existing run directory");
  train->add_flag("--no-eval", train_no_eval, "Skip test-set decoding");

  // translate
  auto* translate = app.add_subcommand("translate", "Decode with a trained run");
  std::string tr_run, tr_in = "-", tr_out = "-", tr_ensemble = "best-dev-loss,best-dev-bleu,final", tr_domain;
  std::size_t tr_beam = 0, tr_stage = 0;
  bool tr_force = false;
  translate->add_option("--run", tr_run, "Run directory <out-dir>/<schedule>/<seed>")->required();
  translate->add_option("--input", tr_in, "Source text, one sentence per line");
  translate->add_option("--output", tr_out, "Output text");
  translate->add_option("--ensemble", tr_ensemble, "Comma-separated checkpoint tags");
  translate->add_option("--beam", tr_beam, "Beam size (default from the checkpoint)");
  translate->add_option("--stage", tr_stage, "Stage to use (default: last)");
  translate->add_option("--domain", tr_domain, "Domain tag to prepend when the run uses tags");
  translate->add_flag("--force", tr_force, "Replace an existing output file");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Corpus BLEU-4");
  std::string ev_hyp, ev_ref;
  evaluate->add_option("--hyp", ev_hyp, "Hypotheses")->required();
  evaluate->add_option("--ref", ev_ref, "References")->required();

  // significance
  auto* signif = app.add_subcommand("significance", "Paired bootstrap test");
  std::string sg_a, sg_b, sg_ref;
  std::size_t sg_resamples = 1000;
  std::uint64_t sg_seed = 1;
  signif->add_option("--a", sg_a, "System A hypotheses")->required();
  signif->add_option("--b", sg_b, "System B hypotheses")->required();
  signif->add_option("--ref", sg_ref, "References")->required();
  signif->add_option("--resamples", sg_resamples, "Bootstrap resamples");
  signif->add_option("--seed", sg_seed, "Resampling seed");

  // experiment
  auto* experiment = app.add_subcommand("experiment", "Run the full schedule x seed matrix");
  ConfigArgs exp_cfg;
  exp_cfg.attach(experiment);
  std::string exp_seeds;
  std::size_t exp_jobs = 1;
  bool exp_force = false, exp_no_cache = false;
  experiment->add_option("--seeds", exp_seeds, "Comma-separated seeds");
  experiment->add_option("--jobs", exp_jobs, "Parallel cells")->check(CLI::PositiveNumber);
  experiment->add_flag("--force", exp_force, "Discard existing runs");
  experiment->add_flag("--no-cache", exp_no_cache, "Do not share identical stages between schedules");

  // report
  auto* report = app.add_subcommand("report", "Rebuild report.md from finished runs");
  ConfigArgs rep_cfg;
  rep_cfg.attach(report);
  std::string rep_seeds;
  report->add_option("--seeds", rep_seeds, "Comma-separated seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth) {
      Config cfg = synth_cfg.load();
      fs::path dir = cfg.out_dir;
      guard_output((dir / "lexicon.tsv").string(), synth_force);
      SynthSpec spec = cfg.synth;
      spec.out_domain = cfg.data.out_domain;
      spec.in_domain = cfg.data.in_domain;
      write_synth(generate(spec), dir);
      log_line("wrote synthetic corpora to " + dir.string());
    } else if (*prepare) {
      guard_output(prep_out + ".src", prep_force);
      ParallelCorpus c = load_stem(prep_in, prep_domain);
      c = filter_by_length(c, prep_max_len);
      if (prep_tag) c = inject_tags(c);
      if (prep_oversample) c = oversample(c, prep_oversample, prep_seed);
      if (!prep_mix.empty()) c = mix(load_stem(prep_mix, prep_domain), c, prep_seed);
      save_corpus(c, prep_out);
      auto counts = count_by_domain(c);
      for (const auto& [d, n] : counts) std::cout << d << "\t" << n << "\n";
    } else if (*learn) {
      guard_output(learn_out + ".src.bpe", learn_force);
      std::vector<ParallelCorpus> cs;
      for (const auto& s : learn_in) cs.push_back(load_stem(s, "in"));
      auto [src, tgt] = learn_bpe(word_counts(cs, Side::Source), word_counts(cs, Side::Target), learn_merges,
                                  learn_mode == "joint" ? BpeMode::Joint : BpeMode::Separate);
      save_bpe(src, learn_out + ".src.bpe");
      save_bpe(tgt, learn_out + ".tgt.bpe");
      std::cout << "merges\t" << src.merges.size() << "\t" << tgt.merges.size() << "\n";
    } else if (*apply) {
      guard_output(apply_out, apply_force);
      std::vector<std::string> out;
      if (apply_undo) {
        for (const auto& l : read_text(apply_in)) out.push_back(join_tokens(undo_bpe(split_tokens(l))));
      } else {
        if (apply_codes.empty()) detail::fail(ErrorCode::ConfigError, "apply-bpe needs --codes");
        BpeEncoder enc(load_bpe(apply_codes));
        for (const auto& l : read_text(apply_in)) out.push_back(join_tokens(enc.apply(split_tokens(l))));
      }
      write_text(apply_out, out);
    } else if (*vocab) {
      guard_output(vocab_out, vocab_force);
      std::vector<ParallelCorpus> cs;
      for (const auto& s : vocab_in) cs.push_back(load_stem(s, vocab_domain.empty() ? "in" : vocab_domain));
      VocabPolicy policy = vocab_policy == "out-only" ? VocabPolicy::out_of_domain_only(vocab_domain)
                           : vocab_policy == "in-only" ? VocabPolicy::in_domain_only(vocab_domain)
                                                       : VocabPolicy::mixed();
      auto v = build_vocabulary(cs, vocab_side == "source" ? Side::Source : Side::Target, vocab_cap, policy);
      v.save(vocab_out);
      std::cout << "size\t" << v.size() << "\n";
    } else if (*train) {
      Config cfg = train_cfg.load();
      fs::path root = cfg.out_dir;
      auto ed = materialize_data(cfg, root);
      StageCache cache(root / ".stage-cache");
      RunOptions ro{train_force, log_line, &cache};
      auto run = run_schedule(train_schedule, ed.registry, cfg, train_seed, root, ro);
      if (!train_no_eval) {
        auto ts = evaluate_run(run, ed.registry, cfg, ed.lexicon, ro);
        for (const auto& [split, b] : ts.bleu) std::cout << split << "\tBLEU\t" << format_fixed(b, 2) << "\n";
      }
    } else if (*translate) {
      guard_output(tr_out, tr_force);
      fs::path run = tr_run;
      std::size_t stage = tr_stage;
      if (stage == 0)
        while (fs::exists(run / ("stage" + std::to_string(stage + 1)) / "manifest.txt")) ++stage;
      if (stage == 0) detail::fail(ErrorCode::IoError, run.string(), " has no finished stage");
      fs::path sdir = run / ("stage" + std::to_string(stage));
      auto prov = read_manifest(run / "provenance.txt");
      bool tags = prov && prov->count("tags") && prov->at("tags") == "true";
      Vocabulary sv = Vocabulary::load(run / "src.vocab"), tv = Vocabulary::load(run / "tgt.vocab");
      bool bpe = fs::exists(run / "src.bpe");
      std::optional<BpeEncoder> src_enc;
      BpeModel tgt_bpe;
      if (bpe) {
        src_enc.emplace(load_bpe(run / "src.bpe"));
        tgt_bpe = load_bpe(run / "tgt.bpe");
      }
      std::vector<s2s::ModelParams<float>> members;
      for (const auto& tag : Config::split_list(tr_ensemble))
        members.push_back(s2s::load_checkpoint(sdir / "checkpoints" / checkpoint_file(s2s::parse_checkpoint_tag(tag))).params);
      if (members.empty()) detail::fail(ErrorCode::ConfigError, "--ensemble lists no checkpoints");
      std::vector<const s2s::ModelParams<float>*> ptrs;
      for (const auto& m : members) ptrs.push_back(&m);
      std::size_t beam = tr_beam ? tr_beam : members.front().hp.beam_size;
      std::string domain = tr_domain;
      if (tags && domain.empty()) domain = prov->count("in_domain") ? prov->at("in_domain") : "in";
      std::vector<std::string> out;
      for (const auto& line : read_text(tr_in)) {
        Tokens src = strip_tags(split_tokens(line));
        if (src.empty()) {
          out.emplace_back();
          continue;
        }
        if (src_enc) src = src_enc->apply(src);
        if (tags) src.insert(src.begin(), domain_tag(domain));
        auto ids = sv.encode(src);
        auto h = s2s::ensemble_decode<float>(ptrs, ids, beam, s2s::default_max_out_len(ids.size()));
        out.push_back(join_tokens(postprocess(h.output(), tv, bpe, tgt_bpe.joiner)));
      }
      write_text(tr_out, out);
    } else if (*evaluate) {
      std::cout << format_bleu(bleu4(read_token_lines(ev_hyp), read_token_lines(ev_ref))) << "\n";
    } else if (*signif) {
      auto a = read_token_lines(sg_a), b = read_token_lines(sg_b), r = read_token_lines(sg_ref);
      auto res = bootstrap_significance(a, b, r, sg_resamples, sg_seed);
      std::cout << "A\t" << format_bleu(bleu4(a, r)) << "\nB\t" << format_bleu(bleu4(b, r)) << "\np\t"
                << format_fixed(res.p_value, 4) << (res.p_value < kSignificanceLevel ? "\tsignificant" : "\tnot significant")
                << "\n";
    } else if (*experiment) {
      Config cfg = exp_cfg.load();
      if (!exp_seeds.empty()) cfg.set("experiment.seeds", exp_seeds);
      ExperimentOptions eo;
      eo.jobs = exp_jobs;
      eo.force = exp_force;
      eo.use_cache = !exp_no_cache;
      eo.log = log_line;
      run_experiment(cfg, eo);
      log_line("wrote " + (fs::path(cfg.out_dir) / "report.md").string());
    } else if (*report) {
      Config cfg = rep_cfg.load();
      if (!rep_seeds.empty()) cfg.set("experiment.seeds", rep_seeds);
      fs::path root = cfg.out_dir;
      auto ed = materialize_data(cfg, root);
      std::string text = experiment_report(cfg, ed.registry, ed.lexicon, root);
      write_file_atomic(root / "report.md", text);
      std::cout << text;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(error_class(e.code()));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
