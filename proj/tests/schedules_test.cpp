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

#include <random>
#include <set>

#include "domixt/experiment.hpp"
#include "domixt/schedules.hpp"
#include "test_support.hpp"

using namespace domixt;

namespace {

CorpusRegistry tiny_registry(std::size_t out_n = 200, std::size_t in_n = 20) {
  SynthSpec spec;
  spec.shared_vocab = 12;
  spec.ambiguous_vocab = 4;
  spec.domain_exclusive_vocab = 2;
  spec.min_len = 2;
  spec.max_len = 4;
  spec.out_size = out_n;
  spec.in_size = in_n;
  spec.dev_size = 10;
  spec.test_size = 10;
  return registry_from_synth(generate(spec));
}

Config tiny_config() {
  Config c;
  c.hp.embed_dim = c.hp.hidden_dim = c.hp.attn_dim = 16;
  c.hp.maxout_units = 8;
  c.hp.batch_size = 16;
  c.hp.beam_size = 2;
  c.use_bpe = false;
  c.train.max_epochs = 2;
  c.train.patience = 5;
  c.resamples = 50;
  return c;
}

/// Fifty random pairs whose dev set is the training set itself.
StageInputs memorisable(Vocabulary& src_v, Vocabulary& tgt_v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> tok(0, 19), len(4, 6);
  ParallelCorpus c;
  for (int i = 0; i < 50; ++i) {
    SentencePair p{{}, {}, "in"};
    for (int k = len(rng); k > 0; --k) p.source.push_back("s" + std::to_string(tok(rng)));
    for (int k = len(rng); k > 0; --k) p.target.push_back("t" + std::to_string(tok(rng)));
    c.pairs.push_back(p);
  }
  src_v = build_vocabulary({c}, Side::Source, 100, VocabPolicy::mixed());
  tgt_v = build_vocabulary({c}, Side::Target, 100, VocabPolicy::mixed());
  StageInputs in;
  in.train = encode_pairs(c, src_v, tgt_v);
  in.dev = in.train;
  for (const auto& p : c.pairs) in.dev_references.push_back(p.target);
  in.tgt_vocab = &tgt_v;
  return in;
}

s2s::HyperParams desk_for(const Vocabulary& s, const Vocabulary& t) {
  auto hp = s2s::HyperParams::desk();
  hp.src_vocab = s.size();
  hp.tgt_vocab = t.size();
  return hp;
}

}  // namespace

TEST(MakeSchedule, StageStructure) {
  auto reg = tiny_registry();
  StopRule stop;
  struct Want {
    const char* name;
    std::vector<StageData> data;
    VocabPolicy::Kind vocab;
    bool tags;
  };
  using SD = StageData;
  using VK = VocabPolicy::Kind;
  const std::vector<Want> wants = {
      {"in-only", {SD::InDomain}, VK::InDomainOnly, false},
      {"out-only", {SD::OutOfDomain}, VK::OutOfDomainOnly, false},
      {"fine-tuning", {SD::OutOfDomain, SD::InDomain}, VK::OutOfDomainOnly, false},
      {"multi-domain", {SD::Mixed}, VK::Mixed, true},
      {"multi-domain-no-tags", {SD::Mixed}, VK::Mixed, false},
      {"multi-domain+ft", {SD::Mixed, SD::InDomain}, VK::Mixed, true},
      {"mixed-ft", {SD::OutOfDomain, SD::Mixed}, VK::Mixed, true},
      {"mixed-ft-no-tags", {SD::OutOfDomain, SD::Mixed}, VK::Mixed, false},
      {"mixed-ft+ft", {SD::OutOfDomain, SD::Mixed, SD::InDomain}, VK::Mixed, true},
  };
  ASSERT_EQ(wants.size(), schedule_names().size());
  for (const auto& w : wants) {
    auto s = make_schedule(w.name, reg, stop);
    EXPECT_EQ(s.vocab, w.vocab) << w.name;
    EXPECT_EQ(s.tags, w.tags) << w.name;
    ASSERT_EQ(s.stages.size(), w.data.size()) << w.name;
    for (std::size_t k = 0; k < s.stages.size(); ++k) {
      const auto& st = s.stages[k];
      EXPECT_EQ(st.data, w.data[k]) << w.name << " stage " << k + 1;
      EXPECT_EQ(st.tags, w.tags) << w.name;
      EXPECT_EQ(st.oversample, st.data == SD::Mixed) << w.name;
      EXPECT_EQ(st.init, k == 0 ? StageInit::Fresh : StageInit::FromPriorStage) << w.name;
    }
    EXPECT_EQ(s.stages.back().dev, std::string(w.name) == "out-only" ? SD::OutOfDomain : SD::InDomain) << w.name;
  }
}

TEST(MakeSchedule, Errors) {
  auto reg = tiny_registry();
  try {
    make_schedule("transfer", reg, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownSchedule);
  }
  reg.splits.erase("in_train");
  try {
    make_schedule("mixed-ft", reg, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingCorpus);
  }
  EXPECT_NO_THROW(make_schedule("out-only", reg, {}));
}

TEST(StageCorpus, MixedStageBalancesTaggedDomains) {
  auto reg = tiny_registry(300, 40);
  auto cfg = tiny_config();
  auto s = make_schedule("mixed-ft", reg, {});
  auto d = prepare_data(s, reg, cfg);
  auto stage2 = stage_corpus(s.stages[1], d, 7);
  auto counts = count_by_domain(stage2);
  EXPECT_EQ(counts["in"], counts["out"]);
  EXPECT_EQ(counts["out"], d.splits.at("out_train").size());
  for (const auto& p : stage2.pairs) EXPECT_EQ(p.source.front(), domain_tag(p.domain));
  auto stage1 = stage_corpus(s.stages[0], d, 7);
  EXPECT_EQ(count_by_domain(stage1).count("in"), 0u);
  EXPECT_TRUE(d.src_vocab.contains("<2in>"));
  EXPECT_TRUE(d.src_vocab.contains("<2out>"));
}

TEST(StageCorpus, NoTagAblationStillOversamples) {
  auto reg = tiny_registry(300, 40);
  auto s = make_schedule("multi-domain-no-tags", reg, {});
  auto d = prepare_data(s, reg, tiny_config());
  auto c = stage_corpus(s.stages[0], d, 3);
  auto counts = count_by_domain(c);
  EXPECT_EQ(counts["in"], counts["out"]);
  for (const auto& p : c.pairs) EXPECT_FALSE(is_domain_tag(p.source.front()));
}

TEST(PrepareData, VocabularyPolicies) {
  auto reg = tiny_registry();
  auto cfg = tiny_config();
  auto ft = prepare_data(make_schedule("fine-tuning", reg, {}), reg, cfg);
  auto md = prepare_data(make_schedule("multi-domain", reg, {}), reg, cfg);
  std::set<std::string> out_words, in_only;
  for (const auto& p : reg.get("out_train").pairs) out_words.insert(p.source.begin(), p.source.end());
  for (const auto& p : reg.get("in_train").pairs)
    for (const auto& w : p.source)
      if (!out_words.count(w)) in_only.insert(w);
  ASSERT_FALSE(in_only.empty());
  for (const auto& w : in_only) {
    EXPECT_FALSE(ft.src_vocab.contains(w)) << w;
    EXPECT_TRUE(md.src_vocab.contains(w)) << w;
  }
  for (const auto& w : out_words) EXPECT_TRUE(ft.src_vocab.contains(w)) << w;
}

TEST(StopTracker, PatienceArithmetic) {
  StopTracker t(StopRule{3, 30});
  const std::vector<double> bleu{1, 2, 3, 4, 9, 8, 8, 7, 9, 10};
  std::size_t stopped = 0;
  for (std::size_t e = 1; e <= bleu.size(); ++e) {
    t.update(e, bleu[e - 1]);
    if (t.should_stop(e)) {
      stopped = e;
      break;
    }
  }
  EXPECT_EQ(stopped, 8u);
  EXPECT_EQ(t.peak_epoch(), 5u);
  StopTracker cap(StopRule{5, 4});
  for (std::size_t e = 1; e <= 4; ++e) cap.update(e, static_cast<double>(e));
  EXPECT_TRUE(cap.should_stop(4));
  EXPECT_THROW(StopTracker(StopRule{0, 3}), Error);
}

TEST(History, TsvRoundTripAndPeak) {
  std::vector<EpochRecord> h{{0, std::numeric_limits<double>::quiet_NaN(), 4.5, 0.0}, {1, 3.0, 2.5, 10.0},
                             {2, 2.0, 2.0, 30.0}, {3, 1.0, 2.2, 30.0}, {4, 0.5, 2.4, 20.0}};
  auto text = history_tsv(h);
  EXPECT_EQ(text.substr(0, text.find('\n')), "epoch\ttrain_loss\tdev_loss\tdev_bleu");
  auto back = parse_history(text);
  ASSERT_EQ(back.size(), h.size());
  EXPECT_TRUE(std::isnan(back[0].train_loss));
  EXPECT_EQ(history_tsv(back), text);
  EXPECT_EQ(epochs_to_peak(back), 2u);
  back[0].dev_bleu = 40.0;
  EXPECT_EQ(epochs_to_peak(back), 0u);
}

TEST(DeriveSeed, DistinctPurposes) {
  EXPECT_NE(derive_seed(1, "mix"), derive_seed(1, "oversample"));
  EXPECT_NE(derive_seed(1, "mix"), derive_seed(2, "mix"));
  EXPECT_EQ(derive_seed(3, "epoch1"), derive_seed(3, "epoch1"));
}

TEST(RunStage, MemorisesFiftyPairsToPerfectDevBleu) {
  Vocabulary sv, tv;
  auto in = memorisable(sv, tv, 1);
  auto init = s2s::init_params<float>(desk_for(sv, tv), 11);
  TrainConfig tc;
  auto res = run_stage(in, init, StopRule{600, 600}, tc, 5);
  double best = 0;
  for (const auto& r : res.history) best = std::max(best, r.dev_bleu);
  EXPECT_DOUBLE_EQ(best, 100.0) << "after " << res.history.size() - 1 << " epochs";
  EXPECT_DOUBLE_EQ(res.best_bleu.dev_bleu, best);
}

TEST(RunStage, SameSeedSameHistoryAndCheckpointTriple) {
  Vocabulary sv, tv;
  auto in = memorisable(sv, tv, 2);
  auto hp = desk_for(sv, tv);
  TrainConfig tc;
  auto a = run_stage(in, s2s::init_params<float>(hp, 3), StopRule{2, 6}, tc, 9);
  auto b = run_stage(in, s2s::init_params<float>(hp, 3), StopRule{2, 6}, tc, 9);
  EXPECT_EQ(history_tsv(a.history), history_tsv(b.history));
  EXPECT_EQ(s2s::serialize_checkpoint(a.last), s2s::serialize_checkpoint(b.last));
  EXPECT_EQ(a.history[0].epoch, 0u);
  EXPECT_TRUE(std::isnan(a.history[0].train_loss));
  EXPECT_EQ(a.last.epoch, a.history.back().epoch);

  const std::size_t batch = tc.dev_batch;
  double loss_best = dev_loss(a.best_loss.params, in.dev, batch);
  double loss_final = dev_loss(a.last.params, in.dev, batch);
  double bleu_best = dev_bleu(a.best_bleu.params, in, batch);
  double bleu_final = dev_bleu(a.last.params, in, batch);
  EXPECT_LE(loss_best, loss_final);
  EXPECT_GE(bleu_best, bleu_final);
  EXPECT_NEAR(loss_best, a.best_loss.dev_loss, 1e-9);
  EXPECT_NEAR(bleu_best, a.best_bleu.dev_bleu, 1e-9);
  EXPECT_EQ(a.best_bleu.epoch, a.peak_epoch);
}

TEST(RunStage, DifferentSeedsDiffer) {
  Vocabulary sv, tv;
  auto in = memorisable(sv, tv, 2);
  auto hp = desk_for(sv, tv);
  TrainConfig tc;
  auto a = run_stage(in, s2s::init_params<float>(hp, 3), StopRule{2, 2}, tc, 9);
  auto b = run_stage(in, s2s::init_params<float>(hp, 3), StopRule{2, 2}, tc, 10);
  EXPECT_NE(history_tsv(a.history), history_tsv(b.history));
}

TEST(RunSchedule, FineTuningContinuesFromStageOne) {
  domixt::testing::TempDir root("sched");
  auto reg = tiny_registry();
  auto cfg = tiny_config();
  auto run = run_schedule("fine-tuning", reg, cfg, 1, root.path());
  ASSERT_EQ(run.stage_dirs.size(), 2u);
  auto h2 = parse_history(read_file(run.stage_dirs[1] / "history.tsv"));
  auto prior = s2s::load_checkpoint(run.stage_dirs[0] / "checkpoints" / "best-dev-bleu.ckpt");
  auto in2 = stage_inputs(run.schedule, 1, run.data, reg, 1);
  EXPECT_NEAR(h2[0].dev_bleu, dev_bleu(prior.params, in2, cfg.train.dev_batch), 1e-4);
  EXPECT_NEAR(h2[0].dev_loss, dev_loss(prior.params, in2.dev, cfg.train.dev_batch), 1e-6);
  auto m2 = read_manifest(run.stage_dirs[1] / "manifest.txt");
  ASSERT_TRUE(m2);
  EXPECT_EQ(m2->at("init"), "stage1/best-dev-bleu");
  EXPECT_EQ(m2->at("status"), "complete");
}

TEST(RunSchedule, StageCountsAndSharedVocabulary) {
  domixt::testing::TempDir root("sched");
  auto reg = tiny_registry();
  auto cfg = tiny_config();
  cfg.train.max_epochs = 1;
  auto in_only = run_schedule("in-only", reg, cfg, 1, root.path());
  EXPECT_EQ(in_only.stage_dirs.size(), 1u);
  EXPECT_FALSE(fs::exists(in_only.dir / "stage2"));
  auto three = run_schedule("mixed-ft+ft", reg, cfg, 1, root.path());
  ASSERT_EQ(three.stage_dirs.size(), 3u);
  for (const auto& sd : three.stage_dirs) {
    EXPECT_TRUE(manifest_complete(sd / "manifest.txt", read_manifest(sd / "manifest.txt")->at("key")));
    for (const char* f : {"best-dev-loss.ckpt", "best-dev-bleu.ckpt", "final.ckpt"}) {
      auto ck = s2s::load_checkpoint(sd / "checkpoints" / f);
      EXPECT_EQ(ck.params.hp.src_vocab, three.data.src_vocab.size());
      EXPECT_EQ(ck.params.hp.tgt_vocab, three.data.tgt_vocab.size());
    }
  }
  EXPECT_EQ(read_file(three.dir / "src.vocab"), three.data.src_vocab.serialize());
  EXPECT_EQ(read_file(three.dir / "tgt.vocab"), three.data.tgt_vocab.serialize());
  EXPECT_NE(read_file(three.dir / "provenance.txt").find("stage3.key"), std::string::npos);
}

TEST(RunSchedule, RerunSkipsCompletedStagesAndReproduces) {
  domixt::testing::TempDir a("sched"), b("sched");
  auto reg = tiny_registry();
  auto cfg = tiny_config();
  std::vector<std::string> logs;
  RunOptions opt;
  opt.log = [&](const std::string& m) { logs.push_back(m); };
  auto first = run_schedule("multi-domain", reg, cfg, 4, a.path(), opt);
  auto hist = read_file(first.stage_dirs[0] / "history.tsv");
  logs.clear();
  run_schedule("multi-domain", reg, cfg, 4, a.path(), opt);
  ASSERT_FALSE(logs.empty());
  EXPECT_NE(logs.front().find("already complete"), std::string::npos);
  EXPECT_EQ(read_file(first.stage_dirs[0] / "history.tsv"), hist);
  auto again = run_schedule("multi-domain", reg, cfg, 4, b.path());
  EXPECT_EQ(read_file(again.stage_dirs[0] / "history.tsv"), hist);
  auto other = cfg;
  other.train.max_epochs = 3;
  try {
    run_schedule("multi-domain", reg, other, 4, a.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
  RunOptions force;
  force.force = true;
  EXPECT_NO_THROW(run_schedule("multi-domain", reg, other, 4, a.path(), force));
}

TEST(RunSchedule, CacheSharesIdenticalStages) {
  domixt::testing::TempDir root("sched");
  auto reg = tiny_registry();
  auto cfg = tiny_config();
  StageCache cache(root / ".stage-cache");
  RunOptions opt;
  opt.cache = &cache;
  auto out_only = run_schedule("out-only", reg, cfg, 2, root.path(), opt);
  auto ft = run_schedule("fine-tuning", reg, cfg, 2, root.path(), opt);
  EXPECT_EQ(read_file(out_only.stage_dirs[0] / "history.tsv"), read_file(ft.stage_dirs[0] / "history.tsv"));
  EXPECT_EQ(out_only.stage_keys[0], ft.stage_keys[0]);
  domixt::testing::TempDir fresh("sched");
  auto direct = run_schedule("fine-tuning", reg, cfg, 2, fresh.path());
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(read_file(direct.stage_dirs[k] / "history.tsv"), read_file(ft.stage_dirs[k] / "history.tsv"));
    EXPECT_EQ(read_file(direct.stage_dirs[k] / "checkpoints" / "final.ckpt"),
              read_file(ft.stage_dirs[k] / "checkpoints" / "final.ckpt"));
  }
}

TEST(EvaluateRun, WritesScoresAndHypotheses) {
  domixt::testing::TempDir root("sched");
  SynthSpec spec;
  spec.shared_vocab = 12;
  spec.ambiguous_vocab = 4;
  spec.domain_exclusive_vocab = 2;
  spec.min_len = 2;
  spec.max_len = 4;
  spec.out_size = 200;
  spec.in_size = 20;
  spec.dev_size = 10;
  spec.test_size = 10;
  auto d = generate(spec);
  auto reg = registry_from_synth(d);
  auto cfg = tiny_config();
  cfg.train.max_epochs = 1;
  auto run = run_schedule("in-only", reg, cfg, 1, root.path());
  auto scores = evaluate_run(run, reg, cfg, d.lexicon);
  EXPECT_TRUE(scores.bleu.count("in_test"));
  EXPECT_TRUE(scores.bleu.count("out_test"));
  EXPECT_TRUE(fs::exists(run.dir / "test" / "scores.tsv"));
  EXPECT_EQ(read_hypotheses(run.dir / "test" / "in_test.hyp", 10).size(), 10u);
}
