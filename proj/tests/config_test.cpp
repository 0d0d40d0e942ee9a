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

#include "domixt/config.hpp"

using namespace domixt;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::IoError;
}

}  // namespace

TEST(Config, DefaultsUseDeskPreset) {
  Config c;
  EXPECT_EQ(c.hp.embed_dim, 64u);
  EXPECT_EQ(c.hp.hidden_dim, 128u);
  EXPECT_EQ(c.hp.maxout_units, 64u);
  EXPECT_EQ(c.hp.beam_size, 8u);
  EXPECT_EQ(c.train.patience, 5u);
  EXPECT_EQ(c.bpe_merges, 500u);
  EXPECT_EQ(c.schedules.size(), 9u);
}

TEST(Config, FullPreset) {
  Config c;
  c.set("model.preset", "full");
  EXPECT_EQ(c.hp.src_vocab, 32000u);
  EXPECT_EQ(c.hp.embed_dim, 620u);
  EXPECT_EQ(c.hp.hidden_dim, 1000u);
  EXPECT_EQ(c.hp.attn_dim, 1000u);
  EXPECT_EQ(c.hp.maxout_units, 500u);
  EXPECT_EQ(c.hp.batch_size, 64u);
  EXPECT_EQ(c.hp.beam_size, 100u);
  EXPECT_DOUBLE_EQ(c.hp.dropout_rate, 0.2);
  EXPECT_DOUBLE_EQ(c.hp.weight_decay, 1e-6);
}

TEST(Config, ParsesSectionsAndComments) {
  auto c = parse_config(
      "# comment\n[train]\nmax_epochs = 12  # trailing\npatience=3\n\n[experiment]\nseeds = 1, 2,3\n"
      "schedules = in-only fine-tuning\n[model]\nhidden_dim = 32\n[bpe]\nmode = joint\n");
  EXPECT_EQ(c.train.max_epochs, 12u);
  EXPECT_EQ(c.train.patience, 3u);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(c.schedules, (std::vector<std::string>{"in-only", "fine-tuning"}));
  EXPECT_EQ(c.hp.hidden_dim, 32u);
  EXPECT_EQ(c.bpe_mode, BpeMode::Joint);
}

TEST(Config, TextRoundTrip) {
  Config c;
  c.set("synth.noise_rate", "0.125");
  c.set("train.alpha", "0.0005");
  c.set("data.in_domain", "iwslt");
  auto text = c.to_text();
  EXPECT_EQ(parse_config(text).to_text(), text);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  Config c;
  EXPECT_EQ(code_of([&] { c.set("train.learning_rate", "1"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { c.set("optim.alpha", "1"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { c.set("nodot", "1"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { c.set("train.max_epochs", "ten"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { c.set("train.patience", "0"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { c.set("model.maxout_pieces", "3"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { c.set("model.hidden_dim", "x"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { c.set("bpe.mode", "unigram"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { c.set("bpe.enabled", "maybe"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { parse_config("max_epochs = 3\n"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { parse_config("[train\n"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { parse_config("[train]\nmax_epochs\n"); }), ErrorCode::ConfigError);
}

TEST(Config, CorpusStemsDisableSynthesis) {
  Config c;
  c.set("data.out_train", "/data/ntcir.train");
  EXPECT_FALSE(c.data.synthetic);
  EXPECT_EQ(c.data.stems.at("out_train"), "/data/ntcir.train");
}

TEST(Config, ShippedDeskConfigParses) {
  auto c = load_config(std::filesystem::path(DOMIXT_SOURCE_DIR) / "configs" / "desk.cfg");
  EXPECT_EQ(c.seeds.size(), 3u);
  EXPECT_EQ(c.schedules.size(), 9u);
  EXPECT_EQ(c.synth.out_size, 20000u);
  EXPECT_EQ(c.synth.in_size, 1000u);
  EXPECT_DOUBLE_EQ(c.synth.noise_rate, 0.0);
}
