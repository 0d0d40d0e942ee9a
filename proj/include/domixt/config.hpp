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

// Flat key-value configuration with [sections]:
//
//   [model]
//   preset = desk
//   hidden_dim = 128     # comments run to end of line
//
// Every key is addressed as "section.key"; unknown keys are errors.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "domixt/error.hpp"
#include "domixt/nncore/adam.hpp"
#include "domixt/seq2seq/model.hpp"
#include "domixt/subword.hpp"
#include "domixt/synthgen.hpp"
#include "domixt/util.hpp"

namespace domixt {

struct TrainConfig {
  nn::AdamConfig adam;
  std::size_t patience = 5;
  std::size_t max_epochs = 30;
  std::size_t dev_batch = 200;  // rows per batched dev decode
};

struct DataConfig {
  // Either a synthetic task (generated under <out_dir>/data) or explicit corpus stems.
  bool synthetic = true;
  std::string out_domain = "out";
  std::string in_domain = "in";
  std::map<std::string, std::string> stems;  // split name -> path stem, e.g. "out_train" -> "data/ntcir.train"
};

struct Config {
  DataConfig data;
  SynthSpec synth;
  std::string preset = "desk";
  s2s::HyperParams hp = s2s::HyperParams::desk();
  TrainConfig train;
  bool use_bpe = true;
  std::size_t bpe_merges = 500;
  BpeMode bpe_mode = BpeMode::Separate;
  std::vector<std::string> schedules = {"out-only", "fine-tuning", "multi-domain", "multi-domain-no-tags",
                                        "multi-domain+ft", "mixed-ft", "mixed-ft-no-tags", "mixed-ft+ft", "in-only"};
  std::vector<std::uint64_t> seeds = {1};
  std::size_t resamples = 1000;
  std::string out_dir = "runs";

  /// Applies "section.key" = value. Presets reset the model block, so put
  /// `model.preset` before individual model overrides.
  void set(const std::string& dotted, const std::string& value);

  std::string to_text() const;

  static std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
      if (c == ',' || c == ' ') {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
  }
};

inline void Config::set(const std::string& dotted, const std::string& value) {
  auto fail = [&](const std::string& why) { detail::fail(ErrorCode::ConfigError, dotted, "=", value, ": ", why); };
  auto dot = dotted.find('.');
  if (dot == std::string::npos) fail("keys must look like section.key");
  std::string sec = dotted.substr(0, dot), key = dotted.substr(dot + 1);
  auto as_size = [&]() -> std::size_t {
    try {
      std::size_t used = 0;
      auto v = std::stoull(value, &used);
      if (used != value.size()) fail("not an integer");
      return static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
      fail("not an integer");
    }
    return 0;
  };
  auto as_double = [&]() -> double {
    try {
      std::size_t used = 0;
      double v = std::stod(value, &used);
      if (used != value.size()) fail("not a number");
      return v;
    } catch (const std::logic_error&) {
      fail("not a number");
    }
    return 0.0;
  };
  auto as_bool = [&]() -> bool {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    fail("not a boolean");
    return false;
  };

  if (sec == "data") {
    if (key == "synthetic") data.synthetic = as_bool();
    else if (key == "out_domain") data.out_domain = synth.out_domain = value;
    else if (key == "in_domain") data.in_domain = synth.in_domain = value;
    else if (key == "out_train" || key == "in_train" || key == "out_dev" || key == "in_dev" || key == "out_test" ||
             key == "in_test") {
      data.stems[key] = value;
      data.synthetic = false;
    } else fail("unknown key");
  } else if (sec == "synth") {
    if (key == "shared_vocab") synth.shared_vocab = as_size();
    else if (key == "ambiguous_vocab") synth.ambiguous_vocab = as_size();
    else if (key == "domain_exclusive_vocab") synth.domain_exclusive_vocab = as_size();
    else if (key == "min_len") synth.min_len = as_size();
    else if (key == "max_len") synth.max_len = as_size();
    else if (key == "out_size") synth.out_size = as_size();
    else if (key == "in_size") synth.in_size = as_size();
    else if (key == "dev_size") synth.dev_size = as_size();
    else if (key == "test_size") synth.test_size = as_size();
    else if (key == "noise_rate") synth.noise_rate = as_double();
    else if (key == "swap_prob") synth.swap_prob = as_double();
    else if (key == "zipf_tilt") synth.zipf_tilt = as_double();
    else if (key == "seed") synth.seed = as_size();
    else fail("unknown key");
  } else if (sec == "model") {
    if (key == "preset") {
      if (value == "desk") hp = s2s::HyperParams::desk();
      else if (value == "full") hp = s2s::HyperParams::full();
      else fail("preset must be desk or full");
      preset = value;
    } else if (key == "maxout_pieces") {
      if (as_size() != s2s::kMaxoutPieces) fail("the maxout layer has exactly 2 pieces");
    } else {
      bool ok = false;
      try {
        ok = hp.set(key, value);
      } catch (const std::logic_error&) {
        fail("bad value");
      }
      if (!ok) fail("unknown key");
    }
  } else if (sec == "train") {
    if (key == "alpha") train.adam.alpha = as_double();
    else if (key == "beta1") train.adam.beta1 = as_double();
    else if (key == "beta2") train.adam.beta2 = as_double();
    else if (key == "epsilon") train.adam.epsilon = as_double();
    else if (key == "patience") train.patience = as_size();
    else if (key == "max_epochs") train.max_epochs = as_size();
    else if (key == "dev_batch") train.dev_batch = as_size();
    else fail("unknown key");
    if (train.patience < 1) fail("patience must be >= 1");
  } else if (sec == "bpe") {
    if (key == "enabled") use_bpe = as_bool();
    else if (key == "num_merges") bpe_merges = as_size();
    else if (key == "mode") {
      if (value == "separate") bpe_mode = BpeMode::Separate;
      else if (value == "joint") bpe_mode = BpeMode::Joint;
      else fail("mode must be separate or joint");
    } else fail("unknown key");
  } else if (sec == "experiment") {
    if (key == "schedules") schedules = split_list(value);
    else if (key == "seeds") {
      seeds.clear();
      for (const auto& s : split_list(value)) {
        try {
          seeds.push_back(std::stoull(s));
        } catch (const std::logic_error&) {
          fail("seeds must be integers");
        }
      }
      if (seeds.empty()) fail("need at least one seed");
    } else if (key == "resamples") resamples = as_size();
    else if (key == "out_dir") out_dir = value;
    else fail("unknown key");
  } else {
    fail("unknown section");
  }
}

inline std::string Config::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "[data]\nsynthetic = " << (data.synthetic ? "true" : "false") << "\nout_domain = " << data.out_domain
     << "\nin_domain = " << data.in_domain << "\n";
  for (const auto& [k, v] : data.stems) os << k << " = " << v << "\n";
  os << "\n[synth]\nshared_vocab = " << synth.shared_vocab << "\nambiguous_vocab = " << synth.ambiguous_vocab
     << "\ndomain_exclusive_vocab = " << synth.domain_exclusive_vocab << "\nmin_len = " << synth.min_len
     << "\nmax_len = " << synth.max_len << "\nout_size = " << synth.out_size << "\nin_size = " << synth.in_size
     << "\ndev_size = " << synth.dev_size << "\ntest_size = " << synth.test_size << "\nnoise_rate = " << synth.noise_rate
     << "\nswap_prob = " << synth.swap_prob << "\nzipf_tilt = " << synth.zipf_tilt << "\nseed = " << synth.seed << "\n";
  os << "\n[model]\npreset = " << preset << "\n";
  std::istringstream hp_lines(hp.to_text());
  for (std::string line; std::getline(hp_lines, line);) {
    auto eq = line.find('=');
    os << line.substr(0, eq) << " = " << line.substr(eq + 1) << "\n";
  }
  os << "\n[train]\nalpha = " << train.adam.alpha << "\nbeta1 = " << train.adam.beta1 << "\nbeta2 = " << train.adam.beta2
     << "\nepsilon = " << train.adam.epsilon << "\npatience = " << train.patience << "\nmax_epochs = " << train.max_epochs
     << "\ndev_batch = " << train.dev_batch << "\n";
  os << "\n[bpe]\nenabled = " << (use_bpe ? "true" : "false") << "\nnum_merges = " << bpe_merges
     << "\nmode = " << (bpe_mode == BpeMode::Joint ? "joint" : "separate") << "\n";
  os << "\n[experiment]\nschedules = ";
  for (std::size_t i = 0; i < schedules.size(); ++i) os << (i ? "," : "") << schedules[i];
  os << "\nseeds = ";
  for (std::size_t i = 0; i < seeds.size(); ++i) os << (i ? "," : "") << seeds[i];
  os << "\nresamples = " << resamples << "\nout_dir = " << out_dir << "\n";
  return os.str();
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Parses config text; `origin` names the source in error messages.
inline Config parse_config(const std::string& text, const std::string& origin = "config") {
  Config c;
  std::istringstream in(text);
  std::string section;
  std::size_t lineno = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++lineno;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') detail::fail(ErrorCode::ConfigError, origin, ":", lineno, ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) detail::fail(ErrorCode::ConfigError, origin, ":", lineno, ": expected key = value");
    if (section.empty()) detail::fail(ErrorCode::ConfigError, origin, ":", lineno, ": key outside a section");
    c.set(section + "." + trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

inline Config load_config(const std::filesystem::path& path) { return parse_config(read_file(path), path.string()); }

}  // namespace domixt
