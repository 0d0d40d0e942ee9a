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

// Checkpoint file layout:
//
//   DOMIXT01\n
//   key=value lines (hyperparameters, tag, epoch, dev metrics)
//   tensors=<n>\n
//   tensor <name> <rows> <cols>\n      (n lines, in block order)
//   end\n
//   n blocks of rows*cols float32, little endian, row major

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "domixt/error.hpp"
#include "domixt/seq2seq/model.hpp"
#include "domixt/util.hpp"

namespace domixt::s2s {

inline constexpr std::string_view kCheckpointMagic = "DOMIXT01";

enum class CheckpointTag { BestDevLoss, BestDevBleu, Final };

inline std::string_view to_string(CheckpointTag t) {
  switch (t) {
    case CheckpointTag::BestDevLoss: return "best-dev-loss";
    case CheckpointTag::BestDevBleu: return "best-dev-bleu";
    case CheckpointTag::Final: return "final";
  }
  return "?";
}

inline CheckpointTag parse_checkpoint_tag(std::string_view s) {
  if (s == "best-dev-loss" || s == "best-loss") return CheckpointTag::BestDevLoss;
  if (s == "best-dev-bleu" || s == "best-bleu") return CheckpointTag::BestDevBleu;
  if (s == "final") return CheckpointTag::Final;
  detail::fail(ErrorCode::ConfigError, "unknown checkpoint tag '", s, "'");
}

struct Checkpoint {
  ModelParams<float> params;
  CheckpointTag tag = CheckpointTag::Final;
  std::size_t epoch = 0;
  double dev_loss = 0.0;
  double dev_bleu = 0.0;
};

namespace ckpt_detail {

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xFF));
}

inline float get_f32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(p[k]) << (8 * k);
  float v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace ckpt_detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  std::ostringstream head;
  head.precision(17);
  head << kCheckpointMagic << '\n' << ck.params.hp.to_text();
  head << "tag=" << to_string(ck.tag) << "\nepoch=" << ck.epoch << "\ndev_loss=" << ck.dev_loss
       << "\ndev_bleu=" << ck.dev_bleu << "\ntensors=" << ck.params.tensors.size() << '\n';
  for (const auto& [name, p] : ck.params.tensors) head << "tensor " << name << ' ' << p.value.rows() << ' ' << p.value.cols() << '\n';
  head << "end\n";
  std::string out = head.str();
  for (const auto& [name, p] : ck.params.tensors)
    for (float v : p.value.data) ckpt_detail::put_f32(out, v);
  return out;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(ck));
}

inline Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin = "checkpoint") {
  using domixt::detail::fail;
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) fail(ErrorCode::BadCheckpoint, origin, ": truncated header");
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  if (next_line() != kCheckpointMagic) fail(ErrorCode::BadCheckpoint, origin, ": bad magic");
  Checkpoint ck;
  std::vector<std::tuple<std::string, std::size_t, std::size_t>> index;
  for (;;) {
    std::string line = next_line();
    if (line == "end") break;
    if (line.rfind("tensor ", 0) == 0) {
      std::istringstream is(line.substr(7));
      std::string name;
      std::size_t r = 0, c = 0;
      if (!(is >> name >> r >> c)) fail(ErrorCode::BadCheckpoint, origin, ": bad index line '", line, "'");
      index.emplace_back(name, r, c);
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::BadCheckpoint, origin, ": bad manifest line '", line, "'");
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "tag") ck.tag = parse_checkpoint_tag(value);
    else if (key == "epoch") ck.epoch = std::stoull(value);
    else if (key == "dev_loss") ck.dev_loss = std::stod(value);
    else if (key == "dev_bleu") ck.dev_bleu = std::stod(value);
    else if (key == "tensors") continue;
    else if (!ck.params.hp.set(key, value)) fail(ErrorCode::BadCheckpoint, origin, ": unknown key '", key, "'");
  }
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  for (const auto& [name, r, c] : index) {
    std::size_t n = r * c;
    if (pos + 4 * n > bytes.size()) fail(ErrorCode::BadCheckpoint, origin, ": truncated tensor ", name);
    nn::Tensor<float> t(r, c);
    for (std::size_t k = 0; k < n; ++k) t.data[k] = ckpt_detail::get_f32(data + pos + 4 * k);
    pos += 4 * n;
    ck.params.tensors.emplace(name, nn::Param<float>(std::move(t)));
  }
  if (pos != bytes.size()) fail(ErrorCode::BadCheckpoint, origin, ": trailing bytes");
  for (const auto& [name, shape] : param_shapes(ck.params.hp)) {
    const auto& p = ck.params[name];
    if (p.value.rows() != shape.first || p.value.cols() != shape.second) {
      fail(ErrorCode::BadCheckpoint, origin, ": tensor ", name, " has the wrong shape");
    }
  }
  return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path), path.string());
}

}  // namespace domixt::s2s
