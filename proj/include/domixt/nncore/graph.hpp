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

// Tape-based reverse-mode automatic differentiation over rank-2 tensors.
//
// Nodes are appended in evaluation order, so the tape is already a
// topological order; backward() walks it once in reverse. Parameter leaves
// read their value from a Param and accumulate straight into Param::grad.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "domixt/error.hpp"
#include "domixt/nncore/tensor.hpp"

namespace domixt::nn {

template <class T>
struct Param {
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  explicit Param(Tensor<T> v) : value(std::move(v)), grad(value.shape) {}
  void zero_grad() {
    if (!grad.same_shape(value)) grad = Tensor<T>(value.shape);
    grad.fill(T(0));
  }
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

enum class Mode { Train, Eval };

template <class T>
class Graph {
 public:
  /// In Eval mode dropout is the identity and no backward closures are recorded.
  explicit Graph(Mode mode = Mode::Eval, std::uint64_t dropout_seed = 0, bool record = true)
      : mode_(mode), record_(record && mode == Mode::Train), rng_(dropout_seed) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Mode mode() const { return mode_; }
  /// Forces gradient recording in Eval mode (used by gradient checks).
  void set_recording(bool on) { record_ = on; }
  std::size_t size() const { return nodes_.size(); }

  const Tensor<T>& value(Var v) const {
    const auto& n = nodes_[static_cast<std::size_t>(v.id)];
    return n.param ? n.param->value : n.value;
  }

  Var constant(Tensor<T> t) { return push(std::move(t), false); }

  /// Trainable leaf: its gradient accumulates into p.grad.
  Var parameter(Param<T>& p) {
    Node n;
    n.param = &p;
    n.trainable = &p;
    n.needs_grad = record_;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size() - 1)};
  }

  /// Frozen leaf: read-only, never receives a gradient.
  Var parameter(const Param<T>& p) {
    Node n;
    n.param = &p;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size() - 1)};
  }

  // C = A B
  Var matmul(Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.cols() != B.rows()) {
      detail::fail(ErrorCode::ShapeMismatch, "matmul ", A.rows(), "x", A.cols(), " by ", B.rows(), "x", B.cols());
    }
    Tensor<T> C(A.rows(), B.cols());
    as_matrix(C).noalias() = as_matrix(A) * as_matrix(B);
    Var c = push(std::move(C), needs(a) || needs(b));
    if (tracks(c)) {
      closure(c, [this, a, b, c] {
        const auto& G = grad_ref(c);
        if (needs(a)) as_matrix(grad_of(a)).noalias() += as_matrix(G) * as_matrix(value(b)).transpose();
        if (needs(b)) as_matrix(grad_of(b)).noalias() += as_matrix(value(a)).transpose() * as_matrix(G);
      });
    }
    return c;
  }

  Var add(Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (!A.same_shape(B)) detail::fail(ErrorCode::ShapeMismatch, "add: shapes differ");
    Tensor<T> C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C.data[i] += B.data[i];
    Var c = push(std::move(C), needs(a) || needs(b));
    if (tracks(c)) {
      closure(c, [this, a, b, c] {
        const auto& G = grad_ref(c);
        for (Var in : {a, b}) {
          if (!needs(in)) continue;
          auto& g = grad_of(in);
          for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += G.data[i];
        }
      });
    }
    return c;
  }

  Var sub(Var a, Var b) { return add(a, scale(b, T(-1))); }

  /// Adds a 1 x n row to every row of an m x n tensor.
  Var add_row(Var a, Var bias) {
    const auto& A = value(a);
    const auto& b = value(bias);
    if (b.size() != A.cols()) detail::fail(ErrorCode::ShapeMismatch, "add_row: bias width ", b.size(), " vs ", A.cols());
    Tensor<T> C = A;
    for (std::size_t r = 0; r < C.rows(); ++r)
      for (std::size_t k = 0; k < C.cols(); ++k) C.at(r, k) += b.data[k];
    Var c = push(std::move(C), needs(a) || needs(bias));
    if (tracks(c)) {
      closure(c, [this, a, bias, c] {
        const auto& G = grad_ref(c);
        if (needs(a)) {
          auto& g = grad_of(a);
          for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += G.data[i];
        }
        if (needs(bias)) {
          auto& g = grad_of(bias);
          for (std::size_t r = 0; r < G.rows(); ++r)
            for (std::size_t k = 0; k < G.cols(); ++k) g.data[k] += G.at(r, k);
        }
      });
    }
    return c;
  }

  Var mul(Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (!A.same_shape(B)) detail::fail(ErrorCode::ShapeMismatch, "mul: shapes differ");
    Tensor<T> C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C.data[i] *= B.data[i];
    Var c = push(std::move(C), needs(a) || needs(b));
    if (tracks(c)) {
      closure(c, [this, a, b, c] {
        const auto& G = grad_ref(c);
        if (needs(a)) {
          auto& g = grad_of(a);
          const auto& Bv = value(b);
          for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += G.data[i] * Bv.data[i];
        }
        if (needs(b)) {
          auto& g = grad_of(b);
          const auto& Av = value(a);
          for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += G.data[i] * Av.data[i];
        }
      });
    }
    return c;
  }

  Var scale(Var a, T s) {
    Tensor<T> C = value(a);
    for (auto& v : C.data) v *= s;
    Var c = push(std::move(C), needs(a));
    if (tracks(c)) {
      closure(c, [this, a, c, s] {
        const auto& G = grad_ref(c);
        auto& g = grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += s * G.data[i];
      });
    }
    return c;
  }

  Var tanh(Var a) {
    Tensor<T> C = value(a);
    Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> x(C.data.data(), static_cast<Eigen::Index>(C.size()));
    x = x.tanh();
    Var c = push(std::move(C), needs(a));
    if (tracks(c)) {
      closure(c, [this, a, c] {
        const auto& G = grad_ref(c);
        const auto& Y = value(c);
        auto& g = grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += G.data[i] * (T(1) - Y.data[i] * Y.data[i]);
      });
    }
    return c;
  }

  Var sigmoid(Var a) {
    Tensor<T> C = value(a);
    Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> x(C.data.data(), static_cast<Eigen::Index>(C.size()));
    x = x.logistic();
    Var c = push(std::move(C), needs(a));
    if (tracks(c)) {
      closure(c, [this, a, c] {
        const auto& G = grad_ref(c);
        const auto& Y = value(c);
        auto& g = grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += G.data[i] * Y.data[i] * (T(1) - Y.data[i]);
      });
    }
    return c;
  }

  /// Fused LSTM gate arithmetic. `z` holds pre-activations [i | f | g | o]
  /// (rows x 4H); returns [h | c] (rows x 2H) with c = f*c_prev + i*g and h = o*tanh(c).
  Var lstm_pointwise(Var z, Var c_prev) {
    const auto& Z = value(z);
    const auto& Cp = value(c_prev);
    const std::size_t B = Z.rows(), H = Cp.cols();
    if (Z.cols() != 4 * H || Cp.rows() != B) detail::fail(ErrorCode::ShapeMismatch, "lstm_pointwise: shapes differ");
    Tensor<T> gates(B, 4 * H), tc(B, H), HC(B, 2 * H);
    using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
    using Seg = Eigen::Map<Arr>;
    using CSeg = Eigen::Map<const Arr>;
    const auto n = static_cast<Eigen::Index>(H);
    for (std::size_t r = 0; r < B; ++r) {
      const T* zr = &Z.data[r * 4 * H];
      T* a = &gates.data[r * 4 * H];
      Seg i(a, n), f(a + H, n), u(a + 2 * H, n), o(a + 3 * H, n);
      i = CSeg(zr, n).logistic();
      f = CSeg(zr + H, n).logistic();
      u = CSeg(zr + 2 * H, n).tanh();
      o = CSeg(zr + 3 * H, n).logistic();
      Seg c(&HC.data[r * 2 * H + H], n), t(&tc.data[r * H], n), h(&HC.data[r * 2 * H], n);
      c = f * CSeg(&Cp.data[r * H], n) + i * u;
      t = c.tanh();
      h = o * t;
    }
    Var out = push(std::move(HC), needs(z) || needs(c_prev));
    if (tracks(out)) {
      closure(out, [this, z, c_prev, out, gates = std::move(gates), tc = std::move(tc), B, H] {
        const auto& G = grad_ref(out);
        const auto& Cp = value(c_prev);
        Tensor<T>* gz = needs(z) ? &grad_of(z) : nullptr;
        Tensor<T>* gc = needs(c_prev) ? &grad_of(c_prev) : nullptr;
        for (std::size_t r = 0; r < B; ++r) {
          const T* a = &gates.data[r * 4 * H];
          for (std::size_t k = 0; k < H; ++k) {
            T i = a[k], f = a[H + k], u = a[2 * H + k], o = a[3 * H + k], t = tc.data[r * H + k];
            T gh = G.data[r * 2 * H + k];
            T dc = G.data[r * 2 * H + H + k] + gh * o * (T(1) - t * t);
            if (gz) {
              T* d = &gz->data[r * 4 * H];
              d[k] += dc * u * i * (T(1) - i);
              d[H + k] += dc * Cp.data[r * H + k] * f * (T(1) - f);
              d[2 * H + k] += dc * i * (T(1) - u * u);
              d[3 * H + k] += gh * t * o * (T(1) - o);
            }
            if (gc) gc->data[r * H + k] += dc * f;
          }
        }
      });
    }
    return out;
  }

  /// Row-wise softmax.
  Var softmax(Var a) {
    Tensor<T> C = value(a);
    for (std::size_t r = 0; r < C.rows(); ++r) {
      Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> x(C.row(r).data(), static_cast<Eigen::Index>(C.cols()));
      x = (x - x.maxCoeff()).exp();
      x /= x.sum();
    }
    Var c = push(std::move(C), needs(a));
    if (tracks(c)) {
      closure(c, [this, a, c] {
        const auto& G = grad_ref(c);
        const auto& Y = value(c);
        auto& g = grad_of(a);
        for (std::size_t r = 0; r < Y.rows(); ++r) {
          T dot = 0;
          for (std::size_t k = 0; k < Y.cols(); ++k) dot += G.at(r, k) * Y.at(r, k);
          for (std::size_t k = 0; k < Y.cols(); ++k) g.at(r, k) += Y.at(r, k) * (G.at(r, k) - dot);
        }
      });
    }
    return c;
  }

  Var concat_cols(const std::vector<Var>& parts) {
    std::size_t rows = value(parts.front()).rows();
    std::size_t cols = 0;
    bool ng = false;
    for (Var p : parts) {
      if (value(p).rows() != rows) detail::fail(ErrorCode::ShapeMismatch, "concat_cols: row counts differ");
      cols += value(p).cols();
      ng = ng || needs(p);
    }
    Tensor<T> C(rows, cols);
    std::size_t off = 0;
    for (Var p : parts) {
      const auto& P = value(p);
      for (std::size_t r = 0; r < rows; ++r)
        std::copy(P.row(r).begin(), P.row(r).end(), C.row(r).begin() + static_cast<std::ptrdiff_t>(off));
      off += P.cols();
    }
    Var c = push(std::move(C), ng);
    if (tracks(c)) {
      closure(c, [this, parts, c] {
        const auto& G = grad_ref(c);
        std::size_t o = 0;
        for (Var p : parts) {
          std::size_t w = value(p).cols();
          if (needs(p)) {
            auto& g = grad_of(p);
            for (std::size_t r = 0; r < G.rows(); ++r)
              for (std::size_t k = 0; k < w; ++k) g.at(r, k) += G.at(r, o + k);
          }
          o += w;
        }
      });
    }
    return c;
  }

  Var slice_cols(Var a, std::size_t begin, std::size_t width) {
    const auto& A = value(a);
    if (begin + width > A.cols()) detail::fail(ErrorCode::ShapeMismatch, "slice_cols out of range");
    Tensor<T> C(A.rows(), width);
    for (std::size_t r = 0; r < A.rows(); ++r)
      for (std::size_t k = 0; k < width; ++k) C.at(r, k) = A.at(r, begin + k);
    Var c = push(std::move(C), needs(a));
    if (tracks(c)) {
      closure(c, [this, a, c, begin, width] {
        const auto& G = grad_ref(c);
        auto& g = grad_of(a);
        for (std::size_t r = 0; r < G.rows(); ++r)
          for (std::size_t k = 0; k < width; ++k) g.at(r, begin + k) += G.at(r, k);
      });
    }
    return c;
  }

  /// Row gather: out[i] = a[ids[i]]. With a parameter matrix this is an embedding lookup.
  Var rows(Var a, std::vector<int> ids) {
    const auto& A = value(a);
    Tensor<T> C(ids.size(), A.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= A.rows()) {
        detail::fail(ErrorCode::IdOutOfRange, "row id ", ids[i], " outside [0, ", A.rows(), ")");
      }
      auto src = A.row(static_cast<std::size_t>(ids[i]));
      std::copy(src.begin(), src.end(), C.row(i).begin());
    }
    Var c = push(std::move(C), needs(a));
    if (tracks(c)) {
      closure(c, [this, a, c, ids = std::move(ids)] {
        const auto& G = grad_ref(c);
        auto& g = grad_of(a);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          auto dst = g.row(static_cast<std::size_t>(ids[i]));
          auto src = G.row(i);
          for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        }
      });
    }
    return c;
  }

  Var lookup(Var table, std::vector<int> ids) { return rows(table, std::move(ids)); }

  /// Maxout over `pieces` contiguous column blocks: out[:, j] = max_p a[:, p*w + j].
  Var max_over_groups(Var a, std::size_t pieces) {
    const auto& A = value(a);
    if (pieces == 0 || A.cols() % pieces != 0) detail::fail(ErrorCode::ShapeMismatch, "max_over_groups: bad width");
    std::size_t w = A.cols() / pieces;
    Tensor<T> C(A.rows(), w);
    std::vector<std::uint32_t> arg(A.rows() * w);
    for (std::size_t r = 0; r < A.rows(); ++r) {
      for (std::size_t j = 0; j < w; ++j) {
        std::size_t best = 0;
        for (std::size_t p = 1; p < pieces; ++p)
          if (A.at(r, p * w + j) > A.at(r, best * w + j)) best = p;
        C.at(r, j) = A.at(r, best * w + j);
        arg[r * w + j] = static_cast<std::uint32_t>(best);
      }
    }
    Var c = push(std::move(C), needs(a));
    if (tracks(c)) {
      closure(c, [this, a, c, w, arg = std::move(arg)] {
        const auto& G = grad_ref(c);
        auto& g = grad_of(a);
        for (std::size_t r = 0; r < G.rows(); ++r)
          for (std::size_t j = 0; j < w; ++j) g.at(r, arg[r * w + j] * w + j) += G.at(r, j);
      });
    }
    return c;
  }

  /// out[r] = <a[r], b[r]>, an m x 1 column.
  Var rowwise_dot(Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (!A.same_shape(B)) detail::fail(ErrorCode::ShapeMismatch, "rowwise_dot: shapes differ");
    Tensor<T> C(A.rows(), 1);
    for (std::size_t r = 0; r < A.rows(); ++r) {
      T s = 0;
      for (std::size_t k = 0; k < A.cols(); ++k) s += A.at(r, k) * B.at(r, k);
      C.data[r] = s;
    }
    Var c = push(std::move(C), needs(a) || needs(b));
    if (tracks(c)) {
      closure(c, [this, a, b, c] {
        const auto& G = grad_ref(c);
        const auto& Av = value(a);
        const auto& Bv = value(b);
        if (needs(a)) {
          auto& g = grad_of(a);
          for (std::size_t r = 0; r < Av.rows(); ++r)
            for (std::size_t k = 0; k < Av.cols(); ++k) g.at(r, k) += G.data[r] * Bv.at(r, k);
        }
        if (needs(b)) {
          auto& g = grad_of(b);
          for (std::size_t r = 0; r < Av.rows(); ++r)
            for (std::size_t k = 0; k < Av.cols(); ++k) g.at(r, k) += G.data[r] * Av.at(r, k);
        }
      });
    }
    return c;
  }

  /// Multiplies row r of `a` by column entry `col[r, idx]`.
  Var scale_rows(Var a, Var col, std::size_t idx = 0) {
    const auto& A = value(a);
    const auto& S = value(col);
    if (S.rows() != A.rows() || idx >= S.cols()) detail::fail(ErrorCode::ShapeMismatch, "scale_rows: bad scale column");
    Tensor<T> C = A;
    for (std::size_t r = 0; r < C.rows(); ++r) {
      T s = S.at(r, idx);
      for (auto& v : C.row(r)) v *= s;
    }
    Var c = push(std::move(C), needs(a) || needs(col));
    if (tracks(c)) {
      closure(c, [this, a, col, c, idx] {
        const auto& G = grad_ref(c);
        const auto& Av = value(a);
        const auto& Sv = value(col);
        if (needs(a)) {
          auto& g = grad_of(a);
          for (std::size_t r = 0; r < G.rows(); ++r) {
            T s = Sv.at(r, idx);
            for (std::size_t k = 0; k < G.cols(); ++k) g.at(r, k) += s * G.at(r, k);
          }
        }
        if (needs(col)) {
          auto& g = grad_of(col);
          for (std::size_t r = 0; r < G.rows(); ++r) {
            T s = 0;
            for (std::size_t k = 0; k < G.cols(); ++k) s += G.at(r, k) * Av.at(r, k);
            g.at(r, idx) += s;
          }
        }
      });
    }
    return c;
  }

  /// Row-wise select: out[r] = keep[r] ? a[r] : b[r]. Keeps recurrent state
  /// frozen across padded positions.
  Var select_rows(const std::vector<unsigned char>& keep, Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (!A.same_shape(B) || keep.size() != A.rows()) detail::fail(ErrorCode::ShapeMismatch, "select_rows: shapes differ");
    Tensor<T> C(A.rows(), A.cols());
    for (std::size_t r = 0; r < A.rows(); ++r) {
      const auto& src = keep[r] ? A : B;
      std::copy(src.row(r).begin(), src.row(r).end(), C.row(r).begin());
    }
    Var c = push(std::move(C), needs(a) || needs(b));
    if (tracks(c)) {
      closure(c, [this, keep, a, b, c] {
        const auto& G = grad_ref(c);
        for (std::size_t r = 0; r < G.rows(); ++r) {
          Var dst = keep[r] ? a : b;
          if (!needs(dst)) continue;
          auto& g = grad_of(dst);
          for (std::size_t k = 0; k < G.cols(); ++k) g.at(r, k) += G.at(r, k);
        }
      });
    }
    return c;
  }

  /// Inverted dropout: survivors are scaled by 1/(1-rate). Identity in Eval mode.
  Var dropout(Var a, double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) detail::fail(ErrorCode::InvalidRate, "dropout rate ", rate, " not in [0, 1)");
    if (mode_ == Mode::Eval || rate == 0.0) return a;
    const auto& A = value(a);
    Tensor<T> mask(A.shape);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    for (auto& m : mask.data) m = u(rng_) < rate ? T(0) : keep_scale;
    return mul(a, constant(std::move(mask)));
  }

  /// Sum over rows of w[r] * -log softmax(logits[r])[targets[r]]; a 1 x 1 result.
  Var cross_entropy(Var logits, std::vector<int> targets, std::vector<T> weights) {
    const auto& L = value(logits);
    if (targets.size() != L.rows() || weights.size() != L.rows()) {
      detail::fail(ErrorCode::ShapeMismatch, "cross_entropy: ", targets.size(), " targets for ", L.rows(), " rows");
    }
    Tensor<T> probs(L.rows(), L.cols());
    T total = 0;
    for (std::size_t r = 0; r < L.rows(); ++r) {
      if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= L.cols()) {
        detail::fail(ErrorCode::IdOutOfRange, "target id ", targets[r], " outside [0, ", L.cols(), ")");
      }
      auto row = L.row(r);
      const auto n = static_cast<Eigen::Index>(L.cols());
      Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> x(row.data(), n);
      Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> p(&probs.data[r * L.cols()], n);
      T mx = x.maxCoeff();
      p = (x - mx).exp();
      T z = p.sum();
      T logz = mx + std::log(z);
      p /= z;
      if (weights[r] != T(0)) total += weights[r] * (logz - row[static_cast<std::size_t>(targets[r])]);
    }
    Tensor<T> out(1, 1, total);
    Var c = push(std::move(out), needs(logits));
    if (tracks(c)) {
      closure(c, [this, logits, c, targets = std::move(targets), weights = std::move(weights),
                  probs = std::move(probs)] {
        T gsc = grad_ref(c).data[0];
        auto& g = grad_of(logits);
        for (std::size_t r = 0; r < probs.rows(); ++r) {
          if (weights[r] == T(0)) continue;
          T w = gsc * weights[r];
          for (std::size_t k = 0; k < probs.cols(); ++k) g.at(r, k) += w * probs.at(r, k);
          g.at(r, static_cast<std::size_t>(targets[r])) -= w;
        }
      });
    }
    return c;
  }

  Var sum(Var a) {
    const auto& A = value(a);
    T s = 0;
    for (T v : A.data) s += v;
    Var c = push(Tensor<T>(1, 1, s), needs(a));
    if (tracks(c)) {
      closure(c, [this, a, c] {
        T gsc = grad_ref(c).data[0];
        auto& g = grad_of(a);
        for (auto& v : g.data) v += gsc;
      });
    }
    return c;
  }

  /// Seeds d(root)/d(root) = 1 and propagates to every reachable node.
  void backward(Var root) {
    if (value(root).size() != 1) detail::fail(ErrorCode::ShapeMismatch, "backward needs a scalar root");
    if (!needs(root)) return;
    grad_of(root).data[0] += T(1);
    for (int i = root.id; i >= 0; --i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (n.backprop && n.grad_ready) n.backprop();
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    const Param<T>* param = nullptr;
    Param<T>* trainable = nullptr;
    bool needs_grad = false;
    bool grad_ready = false;
    std::function<void()> backprop;
  };

  Var push(Tensor<T> v, bool needs_grad) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad && record_;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size() - 1)};
  }

  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
  bool tracks(Var v) const { return record_ && needs(v); }

  template <class F>
  void closure(Var v, F&& f) {
    nodes_[static_cast<std::size_t>(v.id)].backprop = std::forward<F>(f);
  }

  Tensor<T>& grad_of(Var v) {
    auto& n = nodes_[static_cast<std::size_t>(v.id)];
    n.grad_ready = true;
    if (n.trainable) {
      if (!n.trainable->grad.same_shape(n.trainable->value)) n.trainable->grad = Tensor<T>(n.trainable->value.shape);
      return n.trainable->grad;
    }
    if (n.grad.size() != n.value.size()) n.grad = Tensor<T>(n.value.shape);
    return n.grad;
  }
  const Tensor<T>& grad_ref(Var v) { return grad_of(v); }

  Mode mode_;
  bool record_;
  std::mt19937_64 rng_;
  std::vector<Node> nodes_;
};

}  // namespace domixt::nn
