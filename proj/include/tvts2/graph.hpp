/*
 * Copyright (c) 2026 The TVTS2 Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tvts2/common.hpp"
#include "tvts2/optim.hpp"
#include "tvts2/tensor.hpp"

namespace tvts2 {

// Reverse-mode autodiff tape. Each op appends a node holding the forward
// value and a closure that scatters the node's output gradient into its
// inputs. Nodes whose inputs carry no gradient get no closure, so inference
// graphs pay only the forward cost.
//
// Var handles are indices into one graph; they must not cross graphs.
template <typename T>
class Graph {
 public:
  struct Var {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
  };

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MMap = Eigen::Map<EMat>;
  using CMap = Eigen::Map<const EMat>;

  // ---- leaves -------------------------------------------------------------

  Var input(Tensor<T> v) { return push(std::move(v), false, nullptr); }

  Var leaf(Tensor<T> v) { return push(std::move(v), grad_enabled_, nullptr); }

  // Binds a parameter: the node gets a copy of the current value, and
  // accumulate_param_grads() later adds the node gradient into p.grad.
  // Frozen parameters enter as plain inputs (no gradient work at all).
  Var param(Parameter<T>& p) {
    auto it = param_cache_.find(&p);
    if (it != param_cache_.end()) return Var{it->second};
    bool track = grad_enabled_ && !p.frozen;
    Var v = push(p.value, track, nullptr);
    nodes_[v.id].bound = track ? &p : nullptr;
    if (track) param_order_.push_back(v.id);
    param_cache_.emplace(&p, v.id);
    return v;
  }

  // ---- elementwise / linear ----------------------------------------------

  Var add(Var a, Var b) {
    const Tensor<T>&A = val(a), &B = val(b);
    if (!A.same_shape(B)) throw DimensionError("add: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    Tensor<T> out = A;
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) += B.at(i);
    return unary_binary(std::move(out), a, b, [](Graph& g, int32_t self, int32_t ia, int32_t ib) {
      const auto& gr = g.nodes_[self].grad;
      if (g.wants(ia)) {
        auto& da = g.ensure_grad(ia);
        for (size_t i = 0; i < gr.size(); ++i) da[i] += gr[i];
      }
      if (g.wants(ib)) {
        auto& db = g.ensure_grad(ib);
        for (size_t i = 0; i < gr.size(); ++i) db[i] += gr[i];
      }
    });
  }

  Var mul(Var a, Var b) {
    const Tensor<T>&A = val(a), &B = val(b);
    if (!A.same_shape(B)) throw DimensionError("mul: shape mismatch");
    Tensor<T> out = A;
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) *= B.at(i);
    return unary_binary(std::move(out), a, b, [](Graph& g, int32_t self, int32_t ia, int32_t ib) {
      const auto& gr = g.nodes_[self].grad;
      const auto& A = g.nodes_[ia].value.data;
      const auto& B = g.nodes_[ib].value.data;
      if (g.wants(ia)) {
        auto& da = g.ensure_grad(ia);
        for (size_t i = 0; i < gr.size(); ++i) da[i] += gr[i] * B[i];
      }
      if (g.wants(ib)) {
        auto& db = g.ensure_grad(ib);
        for (size_t i = 0; i < gr.size(); ++i) db[i] += gr[i] * A[i];
      }
    });
  }

  Var scale(Var a, T s) {
    Tensor<T> out = val(a);
    for (auto& x : out.data) x *= s;
    Var o = push(std::move(out), wants(a), nullptr);
    if (nodes_[o.id].requires_grad) {
      int32_t ia = a.id;
      nodes_[o.id].backward = [ia, s](Graph& g, int32_t self) {
        const auto& gr = g.nodes_[self].grad;
        auto& da = g.ensure_grad(ia);
        for (size_t i = 0; i < gr.size(); ++i) da[i] += gr[i] * s;
      };
    }
    return o;
  }

  Var add_rowvec(Var x, Var v) {
    const Tensor<T>&X = val(x), &V = val(v);
    if (X.ndim() != 2 || V.ndim() != 2 || V.rows() != 1 || V.cols() != X.cols())
      throw DimensionError("add_rowvec: need [R x C] and [1 x C]");
    Tensor<T> out = X;
    int64_t R = X.rows(), C = X.cols();
    for (int64_t r = 0; r < R; ++r)
      for (int64_t c = 0; c < C; ++c) out.at(r, c) += V.at(0, c);
    return unary_binary(std::move(out), x, v, [](Graph& g, int32_t self, int32_t ix, int32_t iv) {
      const auto& node = g.nodes_[self];
      const auto& gr = node.grad;
      int64_t C = node.value.cols();
      int64_t R = node.value.rows();
      if (g.wants(ix)) {
        auto& dx = g.ensure_grad(ix);
        for (size_t i = 0; i < gr.size(); ++i) dx[i] += gr[i];
      }
      if (g.wants(iv)) {
        auto& dv = g.ensure_grad(iv);
        for (int64_t r = 0; r < R; ++r)
          for (int64_t c = 0; c < C; ++c) dv[static_cast<size_t>(c)] += gr[static_cast<size_t>(r * C + c)];
      }
    });
  }

  Var matmul(Var a, Var b) { return matmul_impl(a, b, false); }

  // a [m x k] times b' [n x k] transposed: out = a * b^T.
  Var matmul_nt(Var a, Var b) { return matmul_impl(a, b, true); }

  // x*w + bias row. bias may be invalid (Var{}) for a pure projection.
  Var affine(Var x, Var w, Var bias) {
    const Tensor<T>&X = val(x), &W = val(w);
    if (X.ndim() != 2 || W.ndim() != 2 || X.cols() != W.rows())
      throw DimensionError("affine: " + X.shape_str() + " x " + W.shape_str());
    int64_t R = X.rows(), O = W.cols();
    Tensor<T> out({R, O});
    MMap(out.data.data(), R, O).noalias() =
        CMap(X.data.data(), R, X.cols()) * CMap(W.data.data(), W.rows(), O);
    if (bias.valid()) {
      const Tensor<T>& Bv = val(bias);
      if (Bv.ndim() != 2 || Bv.rows() != 1 || Bv.cols() != O)
        throw DimensionError("affine: bias must be [1 x out]");
      for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < O; ++c) out.at(r, c) += Bv.at(0, c);
    }
    bool track = wants(x) || wants(w) || (bias.valid() && wants(bias));
    Var o = push(std::move(out), track, nullptr);
    if (nodes_[o.id].requires_grad) {
      int32_t ix = x.id, iw = w.id, ib = bias.valid() ? bias.id : -1;
      nodes_[o.id].backward = [ix, iw, ib](Graph& g, int32_t self) {
        const auto& node = g.nodes_[self];
        int64_t R = node.value.rows(), O = node.value.cols();
        const Tensor<T>& X = g.nodes_[ix].value;
        const Tensor<T>& W = g.nodes_[iw].value;
        CMap G(node.grad.data(), R, O);
        if (g.wants(ix)) {
          MMap DX(g.ensure_grad(ix).data(), R, X.cols());
          DX.noalias() += G * CMap(W.data.data(), W.rows(), O).transpose();
        }
        if (g.wants(iw)) {
          MMap DW(g.ensure_grad(iw).data(), W.rows(), O);
          DW.noalias() += CMap(X.data.data(), R, X.cols()).transpose() * G;
        }
        if (ib >= 0 && g.wants(ib)) {
          auto& db = g.ensure_grad(ib);
          for (int64_t r = 0; r < R; ++r)
            for (int64_t c = 0; c < O; ++c) db[static_cast<size_t>(c)] += node.grad[static_cast<size_t>(r * O + c)];
        }
      };
    }
    return o;
  }

  // ---- row shuffling ------------------------------------------------------

  Var gather_rows(Var x, std::vector<int32_t> rows) {
    const Tensor<T>& X = val(x);
    if (X.ndim() != 2) throw DimensionError("gather_rows: need 2-D input");
    int64_t C = X.cols();
    for (int32_t r : rows)
      if (r < 0 || r >= X.rows()) throw IndexError("gather_rows: row out of range");
    Tensor<T> out({static_cast<int64_t>(rows.size()), C});
    for (size_t i = 0; i < rows.size(); ++i)
      std::copy_n(&X.at(rows[i], 0), C, &out.at(static_cast<int64_t>(i), 0));
    Var o = push(std::move(out), wants(x), nullptr);
    if (nodes_[o.id].requires_grad) {
      int32_t ix = x.id;
      nodes_[o.id].backward = [ix, rows = std::move(rows)](Graph& g, int32_t self) {
        const auto& node = g.nodes_[self];
        int64_t C = node.value.cols();
        auto& dx = g.ensure_grad(ix);
        for (size_t i = 0; i < rows.size(); ++i) {
          const T* src = &node.grad[i * static_cast<size_t>(C)];
          T* dst = &dx[static_cast<size_t>(rows[i]) * static_cast<size_t>(C)];
          for (int64_t c = 0; c < C; ++c) dst[c] += src[c];
        }
      };
    }
    return o;
  }

  // out has out_rows rows; out[rows[i]] = x[i], unlisted rows are zero.
  // Target rows must be unique.
  Var scatter_rows(Var x, std::vector<int32_t> rows, int64_t out_rows) {
    const Tensor<T>& X = val(x);
    if (X.ndim() != 2) throw DimensionError("scatter_rows: need 2-D input");
    if (static_cast<int64_t>(rows.size()) != X.rows())
      throw DimensionError("scatter_rows: row list must match input rows");
    std::vector<char> seen(static_cast<size_t>(out_rows), 0);
    for (int32_t r : rows) {
      if (r < 0 || r >= out_rows) throw IndexError("scatter_rows: row out of range");
      if (seen[static_cast<size_t>(r)]) throw ContractError("scatter_rows: duplicate target row");
      seen[static_cast<size_t>(r)] = 1;
    }
    int64_t C = X.cols();
    Tensor<T> out({out_rows, C});
    for (size_t i = 0; i < rows.size(); ++i)
      std::copy_n(&X.at(static_cast<int64_t>(i), 0), C, &out.at(rows[i], 0));
    Var o = push(std::move(out), wants(x), nullptr);
    if (nodes_[o.id].requires_grad) {
      int32_t ix = x.id;
      nodes_[o.id].backward = [ix, rows = std::move(rows)](Graph& g, int32_t self) {
        const auto& node = g.nodes_[self];
        int64_t C = node.value.cols();
        auto& dx = g.ensure_grad(ix);
        for (size_t i = 0; i < rows.size(); ++i) {
          const T* src = &node.grad[static_cast<size_t>(rows[i]) * static_cast<size_t>(C)];
          T* dst = &dx[i * static_cast<size_t>(C)];
          for (int64_t c = 0; c < C; ++c) dst[c] += src[c];
        }
      };
    }
    return o;
  }

  Var concat_rows(const std::vector<Var>& xs) {
    if (xs.empty()) throw ContractError("concat_rows: empty list");
    int64_t C = val(xs[0]).cols(), R = 0;
    bool track = false;
    for (Var v : xs) {
      const Tensor<T>& X = val(v);
      if (X.ndim() != 2 || X.cols() != C) throw DimensionError("concat_rows: column mismatch");
      R += X.rows();
      track = track || wants(v);
    }
    Tensor<T> out({R, C});
    int64_t at = 0;
    std::vector<std::pair<int32_t, int64_t>> spans;  // (input id, first out row)
    for (Var v : xs) {
      const Tensor<T>& X = val(v);
      std::copy_n(X.data.data(), X.numel(), &out.at(at, 0));
      spans.emplace_back(v.id, at);
      at += X.rows();
    }
    Var o = push(std::move(out), track, nullptr);
    if (nodes_[o.id].requires_grad) {
      nodes_[o.id].backward = [spans = std::move(spans)](Graph& g, int32_t self) {
        const auto& node = g.nodes_[self];
        int64_t C = node.value.cols();
        for (auto [id, first] : spans) {
          if (!g.wants(id)) continue;
          auto& dx = g.ensure_grad(id);
          const T* src = &node.grad[static_cast<size_t>(first * C)];
          for (size_t i = 0; i < dx.size(); ++i) dx[i] += src[i];
        }
      };
    }
    return o;
  }

  // ---- reductions ---------------------------------------------------------

  Var mean_rows(Var x) {
    const Tensor<T>& X = val(x);
    if (X.ndim() != 2 || X.rows() == 0) throw DimensionError("mean_rows: need non-empty 2-D");
    int64_t R = X.rows(), C = X.cols();
    Tensor<T> out({1, C});
    for (int64_t r = 0; r < R; ++r)
      for (int64_t c = 0; c < C; ++c) out.at(0, c) += X.at(r, c);
    for (int64_t c = 0; c < C; ++c) out.at(0, c) /= static_cast<T>(R);
    Var o = push(std::move(out), wants(x), nullptr);
    if (nodes_[o.id].requires_grad) {
      int32_t ix = x.id;
      nodes_[o.id].backward = [ix, R, C](Graph& g, int32_t self) {
        const auto& gr = g.nodes_[self].grad;
        auto& dx = g.ensure_grad(ix);
        T inv = T(1) / static_cast<T>(R);
        for (int64_t r = 0; r < R; ++r)
          for (int64_t c = 0; c < C; ++c) dx[static_cast<size_t>(r * C + c)] += gr[static_cast<size_t>(c)] * inv;
      };
    }
    return o;
  }

  Var sum_all(Var x) {
    const Tensor<T>& X = val(x);
    T s = T(0);
    for (const T& v : X.data) s += v;
    Tensor<T> out({1});
    out.at(0) = s;
    Var o = push(std::move(out), wants(x), nullptr);
    if (nodes_[o.id].requires_grad) {
      int32_t ix = x.id;
      nodes_[o.id].backward = [ix](Graph& g, int32_t self) {
        T gr = g.nodes_[self].grad[0];
        auto& dx = g.ensure_grad(ix);
        for (auto& v : dx) v += gr;
      };
    }
    return o;
  }

  // ---- nonlinearities -----------------------------------------------------

  Var gelu(Var x) {
    const Tensor<T>& X = val(x);
    Tensor<T> out = X;
    for (auto& v : out.data) {
      double xv = static_cast<double>(v);
      v = static_cast<T>(xv * 0.5 * (1.0 + std::erf(xv * 0.7071067811865475244)));
    }
    Var o = push(std::move(out), wants(x), nullptr);
    if (nodes_[o.id].requires_grad) {
      int32_t ix = x.id;
      nodes_[o.id].backward = [ix](Graph& g, int32_t self) {
        const auto& gr = g.nodes_[self].grad;
        const auto& X = g.nodes_[ix].value.data;
        auto& dx = g.ensure_grad(ix);
        for (size_t i = 0; i < gr.size(); ++i) {
          double xv = static_cast<double>(X[i]);
          double cdf = 0.5 * (1.0 + std::erf(xv * 0.7071067811865475244));
          double pdf = std::exp(-0.5 * xv * xv) * 0.3989422804014326779;
          dx[i] += gr[i] * static_cast<T>(cdf + xv * pdf);
        }
      };
    }
    return o;
  }

  Var layer_norm(Var x, Var gain, Var bias, T eps) {
    const Tensor<T>&X = val(x), &G = val(gain), &B = val(bias);
    if (X.ndim() != 2) throw DimensionError("layer_norm: need 2-D input");
    int64_t R = X.rows(), C = X.cols();
    if (G.numel() != C || B.numel() != C)
      throw DimensionError("layer_norm: gain/bias must have one entry per column");
    Tensor<T> xhat({R, C});
    std::vector<T> inv_std(static_cast<size_t>(R));
    Tensor<T> out({R, C});
    for (int64_t r = 0; r < R; ++r) {
      T mu = T(0);
      for (int64_t c = 0; c < C; ++c) mu += X.at(r, c);
      mu /= static_cast<T>(C);
      T var = T(0);
      for (int64_t c = 0; c < C; ++c) {
        T d = X.at(r, c) - mu;
        var += d * d;
      }
      var /= static_cast<T>(C);
      T is = T(1) / std::sqrt(var + eps);
      inv_std[static_cast<size_t>(r)] = is;
      for (int64_t c = 0; c < C; ++c) {
        T xh = (X.at(r, c) - mu) * is;
        xhat.at(r, c) = xh;
        out.at(r, c) = G.at(c) * xh + B.at(c);
      }
    }
    bool track = wants(x) || wants(gain) || wants(bias);
    Var o = push(std::move(out), track, nullptr);
    if (nodes_[o.id].requires_grad) {
      int32_t ix = x.id, ig = gain.id, ib = bias.id;
      nodes_[o.id].backward = [ix, ig, ib, xhat = std::move(xhat),
                               inv_std = std::move(inv_std)](Graph& g, int32_t self) {
        const auto& node = g.nodes_[self];
        int64_t R = node.value.rows(), C = node.value.cols();
        const auto& gr = node.grad;
        const auto& G = g.nodes_[ig].value.data;
        if (g.wants(ig)) {
          auto& dg = g.ensure_grad(ig);
          for (int64_t r = 0; r < R; ++r)
            for (int64_t c = 0; c < C; ++c)
              dg[static_cast<size_t>(c)] += gr[static_cast<size_t>(r * C + c)] * xhat.at(r, c);
        }
        if (g.wants(ib)) {
          auto& db = g.ensure_grad(ib);
          for (int64_t r = 0; r < R; ++r)
            for (int64_t c = 0; c < C; ++c) db[static_cast<size_t>(c)] += gr[static_cast<size_t>(r * C + c)];
        }
        if (g.wants(ix)) {
          auto& dx = g.ensure_grad(ix);
          for (int64_t r = 0; r < R; ++r) {
            T mean_dy = T(0), mean_dy_xh = T(0);
            for (int64_t c = 0; c < C; ++c) {
              T dy = gr[static_cast<size_t>(r * C + c)] * G[static_cast<size_t>(c)];
              mean_dy += dy;
              mean_dy_xh += dy * xhat.at(r, c);
            }
            mean_dy /= static_cast<T>(C);
            mean_dy_xh /= static_cast<T>(C);
            T is = inv_std[static_cast<size_t>(r)];
            for (int64_t c = 0; c < C; ++c) {
              T dy = gr[static_cast<size_t>(r * C + c)] * G[static_cast<size_t>(c)];
              dx[static_cast<size_t>(r * C + c)] += is * (dy - mean_dy - xhat.at(r, c) * mean_dy_xh);
            }
          }
        }
      };
    }
    return o;
  }

  Var softmax_rows(Var x) {
    const Tensor<T>& X = val(x);
    if (X.ndim() != 2) throw DimensionError("softmax: need 2-D input");
    for (const T& v : X.data)
      if (!std::isfinite(static_cast<double>(v)))
        throw NumericError("softmax: non-finite input");
    int64_t R = X.rows(), C = X.cols();
    Tensor<T> out({R, C});
    for (int64_t r = 0; r < R; ++r) {
      T mx = X.at(r, 0);
      for (int64_t c = 1; c < C; ++c) mx = std::max(mx, X.at(r, c));
      T z = T(0);
      for (int64_t c = 0; c < C; ++c) {
        T e = std::exp(X.at(r, c) - mx);
        out.at(r, c) = e;
        z += e;
      }
      for (int64_t c = 0; c < C; ++c) out.at(r, c) /= z;
    }
    Var o = push(std::move(out), wants(x), nullptr);
    if (nodes_[o.id].requires_grad) {
      int32_t ix = x.id;
      nodes_[o.id].backward = [ix](Graph& g, int32_t self) {
        const auto& node = g.nodes_[self];
        int64_t R = node.value.rows(), C = node.value.cols();
        const auto& gr = node.grad;
        const auto& P = node.value;
        auto& dx = g.ensure_grad(ix);
        for (int64_t r = 0; r < R; ++r) {
          T dot = T(0);
          for (int64_t c = 0; c < C; ++c) dot += gr[static_cast<size_t>(r * C + c)] * P.at(r, c);
          for (int64_t c = 0; c < C; ++c)
            dx[static_cast<size_t>(r * C + c)] += P.at(r, c) * (gr[static_cast<size_t>(r * C + c)] - dot);
        }
      };
    }
    return o;
  }

  Var l2_normalize_rows(Var x) {
    const T eps = static_cast<T>(1e-12);
    const Tensor<T>& X = val(x);
    if (X.ndim() != 2) throw DimensionError("l2_normalize: need 2-D input");
    int64_t R = X.rows(), C = X.cols();
    Tensor<T> out({R, C});
    std::vector<T> inv_norm(static_cast<size_t>(R));
    for (int64_t r = 0; r < R; ++r) {
      T s = T(0);
      for (int64_t c = 0; c < C; ++c) s += X.at(r, c) * X.at(r, c);
      T in = T(1) / std::sqrt(s + eps);
      inv_norm[static_cast<size_t>(r)] = in;
      for (int64_t c = 0; c < C; ++c) out.at(r, c) = X.at(r, c) * in;
    }
    Var o = push(std::move(out), wants(x), nullptr);
    if (nodes_[o.id].requires_grad) {
      int32_t ix = x.id;
      nodes_[o.id].backward = [ix, inv_norm = std::move(inv_norm)](Graph& g, int32_t self) {
        const auto& node = g.nodes_[self];
        int64_t R = node.value.rows(), C = node.value.cols();
        const auto& gr = node.grad;
        const auto& X = g.nodes_[ix].value;
        auto& dx = g.ensure_grad(ix);
        for (int64_t r = 0; r < R; ++r) {
          T in = inv_norm[static_cast<size_t>(r)];
          T dot = T(0);
          for (int64_t c = 0; c < C; ++c) dot += gr[static_cast<size_t>(r * C + c)] * X.at(r, c);
          for (int64_t c = 0; c < C; ++c)
            dx[static_cast<size_t>(r * C + c)] +=
                gr[static_cast<size_t>(r * C + c)] * in - X.at(r, c) * dot * in * in * in;
        }
      };
    }
    return o;
  }

  Var stop_gradient(Var x) { return push(val(x), false, nullptr); }

  // ---- fused blocks ---------------------------------------------------

  // Multi-head scaled dot-product attention over packed 2-D states.
  // q [s x D], k/v [s' x D]. With causal=true (requires s == s'), query i only
  // attends to keys 0..i.
  Var attention(Var q, Var k, Var v, int heads, bool causal) {
    const Tensor<T>&Q = val(q), &K = val(k), &V = val(v);
    if (Q.ndim() != 2 || K.ndim() != 2 || V.ndim() != 2)
      throw DimensionError("attention: need 2-D q/k/v");
    int64_t D = Q.cols();
    if (K.cols() != D || V.cols() != D) throw DimensionError("attention: width mismatch");
    if (K.rows() != V.rows()) throw DimensionError("attention: k/v row mismatch");
    if (heads <= 0 || D % heads != 0) throw ConfigError("attention: heads must divide width");
    int64_t s = Q.rows(), sp = K.rows(), dh = D / heads;
    if (causal && s != sp) throw ContractError("attention: causal needs square shape");
    T scl = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    Tensor<T> out({s, D});
    Tensor<T> probs({heads, s, sp});  // saved for backward
    EMat S(s, sp);
    for (int h = 0; h < heads; ++h) {
      CMap Qm(Q.data.data(), s, D), Km(K.data.data(), sp, D), Vm(V.data.data(), sp, D);
      auto Qh = Qm.middleCols(h * dh, dh);
      auto Kh = Km.middleCols(h * dh, dh);
      auto Vh = Vm.middleCols(h * dh, dh);
      S.noalias() = Qh * Kh.transpose() * scl;
      T* P = &probs.data[static_cast<size_t>(h) * static_cast<size_t>(s * sp)];
      for (int64_t i = 0; i < s; ++i) {
        int64_t lim = causal ? i + 1 : sp;
        T mx = S(i, 0);
        for (int64_t j = 1; j < lim; ++j) mx = std::max(mx, S(i, j));
        if (!std::isfinite(static_cast<double>(mx)))
          throw NumericError("attention: non-finite scores");
        T z = T(0);
        for (int64_t j = 0; j < lim; ++j) {
          T e = std::exp(S(i, j) - mx);
          P[i * sp + j] = e;
          z += e;
        }
        for (int64_t j = 0; j < lim; ++j) P[i * sp + j] /= z;
        for (int64_t j = lim; j < sp; ++j) P[i * sp + j] = T(0);
      }
      MMap Om(out.data.data(), s, D);
      Om.middleCols(h * dh, dh).noalias() =
          CMap(P, s, sp) * Vh;
    }

    bool track = wants(q) || wants(k) || wants(v);
    Var o = push(std::move(out), track, nullptr);
    if (nodes_[o.id].requires_grad) {
      int32_t iq = q.id, ik = k.id, iv = v.id;
      nodes_[o.id].backward = [iq, ik, iv, heads, dh, scl,
                               probs = std::move(probs)](Graph& g, int32_t self) {
        const auto& node = g.nodes_[self];
        int64_t s = node.value.rows(), D = node.value.cols();
        int64_t sp = probs.shape[2];
        const Tensor<T>& Q = g.nodes_[iq].value;
        const Tensor<T>& K = g.nodes_[ik].value;
        const Tensor<T>& V = g.nodes_[iv].value;
        CMap Gm(node.grad.data(), s, D);
        CMap Qm(Q.data.data(), s, D), Km(K.data.data(), sp, D), Vm(V.data.data(), sp, D);
        bool wq = g.wants(iq), wk = g.wants(ik), wv = g.wants(iv);
        T* dq = wq ? g.ensure_grad(iq).data() : nullptr;
        T* dk = wk ? g.ensure_grad(ik).data() : nullptr;
        T* dv = wv ? g.ensure_grad(iv).data() : nullptr;
        EMat dP(s, sp), dS(s, sp);
        for (int h = 0; h < heads; ++h) {
          CMap Pm(&probs.data[static_cast<size_t>(h) * static_cast<size_t>(s * sp)], s, sp);
          auto Gh = Gm.middleCols(h * dh, dh);
          auto Vh = Vm.middleCols(h * dh, dh);
          if (wv) {
            MMap DV(dv, sp, D);
            DV.middleCols(h * dh, dh).noalias() += Pm.transpose() * Gh;
          }
          if (!wq && !wk) continue;
          dP.noalias() = Gh * Vh.transpose();
          for (int64_t i = 0; i < s; ++i) {
            T dot = T(0);
            for (int64_t j = 0; j < sp; ++j) dot += dP(i, j) * Pm(i, j);
            for (int64_t j = 0; j < sp; ++j) dS(i, j) = Pm(i, j) * (dP(i, j) - dot);
          }
          if (wq) {
            MMap DQ(dq, s, D);
            DQ.middleCols(h * dh, dh).noalias() += dS * Km.middleCols(h * dh, dh) * scl;
          }
          if (wk) {
            MMap DK(dk, sp, D);
            DK.middleCols(h * dh, dh).noalias() += dS.transpose() * Qm.middleCols(h * dh, dh) * scl;
          }
        }
      };
    }
    return o;
  }

  // Mean cross entropy from raw logits; fused log-softmax for stability.
  Var cross_entropy(Var logits, std::vector<int32_t> targets) {
    const Tensor<T>& X = val(logits);
    if (X.ndim() != 2) throw DimensionError("cross_entropy: need 2-D logits");
    int64_t R = X.rows(), C = X.cols();
    if (static_cast<int64_t>(targets.size()) != R)
      throw DimensionError("cross_entropy: one target per row");
    for (int32_t t : targets)
      if (t < 0 || t >= C) throw IndexError("cross_entropy: target out of range");
    for (const T& v : X.data)
      if (!std::isfinite(static_cast<double>(v)))
        throw NumericError("cross_entropy: non-finite logits");
    Tensor<T> probs({R, C});
    T total = T(0);
    for (int64_t r = 0; r < R; ++r) {
      T mx = X.at(r, 0);
      for (int64_t c = 1; c < C; ++c) mx = std::max(mx, X.at(r, c));
      T z = T(0);
      for (int64_t c = 0; c < C; ++c) {
        T e = std::exp(X.at(r, c) - mx);
        probs.at(r, c) = e;
        z += e;
      }
      for (int64_t c = 0; c < C; ++c) probs.at(r, c) /= z;
      T lse = mx + std::log(z);
      total += lse - X.at(r, targets[static_cast<size_t>(r)]);
    }
    Tensor<T> out({1});
    out.at(0) = total / static_cast<T>(R);
    Var o = push(std::move(out), wants(logits), nullptr);
    if (nodes_[o.id].requires_grad) {
      int32_t ix = logits.id;
      nodes_[o.id].backward = [ix, targets = std::move(targets),
                               probs = std::move(probs)](Graph& g, int32_t self) {
        T gr = g.nodes_[self].grad[0];
        int64_t R = probs.rows(), C = probs.cols();
        auto& dx = g.ensure_grad(ix);
        T inv = gr / static_cast<T>(R);
        for (int64_t r = 0; r < R; ++r) {
          for (int64_t c = 0; c < C; ++c) dx[static_cast<size_t>(r * C + c)] += probs.at(r, c) * inv;
          dx[static_cast<size_t>(r * C + targets[static_cast<size_t>(r)])] -= inv;
        }
      };
    }
    return o;
  }

  // Adds spatial (per position within a frame) and temporal (per frame)
  // embedding rows to a frame-major token matrix [T*N x C].
  Var add_positional(Var tokens, Var es, Var et) {
    const Tensor<T>&X = val(tokens), &Es = val(es), &Et = val(et);
    if (X.ndim() != 2 || Es.ndim() != 2 || Et.ndim() != 2)
      throw DimensionError("add_positional: need 2-D inputs");
    int64_t C = X.cols(), N = Es.rows(), Tn = Et.rows();
    if (Es.cols() != C || Et.cols() != C) throw DimensionError("add_positional: width mismatch");
    if (X.rows() != N * Tn) throw DimensionError("add_positional: rows must equal T*N");
    Tensor<T> out = X;
    for (int64_t y = 0; y < Tn; ++y)
      for (int64_t p = 0; p < N; ++p)
        for (int64_t c = 0; c < C; ++c)
          out.at(y * N + p, c) += Es.at(p, c) + Et.at(y, c);
    bool track = wants(tokens) || wants(es) || wants(et);
    Var o = push(std::move(out), track, nullptr);
    if (nodes_[o.id].requires_grad) {
      int32_t ix = tokens.id, is = es.id, it = et.id;
      nodes_[o.id].backward = [ix, is, it, N, Tn](Graph& g, int32_t self) {
        const auto& node = g.nodes_[self];
        int64_t C = node.value.cols();
        const auto& gr = node.grad;
        if (g.wants(ix)) {
          auto& dx = g.ensure_grad(ix);
          for (size_t i = 0; i < gr.size(); ++i) dx[i] += gr[i];
        }
        if (g.wants(is)) {
          auto& ds = g.ensure_grad(is);
          for (int64_t y = 0; y < Tn; ++y)
            for (int64_t p = 0; p < N; ++p)
              for (int64_t c = 0; c < C; ++c)
                ds[static_cast<size_t>(p * C + c)] += gr[static_cast<size_t>((y * N + p) * C + c)];
        }
        if (g.wants(it)) {
          auto& dt = g.ensure_grad(it);
          for (int64_t y = 0; y < Tn; ++y)
            for (int64_t p = 0; p < N; ++p)
              for (int64_t c = 0; c < C; ++c)
                dt[static_cast<size_t>(y * C + c)] += gr[static_cast<size_t>((y * N + p) * C + c)];
        }
      };
    }
    return o;
  }

  // ---- execution ------------------------------------------------------

  const Tensor<T>& value(Var v) const { return val(v); }

  Tensor<T> grad(Var v) const {
    const Node& n = nodes_.at(static_cast<size_t>(v.id));
    Tensor<T> g = Tensor<T>::zeros(n.value.shape);
    if (!n.grad.empty()) g.data = n.grad;
    return g;
  }

  void backward(Var loss) {
    Tensor<T> seed = Tensor<T>::full(val(loss).shape, T(1));
    if (seed.numel() != 1) throw ContractError("backward: loss must be scalar");
    backward_seeded({{loss, std::move(seed)}});
  }

  // Seeds several output nodes at once and runs one reverse sweep; used when
  // a later graph (e.g. a batch-level loss) supplies gradients for values
  // produced here.
  void backward_seeded(const std::vector<std::pair<Var, Tensor<T>>>& seeds) {
    if (!grad_enabled_) throw ContractError("backward: graph built without gradients");
    for (const auto& [v, seed] : seeds) {
      Node& n = nodes_.at(static_cast<size_t>(v.id));
      if (seed.shape != n.value.shape)
        throw DimensionError("backward: seed shape mismatch at node " + std::to_string(v.id));
      auto& g = ensure_grad(v.id);
      for (size_t i = 0; i < g.size(); ++i) g[i] += seed.data[i];
    }
    for (int32_t id = static_cast<int32_t>(nodes_.size()) - 1; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (!n.grad.empty() && n.backward) n.backward(*this, id);
    }
  }

  // Adds node gradients into their bound parameters, in binding order.
  void accumulate_param_grads() {
    for (int32_t id : param_order_) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (n.grad.empty() || !n.bound) continue;
      auto& pg = n.bound->grad.data;
      for (size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
    }
  }

  size_t node_count() const { return nodes_.size(); }
  bool grad_enabled() const { return grad_enabled_; }

 private:
  struct Node {
    Tensor<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    Parameter<T>* bound = nullptr;
    std::function<void(Graph&, int32_t)> backward;
  };

  std::vector<Node> nodes_;
  std::vector<int32_t> param_order_;
  std::unordered_map<Parameter<T>*, int32_t> param_cache_;
  bool grad_enabled_;

  const Tensor<T>& val(Var v) const {
    if (!v.valid() || v.id >= static_cast<int32_t>(nodes_.size()))
      throw ContractError("graph: invalid var handle");
    return nodes_[static_cast<size_t>(v.id)].value;
  }

  bool wants(Var v) const { return nodes_[static_cast<size_t>(v.id)].requires_grad; }
  bool wants(int32_t id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

  std::vector<T>& ensure_grad(int32_t id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.empty()) n.grad.assign(n.value.data.size(), T(0));
    return n.grad;
  }

  Var push(Tensor<T> value, bool requires_grad,
           std::function<void(Graph&, int32_t)> bw) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = grad_enabled_ && requires_grad;
    n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int32_t>(nodes_.size()) - 1};
  }

  template <typename F>
  Var unary_binary(Tensor<T> out, Var a, Var b, F&& fn) {
    bool track = wants(a) || wants(b);
    Var o = push(std::move(out), track, nullptr);
    if (nodes_[o.id].requires_grad) {
      int32_t ia = a.id, ib = b.id;
      nodes_[o.id].backward = [ia, ib, fn = std::forward<F>(fn)](Graph& g, int32_t self) {
        fn(g, self, ia, ib);
      };
    }
    return o;
  }

  Var matmul_impl(Var a, Var b, bool transpose_b) {
    const Tensor<T>&A = val(a), &B = val(b);
    if (A.ndim() != 2 || B.ndim() != 2) throw DimensionError("matmul: need 2-D inputs");
    int64_t m = A.rows(), ka = A.cols();
    int64_t kb = transpose_b ? B.cols() : B.rows();
    int64_t n = transpose_b ? B.rows() : B.cols();
    if (ka != kb)
      throw DimensionError("matmul: inner dimensions " + A.shape_str() + " vs " + B.shape_str());
    Tensor<T> out({m, n});
    CMap Am(A.data.data(), m, ka), Bm(B.data.data(), B.rows(), B.cols());
    MMap Om(out.data.data(), m, n);
    if (transpose_b)
      Om.noalias() = Am * Bm.transpose();
    else
      Om.noalias() = Am * Bm;
    bool track = wants(a) || wants(b);
    Var o = push(std::move(out), track, nullptr);
    if (nodes_[o.id].requires_grad) {
      int32_t ia = a.id, ib = b.id;
      nodes_[o.id].backward = [ia, ib, transpose_b](Graph& g, int32_t self) {
        const auto& node = g.nodes_[self];
        int64_t m = node.value.rows(), n = node.value.cols();
        const Tensor<T>& A = g.nodes_[ia].value;
        const Tensor<T>& B = g.nodes_[ib].value;
        CMap Gm(node.grad.data(), m, n);
        CMap Am(A.data.data(), A.rows(), A.cols());
        CMap Bm(B.data.data(), B.rows(), B.cols());
        if (g.wants(ia)) {
          MMap DA(g.ensure_grad(ia).data(), A.rows(), A.cols());
          if (transpose_b)
            DA.noalias() += Gm * Bm;
          else
            DA.noalias() += Gm * Bm.transpose();
        }
        if (g.wants(ib)) {
          MMap DB(g.ensure_grad(ib).data(), B.rows(), B.cols());
          if (transpose_b)
            DB.noalias() += Gm.transpose() * Am;
          else
            DB.noalias() += Am.transpose() * Gm;
        }
      };
    }
    return o;
  }
};

}  // namespace tvts2
