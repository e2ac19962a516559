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

#include <cmath>
#include <vector>

#include "tvts2/graph.hpp"
#include "tvts2/model.hpp"
#include "tvts2/video_encoder.hpp"

namespace tvts2 {

template <typename T>
struct SortOutput {
  typename Graph<T>::Var loss;    // scalar, mean cross entropy over K slots
  typename Graph<T>::Var logits;  // [K x K], slot -> rank scores
};

// Transcript-order head: K shuffled segment summaries (gradient-blocked, so
// only the video tower learns from ordering) and the visible video token
// states meet in a small bidirectional transformer; each text slot then
// predicts its chronological rank.
template <typename T>
SortOutput<T> sort_loss(Graph<T>& g, typename Graph<T>::Var text_cls,
                        typename Graph<T>::Var video_states, const std::vector<int>& order,
                        SortHeadParams<T>& p, const SortHeadConfig& cfg) {
  using Var = typename Graph<T>::Var;
  cfg.validate();
  const Tensor<T>& tc = g.value(text_cls);
  if (tc.ndim() != 2 || tc.rows() != cfg.k || tc.cols() != cfg.text_dim)
    throw DimensionError("sort_loss: text summaries must be [K x text_dim]");
  if (g.value(video_states).cols() != cfg.video_dim)
    throw DimensionError("sort_loss: video states width mismatch");
  if (static_cast<int>(order.size()) != cfg.k)
    throw DimensionError("sort_loss: order must have K entries");
  {
    std::vector<char> seen(static_cast<size_t>(cfg.k), 0);
    for (int r : order) {
      if (r < 0 || r >= cfg.k) throw IndexError("sort_loss: rank out of range");
      if (seen[static_cast<size_t>(r)]) throw ContractError("sort_loss: order is not a permutation");
      seen[static_cast<size_t>(r)] = 1;
    }
  }

  Var t = g.affine(g.stop_gradient(text_cls), g.param(p.text_adapter_w), g.param(p.text_adapter_b));
  t = g.add_rowvec(t, g.param(p.text_slot));
  Var v = g.affine(video_states, g.param(p.video_adapter_w), g.param(p.video_adapter_b));
  Var x = g.concat_rows({t, v});
  int total = static_cast<int>(g.value(x).rows());

  std::vector<std::vector<int32_t>> whole(1);
  for (int i = 0; i < total; ++i) whole[0].push_back(i);
  for (auto& blk : p.blocks) {
    Var xn = g.layer_norm(x, g.param(blk.attn.ln_g), g.param(blk.attn.ln_b), static_cast<T>(1e-5));
    Var q = g.affine(xn, g.param(blk.attn.wq), g.param(blk.attn.bq));
    Var k = g.affine(xn, g.param(blk.attn.wk), g.param(blk.attn.bk));
    Var val = g.affine(xn, g.param(blk.attn.wv), g.param(blk.attn.bv));
    Var att = g.attention(q, k, val, cfg.heads, false);
    Var o = g.affine(att, g.param(blk.attn.wo), g.param(blk.attn.bo));
    x = g.add(x, o);
    x = detail::mlp_stage(g, x, blk.mlp);
  }

  std::vector<int32_t> slot_rows(static_cast<size_t>(cfg.k));
  for (int i = 0; i < cfg.k; ++i) slot_rows[static_cast<size_t>(i)] = i;
  Var slots = g.gather_rows(x, slot_rows);
  Var normed =
      g.layer_norm(slots, g.param(p.final_ln_g), g.param(p.final_ln_b), static_cast<T>(1e-5));
  SortOutput<T> out;
  out.logits = g.affine(normed, g.param(p.cls_w), g.param(p.cls_b));
  std::vector<int32_t> targets(order.begin(), order.end());
  out.loss = g.cross_entropy(out.logits, std::move(targets));
  return out;
}

// Symmetric contrastive loss over a batch of unit-length embeddings:
// cross entropy of video->text and text->video similarity rows, each divided
// by temperature, summed. Row b of each matrix has its match at column b.
template <typename T>
typename Graph<T>::Var contrastive_loss(Graph<T>& g, typename Graph<T>::Var video,
                                        typename Graph<T>::Var text, double tau) {
  using Var = typename Graph<T>::Var;
  if (tau <= 0) throw ConfigError("contrastive: temperature must be positive");
  const Tensor<T>&V = g.value(video), &X = g.value(text);
  if (V.ndim() != 2 || X.ndim() != 2 || !V.same_shape(X))
    throw DimensionError("contrastive: embeddings must be equal-shape 2-D");
  int64_t b = V.rows();
  if (b < 1) throw DimensionError("contrastive: empty batch");
  for (const Tensor<T>* m : {&V, &X}) {
    for (int64_t r = 0; r < b; ++r) {
      double s = 0;
      for (int64_t c = 0; c < m->cols(); ++c)
        s += static_cast<double>(m->at(r, c)) * static_cast<double>(m->at(r, c));
      if (std::fabs(std::sqrt(s) - 1.0) > 1e-3)
        throw ContractError("contrastive: embedding row " + std::to_string(r) +
                            " is not unit length");
    }
  }
  std::vector<int32_t> diag(static_cast<size_t>(b));
  for (int64_t i = 0; i < b; ++i) diag[static_cast<size_t>(i)] = static_cast<int32_t>(i);
  Var sim_vt = g.scale(g.matmul_nt(video, text), static_cast<T>(1.0 / tau));
  Var sim_tv = g.scale(g.matmul_nt(text, video), static_cast<T>(1.0 / tau));
  Var loss_vt = g.cross_entropy(sim_vt, diag);
  Var loss_tv = g.cross_entropy(sim_tv, diag);
  return g.add(loss_vt, loss_tv);
}

}  // namespace tvts2
