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

#include <vector>

#include "tvts2/graph.hpp"
#include "tvts2/model.hpp"
#include "tvts2/sampling.hpp"
#include "tvts2/tensor.hpp"

namespace tvts2 {

// Video tower: patch embedding -> positional terms -> tube-mask drop ->
// blocks of (temporal attention, spatial attention, MLP), each residual with
// pre-norm -> final norm -> summary token projected into the shared space.
//
// State layout throughout: row 0 is the summary token, then visible patch
// tokens frame-major (frame 0's visible positions in spatial order, then
// frame 1's, ...).

template <typename T>
struct VideoForward {
  typename Graph<T>::Var summary;       // [1 x shared_dim], unit length
  typename Graph<T>::Var token_states;  // [(1 + T*Nv) x dim], after final norm
  int visible_per_frame = 0;
};

// Cuts frames [T x 3 x H x W] into flattened patch rows [T*N x 3*P*P],
// frame-major, raster order within each frame, channel-major within a patch.
template <typename T>
Tensor<T> patch_rows(const Tensor<T>& frames, const VideoEncoderConfig& cfg) {
  if (frames.ndim() != 4) throw DimensionError("patchify: frames must be 4-D");
  if (frames.shape[0] != cfg.frames || frames.shape[1] != 3 || frames.shape[2] != cfg.h ||
      frames.shape[3] != cfg.w)
    throw DimensionError("patchify: frames shape " + frames.shape_str() +
                         " does not match encoder config");
  int P = cfg.patch, nx = cfg.patches_x(), ny = cfg.patches_y();
  int n = cfg.patches_per_frame();
  int64_t row_len = 3LL * P * P;
  Tensor<T> out({static_cast<int64_t>(cfg.frames) * n, row_len});
  for (int f = 0; f < cfg.frames; ++f) {
    size_t foff = static_cast<size_t>(f) * 3 * cfg.h * cfg.w;
    for (int py = 0; py < ny; ++py)
      for (int px = 0; px < nx; ++px) {
        int64_t row = static_cast<int64_t>(f) * n + py * nx + px;
        T* dst = &out.at(row, 0);
        for (int c = 0; c < 3; ++c)
          for (int yy = 0; yy < P; ++yy)
            for (int xx = 0; xx < P; ++xx)
              *dst++ = frames.data[foff +
                                   (static_cast<size_t>(c) * cfg.h + py * P + yy) * cfg.w +
                                   px * P + xx];
      }
  }
  return out;
}

namespace detail {

// One attention stage over row groups: queries are restricted to their group,
// keys/values are the group plus the summary row; the summary row itself
// attends everywhere. Residual with pre-norm.
template <typename T>
typename Graph<T>::Var grouped_attention(Graph<T>& g, typename Graph<T>::Var x,
                                          AttnParams<T>& a,
                                          const std::vector<std::vector<int32_t>>& groups,
                                          int heads, int total_rows) {
  using Var = typename Graph<T>::Var;
  Var xn = g.layer_norm(x, g.param(a.ln_g), g.param(a.ln_b), static_cast<T>(1e-5));
  Var q = g.affine(xn, g.param(a.wq), g.param(a.bq));
  Var k = g.affine(xn, g.param(a.wk), g.param(a.bk));
  Var v = g.affine(xn, g.param(a.wv), g.param(a.bv));
  std::vector<Var> outs;
  std::vector<int32_t> targets;
  // summary row: attends over every row
  {
    std::vector<int32_t> all(static_cast<size_t>(total_rows));
    for (int32_t i = 0; i < total_rows; ++i) all[static_cast<size_t>(i)] = i;
    Var qg = g.gather_rows(q, {0});
    Var kg = g.gather_rows(k, all);
    Var vg = g.gather_rows(v, all);
    outs.push_back(g.attention(qg, kg, vg, heads, false));
    targets.push_back(0);
  }
  for (const auto& rows : groups) {
    std::vector<int32_t> keys;
    keys.reserve(rows.size() + 1);
    keys.push_back(0);
    keys.insert(keys.end(), rows.begin(), rows.end());
    Var qg = g.gather_rows(q, rows);
    Var kg = g.gather_rows(k, keys);
    Var vg = g.gather_rows(v, keys);
    outs.push_back(g.attention(qg, kg, vg, heads, false));
    targets.insert(targets.end(), rows.begin(), rows.end());
  }
  Var packed = g.concat_rows(outs);
  Var placed = g.scatter_rows(packed, targets, total_rows);
  Var o = g.affine(placed, g.param(a.wo), g.param(a.bo));
  return g.add(x, o);
}

template <typename T>
typename Graph<T>::Var mlp_stage(Graph<T>& g, typename Graph<T>::Var x, MlpParams<T>& m) {
  using Var = typename Graph<T>::Var;
  Var xn = g.layer_norm(x, g.param(m.ln_g), g.param(m.ln_b), static_cast<T>(1e-5));
  Var h = g.gelu(g.affine(xn, g.param(m.w1), g.param(m.b1)));
  Var o = g.affine(h, g.param(m.w2), g.param(m.b2));
  return g.add(x, o);
}

}  // namespace detail

// spatial_only drops the temporal stage entirely (reference tower used to
// verify that zero-initialized temporal attention is inert).
template <typename T>
VideoForward<T> encode_video(Graph<T>& g, const Tensor<T>& frames, const TubeMask& mask,
                             VideoEncoderParams<T>& p, const VideoEncoderConfig& cfg,
                             bool spatial_only = false) {
  using Var = typename Graph<T>::Var;
  cfg.validate();
  if (mask.n != cfg.patches_per_frame() || mask.t != cfg.frames)
    throw DimensionError("encode_video: mask geometry does not match config");

  Var tokens = g.affine(g.input(patch_rows(frames, cfg)), g.param(p.patch_w), g.param(p.patch_b));
  tokens = g.add_positional(tokens, g.param(p.pos_spatial), g.param(p.pos_temporal));

  int nv = mask.visible_per_frame();
  std::vector<int32_t> keep;
  keep.reserve(static_cast<size_t>(cfg.frames) * nv);
  for (int f = 0; f < cfg.frames; ++f)
    for (int pos : mask.visible) keep.push_back(static_cast<int32_t>(f * mask.n + pos));
  Var visible = g.gather_rows(tokens, keep);
  Var x = g.concat_rows({g.param(p.cls), visible});
  int total = 1 + cfg.frames * nv;

  // row groups
  std::vector<std::vector<int32_t>> tubes(static_cast<size_t>(nv));
  for (int i = 0; i < nv; ++i)
    for (int f = 0; f < cfg.frames; ++f)
      tubes[static_cast<size_t>(i)].push_back(static_cast<int32_t>(1 + f * nv + i));
  std::vector<std::vector<int32_t>> frames_rows(static_cast<size_t>(cfg.frames));
  for (int f = 0; f < cfg.frames; ++f)
    for (int i = 0; i < nv; ++i)
      frames_rows[static_cast<size_t>(f)].push_back(static_cast<int32_t>(1 + f * nv + i));

  for (auto& blk : p.blocks) {
    if (!spatial_only)
      x = detail::grouped_attention(g, x, blk.temporal, tubes, cfg.heads, total);
    x = detail::grouped_attention(g, x, blk.spatial, frames_rows, cfg.heads, total);
    x = detail::mlp_stage(g, x, blk.mlp);
  }

  Var normed = g.layer_norm(x, g.param(p.final_ln_g), g.param(p.final_ln_b), static_cast<T>(1e-5));
  Var summary_tok = g.gather_rows(normed, {0});
  Var projected = g.matmul(summary_tok, g.param(p.proj));

  VideoForward<T> out;
  out.summary = g.l2_normalize_rows(projected);
  out.token_states = normed;
  out.visible_per_frame = nv;
  return out;
}

}  // namespace tvts2
