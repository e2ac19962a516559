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
#include "tvts2/video_encoder.hpp"
#include "tvts2/vocab.hpp"

namespace tvts2 {

// Text tower: token + positional embedding, causal pre-norm transformer
// blocks, then the state at the first EOS position is normed and projected
// into the shared space. Returns a unit-length [1 x shared_dim] row.
template <typename T>
typename Graph<T>::Var encode_text(Graph<T>& g, const std::vector<int>& token_ids,
                                   TextEncoderParams<T>& p, const TextEncoderConfig& cfg) {
  using Var = typename Graph<T>::Var;
  cfg.validate();
  if (static_cast<int>(token_ids.size()) != cfg.context)
    throw DimensionError("encode_text: sequence must be padded to context length");
  int eos_pos = -1;
  std::vector<int32_t> rows;
  rows.reserve(token_ids.size());
  for (size_t i = 0; i < token_ids.size(); ++i) {
    int id = token_ids[i];
    if (id < 0 || id >= cfg.vocab) throw IndexError("encode_text: token id out of range");
    if (id == Vocabulary::kEos && eos_pos < 0) eos_pos = static_cast<int>(i);
    rows.push_back(id);
  }
  if (eos_pos < 0) throw ContractError("encode_text: sequence has no EOS token");

  std::vector<int32_t> pos_rows(static_cast<size_t>(cfg.context));
  for (int i = 0; i < cfg.context; ++i) pos_rows[static_cast<size_t>(i)] = i;
  Var x = g.add(g.gather_rows(g.param(p.tok_emb), rows),
                g.gather_rows(g.param(p.pos_emb), pos_rows));

  for (auto& blk : p.blocks) {
    Var xn = g.layer_norm(x, g.param(blk.attn.ln_g), g.param(blk.attn.ln_b), static_cast<T>(1e-5));
    Var q = g.affine(xn, g.param(blk.attn.wq), g.param(blk.attn.bq));
    Var k = g.affine(xn, g.param(blk.attn.wk), g.param(blk.attn.bk));
    Var v = g.affine(xn, g.param(blk.attn.wv), g.param(blk.attn.bv));
    Var att = g.attention(q, k, v, cfg.heads, true);
    Var o = g.affine(att, g.param(blk.attn.wo), g.param(blk.attn.bo));
    x = g.add(x, o);
    x = detail::mlp_stage(g, x, blk.mlp);
  }

  Var at_eos = g.gather_rows(x, {eos_pos});
  Var normed =
      g.layer_norm(at_eos, g.param(p.final_ln_g), g.param(p.final_ln_b), static_cast<T>(1e-5));
  Var projected = g.matmul(normed, g.param(p.proj));
  return g.l2_normalize_rows(projected);
}

}  // namespace tvts2
