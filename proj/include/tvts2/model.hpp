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


#include <cctype>
#include <string>
#include <vector>

#include "tvts2/common.hpp"
#include "tvts2/optim.hpp"
#include "tvts2/tensor.hpp"

namespace tvts2 {

struct VideoEncoderConfig {
  int h = 32, w = 32;
  int patch = 8;
  int frames = 8;      // frames per clip fed to the encoder
  int dim = 64;        // token width
  int heads = 4;
  int layers = 4;
  int shared_dim = 32; // joint embedding width
  int mlp_ratio = 4;

  int patches_x() const { return w / patch; }
  int patches_y() const { return h / patch; }
  int patches_per_frame() const { return patches_x() * patches_y(); }

  void validate() const {
    if (h < 1 || w < 1 || patch < 1) throw ConfigError("video: bad frame geometry");
    if (h % patch != 0 || w % patch != 0)
      throw ConfigError("video: patch size must divide frame size");
    if (frames < 1) throw ConfigError("video: needs at least one frame");
    if (dim < 1 || heads < 1 || dim % heads != 0)
      throw ConfigError("video: heads must divide token width");
    if (layers < 1) throw ConfigError("video: needs at least one block");
    if (shared_dim < 1) throw ConfigError("video: bad shared width");
    if (mlp_ratio < 1) throw ConfigError("video: bad mlp ratio");
  }
};

struct TextEncoderConfig {
  int vocab = 64;
  int context = 16;
  int dim = 64;
  int heads = 4;
  int layers = 4;
  int shared_dim = 32;
  int mlp_ratio = 4;

  void validate() const {
    if (vocab < 4) throw ConfigError("text: vocabulary too small");
    if (context < 2) throw ConfigError("text: context too short");
    if (dim < 1 || heads < 1 || dim % heads != 0)
      throw ConfigError("text: heads must divide token width");
    if (layers < 1) throw ConfigError("text: needs at least one block");
    if (shared_dim < 1) throw ConfigError("text: bad shared width");
    if (mlp_ratio < 1) throw ConfigError("text: bad mlp ratio");
  }
};

struct SortHeadConfig {
  int k = 4;           // segments to rank
  int dim = 64;        // joint width
  int heads = 4;
  int layers = 2;
  int video_dim = 64;  // width of incoming video token states
  int text_dim = 32;   // width of incoming text summaries (= shared_dim)
  int mlp_ratio = 4;

  void validate() const {
    if (k < 2) throw ConfigError("sort head: needs at least two segments");
    if (dim < 1 || heads < 1 || dim % heads != 0)
      throw ConfigError("sort head: heads must divide width");
    if (layers < 1) throw ConfigError("sort head: needs at least one block");
    if (video_dim < 1 || text_dim < 1) throw ConfigError("sort head: bad input widths");
    if (mlp_ratio < 1) throw ConfigError("sort head: bad mlp ratio");
  }
};

// ---- parameter bundles ------------------------------------------------------

template <typename T>
struct AttnParams {
  Parameter<T> ln_g, ln_b, wq, bq, wk, bk, wv, bv, wo, bo;

  void collect(ParamRefs<T>& out) {
    for (Parameter<T>* p : {&ln_g, &ln_b, &wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo})
      out.push_back(p);
  }
};

template <typename T>
struct MlpParams {
  Parameter<T> ln_g, ln_b, w1, b1, w2, b2;

  void collect(ParamRefs<T>& out) {
    for (Parameter<T>* p : {&ln_g, &ln_b, &w1, &b1, &w2, &b2}) out.push_back(p);
  }
};

template <typename T>
struct VideoBlockParams {
  AttnParams<T> temporal, spatial;
  MlpParams<T> mlp;

  void collect(ParamRefs<T>& out) {
    temporal.collect(out);
    spatial.collect(out);
    mlp.collect(out);
  }
};

template <typename T>
struct TextBlockParams {
  AttnParams<T> attn;
  MlpParams<T> mlp;

  void collect(ParamRefs<T>& out) {
    attn.collect(out);
    mlp.collect(out);
  }
};

template <typename T>
struct VideoEncoderParams {
  Parameter<T> patch_w, patch_b;   // [3*P*P x D], [1 x D]
  Parameter<T> pos_spatial;        // [N x D]
  Parameter<T> pos_temporal;       // [T x D]
  Parameter<T> cls;                // [1 x D]
  std::vector<VideoBlockParams<T>> blocks;
  Parameter<T> final_ln_g, final_ln_b;
  Parameter<T> proj;               // [D x shared_dim]

  void collect(ParamRefs<T>& out) {
    for (Parameter<T>* p : {&patch_w, &patch_b, &pos_spatial, &pos_temporal, &cls})
      out.push_back(p);
    for (auto& b : blocks) b.collect(out);
    out.push_back(&final_ln_g);
    out.push_back(&final_ln_b);
    out.push_back(&proj);
  }
};

template <typename T>
struct TextEncoderParams {
  Parameter<T> tok_emb;  // [vocab x D]
  Parameter<T> pos_emb;  // [context x D]
  std::vector<TextBlockParams<T>> blocks;
  Parameter<T> final_ln_g, final_ln_b;
  Parameter<T> proj;     // [D x shared_dim]

  void collect(ParamRefs<T>& out) {
    out.push_back(&tok_emb);
    out.push_back(&pos_emb);
    for (auto& b : blocks) b.collect(out);
    out.push_back(&final_ln_g);
    out.push_back(&final_ln_b);
    out.push_back(&proj);
  }
};

template <typename T>
struct SortHeadParams {
  Parameter<T> text_adapter_w, text_adapter_b;    // [text_dim x dim]
  Parameter<T> video_adapter_w, video_adapter_b;  // [video_dim x dim]
  Parameter<T> text_slot;                         // [1 x dim], marks text rows
  std::vector<TextBlockParams<T>> blocks;         // bidirectional joint blocks
  Parameter<T> final_ln_g, final_ln_b;
  Parameter<T> cls_w, cls_b;                      // [dim x k]

  void collect(ParamRefs<T>& out) {
    for (Parameter<T>* p :
         {&text_adapter_w, &text_adapter_b, &video_adapter_w, &video_adapter_b, &text_slot})
      out.push_back(p);
    for (auto& b : blocks) b.collect(out);
    for (Parameter<T>* p : {&final_ln_g, &final_ln_b, &cls_w, &cls_b}) out.push_back(p);
  }
};

// ---- initialization ---------------------------------------------------------

template <typename T>
Parameter<T> init_normal(const std::string& name, std::vector<int64_t> shape, double std,
                         Rng& rng, ParamGroup group) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(rng.normal() * std);
  return Parameter<T>(name, std::move(t), group);
}

template <typename T>
Parameter<T> init_const(const std::string& name, std::vector<int64_t> shape, T value,
                        ParamGroup group) {
  return Parameter<T>(name, Tensor<T>::full(std::move(shape), value), group);
}

template <typename T>
void init_attn(AttnParams<T>& a, const std::string& prefix, int dim, double std, Rng& rng,
               ParamGroup group, bool zero_out_proj) {
  a.ln_g = init_const<T>(prefix + ".ln.g", {1, dim}, T(1), group);
  a.ln_b = init_const<T>(prefix + ".ln.b", {1, dim}, T(0), group);
  a.wq = init_normal<T>(prefix + ".wq", {dim, dim}, std, rng, group);
  a.bq = init_const<T>(prefix + ".bq", {1, dim}, T(0), group);
  a.wk = init_normal<T>(prefix + ".wk", {dim, dim}, std, rng, group);
  a.bk = init_const<T>(prefix + ".bk", {1, dim}, T(0), group);
  a.wv = init_normal<T>(prefix + ".wv", {dim, dim}, std, rng, group);
  a.bv = init_const<T>(prefix + ".bv", {1, dim}, T(0), group);
  if (zero_out_proj)
    a.wo = init_const<T>(prefix + ".wo", {dim, dim}, T(0), group);
  else
    a.wo = init_normal<T>(prefix + ".wo", {dim, dim}, std, rng, group);
  a.bo = init_const<T>(prefix + ".bo", {1, dim}, T(0), group);
}

template <typename T>
void init_mlp(MlpParams<T>& m, const std::string& prefix, int dim, int ratio, double std,
              Rng& rng, ParamGroup group) {
  m.ln_g = init_const<T>(prefix + ".ln.g", {1, dim}, T(1), group);
  m.ln_b = init_const<T>(prefix + ".ln.b", {1, dim}, T(0), group);
  m.w1 = init_normal<T>(prefix + ".w1", {dim, dim * ratio}, std, rng, group);
  m.b1 = init_const<T>(prefix + ".b1", {1, dim * ratio}, T(0), group);
  m.w2 = init_normal<T>(prefix + ".w2", {dim * ratio, dim}, std, rng, group);
  m.b2 = init_const<T>(prefix + ".b2", {1, dim}, T(0), group);
}

// The temporal attention stage starts as an exact no-op: its output
// projection (weights and bias) is zero, and the per-frame positional rows
// are zero, so at initialization every frame carries identical states and the
// model matches its image-only ancestor.
template <typename T>
VideoEncoderParams<T> init_video(const VideoEncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const double std = 0.02;
  VideoEncoderParams<T> p;
  int n = cfg.patches_per_frame();
  p.patch_w = init_normal<T>("video.patch.w", {3 * cfg.patch * cfg.patch, cfg.dim}, std, rng,
                             ParamGroup::Carried);
  p.patch_b = init_const<T>("video.patch.b", {1, cfg.dim}, T(0), ParamGroup::Carried);
  p.pos_spatial =
      init_normal<T>("video.pos.spatial", {n, cfg.dim}, 0.01, rng, ParamGroup::Carried);
  // A small random frame signature lets cross-frame reasoning start at step
  // zero; the spatial/temporal equivalence at init is untouched because both
  // towers add the same table before any block runs.
  p.pos_temporal =
      init_normal<T>("video.pos.temporal", {cfg.frames, cfg.dim}, 0.05, rng, ParamGroup::Carried);
  p.cls = init_normal<T>("video.cls", {1, cfg.dim}, std, rng, ParamGroup::Carried);
  for (int i = 0; i < cfg.layers; ++i) {
    VideoBlockParams<T> b;
    std::string base = "video.block" + std::to_string(i);
    init_attn(b.temporal, base + ".temporal", cfg.dim, std, rng, ParamGroup::Fresh, true);
    init_attn(b.spatial, base + ".spatial", cfg.dim, 0.3, rng, ParamGroup::Carried, false);
    init_mlp(b.mlp, base + ".mlp", cfg.dim, cfg.mlp_ratio, std, rng, ParamGroup::Carried);
    p.blocks.push_back(std::move(b));
  }
  p.final_ln_g = init_const<T>("video.final.ln.g", {1, cfg.dim}, T(1), ParamGroup::Carried);
  p.final_ln_b = init_const<T>("video.final.ln.b", {1, cfg.dim}, T(0), ParamGroup::Carried);
  p.proj = init_normal<T>("video.proj", {cfg.dim, cfg.shared_dim}, std, rng, ParamGroup::Fresh);
  return p;
}

template <typename T>
TextEncoderParams<T> init_text(const TextEncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const double std = 0.02;
  TextEncoderParams<T> p;
  p.tok_emb = init_normal<T>("text.tok", {cfg.vocab, cfg.dim}, std, rng, ParamGroup::Carried);
  p.pos_emb = init_normal<T>("text.pos", {cfg.context, cfg.dim}, 0.01, rng, ParamGroup::Carried);
  for (int i = 0; i < cfg.layers; ++i) {
    TextBlockParams<T> b;
    std::string base = "text.block" + std::to_string(i);
    init_attn(b.attn, base + ".attn", cfg.dim, 0.1, rng, ParamGroup::Carried, false);
    init_mlp(b.mlp, base + ".mlp", cfg.dim, cfg.mlp_ratio, std, rng, ParamGroup::Carried);
    p.blocks.push_back(std::move(b));
  }
  p.final_ln_g = init_const<T>("text.final.ln.g", {1, cfg.dim}, T(1), ParamGroup::Carried);
  p.final_ln_b = init_const<T>("text.final.ln.b", {1, cfg.dim}, T(0), ParamGroup::Carried);
  p.proj = init_normal<T>("text.proj", {cfg.dim, cfg.shared_dim}, std, rng, ParamGroup::Carried);
  return p;
}

template <typename T>
SortHeadParams<T> init_sort_head(const SortHeadConfig& cfg, Rng& rng) {
  cfg.validate();
  const double std = 0.02;
  SortHeadParams<T> p;
  p.text_adapter_w =
      init_normal<T>("head.text_adapter.w", {cfg.text_dim, cfg.dim}, std, rng, ParamGroup::Fresh);
  p.text_adapter_b = init_const<T>("head.text_adapter.b", {1, cfg.dim}, T(0), ParamGroup::Fresh);
  p.video_adapter_w = init_normal<T>("head.video_adapter.w", {cfg.video_dim, cfg.dim}, std, rng,
                                     ParamGroup::Fresh);
  p.video_adapter_b = init_const<T>("head.video_adapter.b", {1, cfg.dim}, T(0), ParamGroup::Fresh);
  p.text_slot = init_normal<T>("head.text_slot", {1, cfg.dim}, std, rng, ParamGroup::Fresh);
  for (int i = 0; i < cfg.layers; ++i) {
    TextBlockParams<T> b;
    std::string base = "head.block" + std::to_string(i);
    init_attn(b.attn, base + ".attn", cfg.dim, 0.25, rng, ParamGroup::Fresh, false);
    init_mlp(b.mlp, base + ".mlp", cfg.dim, cfg.mlp_ratio, std, rng, ParamGroup::Fresh);
    p.blocks.push_back(std::move(b));
  }
  p.final_ln_g = init_const<T>("head.final.ln.g", {1, cfg.dim}, T(1), ParamGroup::Fresh);
  p.final_ln_b = init_const<T>("head.final.ln.b", {1, cfg.dim}, T(0), ParamGroup::Fresh);
  p.cls_w = init_normal<T>("head.cls.w", {cfg.dim, cfg.k}, std, rng, ParamGroup::Fresh);
  p.cls_b = init_const<T>("head.cls.b", {1, cfg.k}, T(0), ParamGroup::Fresh);
  return p;
}

// ---- partial freezing -------------------------------------------------------

enum class TuneRegime { Full, Frozen, Partial };

inline TuneRegime parse_regime(const std::string& s) {
  std::string v;
  for (char c : s) v += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (v == "ft" || v == "full") return TuneRegime::Full;
  if (v == "ff" || v == "frozen") return TuneRegime::Frozen;
  if (v == "pf" || v == "partial") return TuneRegime::Partial;
  throw ConfigError("regime: expected ft, ff, or pf, got '" + s + "'");
}

inline int resolve_tunable_layers(TuneRegime regime, int total_layers) {
  switch (regime) {
    case TuneRegime::Full: return total_layers;
    case TuneRegime::Frozen: return 0;
    case TuneRegime::Partial: return (total_layers + 3) / 4;  // ceil(L/4)
  }
  throw ContractError("regime: unreachable");
}

// Freezes the bottom of the text tower so only the top `tunable` blocks
// train. Whenever any block is frozen the embeddings freeze too; with
// tunable == 0 the final norm and projection also freeze (the tower becomes a
// fixed feature extractor).
template <typename T>
void apply_text_freeze(TextEncoderParams<T>& p, int tunable) {
  int total = static_cast<int>(p.blocks.size());
  if (tunable < 0 || tunable > total)
    throw ConfigError("freeze: tunable layer count must lie in [0, " + std::to_string(total) + "]");
  auto freeze = [](Parameter<T>& q) { q.frozen = true; };
  if (tunable < total) {
    freeze(p.tok_emb);
    freeze(p.pos_emb);
  }
  for (int i = 0; i < total - tunable; ++i) {
    ParamRefs<T> refs;
    p.blocks[static_cast<size_t>(i)].collect(refs);
    for (auto* q : refs) q->frozen = true;
  }
  if (tunable == 0) {
    freeze(p.final_ln_g);
    freeze(p.final_ln_b);
    freeze(p.proj);
  }
}

}  // namespace tvts2
