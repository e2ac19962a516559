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

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "tvts2/checkpoint.hpp"
#include "tvts2/config.hpp"
#include "tvts2/evalkit.hpp"
#include "tvts2/objectives.hpp"
#include "tvts2/runner.hpp"
#include "tvts2/sampling.hpp"
#include "tvts2/synthdata.hpp"
#include "tvts2/text_encoder.hpp"
#include "tvts2/video_encoder.hpp"

namespace tvts2 {

// ---- model bundle -----------------------------------------------------------

template <typename T>
struct ModelBundle {
  VideoEncoderConfig vcfg;
  TextEncoderConfig tcfg;
  SortHeadConfig hcfg;
  VideoEncoderParams<T> video;
  TextEncoderParams<T> text;
  SortHeadParams<T> head;
  Vocabulary vocab;

  ParamRefs<T> params() {
    ParamRefs<T> out;
    video.collect(out);
    text.collect(out);
    head.collect(out);
    return out;
  }
};

inline VideoEncoderConfig video_config_of(const RunConfig& c) {
  VideoEncoderConfig v;
  v.h = static_cast<int>(c.image_size);
  v.w = static_cast<int>(c.image_size);
  v.patch = static_cast<int>(c.patch_size);
  v.frames = static_cast<int>(c.frames);
  v.dim = static_cast<int>(c.video_dim);
  v.heads = static_cast<int>(c.video_heads);
  v.layers = static_cast<int>(c.video_layers);
  v.shared_dim = static_cast<int>(c.shared_dim);
  v.mlp_ratio = static_cast<int>(c.mlp_ratio);
  return v;
}

inline TextEncoderConfig text_config_of(const RunConfig& c, int vocab_size) {
  TextEncoderConfig t;
  t.vocab = vocab_size;
  t.context = static_cast<int>(c.context_len);
  t.dim = static_cast<int>(c.text_dim);
  t.heads = static_cast<int>(c.text_heads);
  t.layers = static_cast<int>(c.text_layers);
  t.shared_dim = static_cast<int>(c.shared_dim);
  t.mlp_ratio = static_cast<int>(c.mlp_ratio);
  return t;
}

inline SortHeadConfig head_config_of(const RunConfig& c) {
  SortHeadConfig h;
  h.k = static_cast<int>(c.k_segments);
  h.dim = static_cast<int>(c.joint_dim);
  h.heads = static_cast<int>(c.joint_heads);
  h.layers = static_cast<int>(c.joint_layers);
  h.video_dim = static_cast<int>(c.video_dim);
  h.text_dim = static_cast<int>(c.shared_dim);
  h.mlp_ratio = static_cast<int>(c.mlp_ratio);
  return h;
}

template <typename T>
ModelBundle<T> build_model(const RunConfig& cfg, Vocabulary vocab) {
  ModelBundle<T> m;
  m.vcfg = video_config_of(cfg);
  m.tcfg = text_config_of(cfg, vocab.size());
  m.hcfg = head_config_of(cfg);
  m.vocab = std::move(vocab);
  Rng rng = Rng(static_cast<uint64_t>(cfg.seed)).fork(0x1417);
  m.video = init_video<T>(m.vcfg, rng);
  m.text = init_text<T>(m.tcfg, rng);
  m.head = init_sort_head<T>(m.hcfg, rng);
  apply_text_freeze(m.text, cfg.resolved_tunable_layers());
  return m;
}

inline AdamWOptions adamw_options_of(const RunConfig& c) {
  AdamWOptions o;
  o.lr_fresh = c.lr_fresh;
  o.lr_carried = c.lr_carried;
  o.beta1 = c.beta1;
  o.beta2 = c.beta2;
  o.eps = c.adam_eps;
  o.weight_decay = c.weight_decay;
  return o;
}

// ---- sample preparation -------------------------------------------------------

template <typename T>
struct PreparedSample {
  Tensor<T> frames;  // [frames x 3 x H x W]
  TubeMask mask;
  bool has_sort = false;
  std::vector<std::vector<int>> segments;  // token ids per chronological window
  // Shuffle draws for the ordering objective. Each entry is a permutation
  // where slot i holds window orders[d][i]; that value is also the slot's
  // target rank. Text slots are exchangeable in the head (one shared type
  // embedding, no per-slot position), so the loss value is identical for
  // every draw; training uses a single draw, while evaluation averages a few
  // draws to smooth tie-breaking among duplicate windows.
  std::vector<std::vector<int>> orders;
  std::vector<int> caption;
};

inline std::vector<int> frame_indices(const FramePlan& plan, int fps, int total_frames) {
  std::vector<int> idx;
  idx.reserve(plan.times.size());
  for (double t : plan.times) {
    int i = static_cast<int>(std::floor(t * fps));
    if (i < 0) i = 0;
    if (i >= total_frames) i = total_frames - 1;
    idx.push_back(i);
  }
  return idx;
}

template <typename T>
Tensor<T> select_frames(const Tensor<float>& all, const std::vector<int>& idx) {
  int64_t c = all.shape[1], h = all.shape[2], w = all.shape[3];
  int64_t per = c * h * w;
  Tensor<T> out({static_cast<int64_t>(idx.size()), c, h, w});
  for (size_t i = 0; i < idx.size(); ++i) {
    const float* src = all.data.data() + static_cast<size_t>(idx[i]) * per;
    T* dst = out.data.data() + i * static_cast<size_t>(per);
    for (int64_t j = 0; j < per; ++j) dst[j] = static_cast<T>(src[j]);
  }
  return out;
}

template <typename T>
PreparedSample<T> prepare_train_sample(const LoadedSample& s, const ModelBundle<T>& m,
                                       const RunConfig& cfg, Rng& rng) {
  PreparedSample<T> out;
  out.mask = sample_tube_mask(m.vcfg.patches_per_frame(), m.vcfg.frames, cfg.rho, rng);
  int total = static_cast<int>(s.frames.shape[0]);
  if (s.caption_only) {
    out.caption = m.vocab.encode(s.caption, m.tcfg.context);
    FramePlan plan = sample_frames(0.0, s.duration, m.vcfg.frames, rng);
    out.frames = select_frames<T>(s.frames, frame_indices(plan, s.fps, total));
  } else {
    ShuffledSegments segs =
        sample_segments(s.track, static_cast<int>(cfg.k_segments), cfg.segment_len, rng);
    out.has_sort = true;
    // store the windows chronologically; slot assignment lives in the draws
    out.segments.resize(segs.segments.size());
    for (size_t slot = 0; slot < segs.segments.size(); ++slot)
      out.segments[static_cast<size_t>(segs.order[slot])] =
          m.vocab.encode_words(segs.segments[slot], m.tcfg.context);
    out.orders.push_back(segs.order);
    FramePlan plan = sample_frames(segs.interval_begin(), segs.interval_end(), m.vcfg.frames, rng);
    out.frames = select_frames<T>(s.frames, frame_indices(plan, s.fps, total));
  }
  return out;
}

// Deterministic preparation used by evaluation: no masking, midpoint frame
// times, chronological windows starting at zero. When shuffle_stream is
// non-negative, eval_sort_draws permutations come from a stream-keyed
// generator so the ordering metric is reproducible and ties among duplicate
// windows are scored fairly; otherwise the single identity draw is kept.
template <typename T>
PreparedSample<T> prepare_eval_sample(const LoadedSample& s, const ModelBundle<T>& m,
                                      const RunConfig& cfg, int64_t shuffle_stream) {
  PreparedSample<T> out;
  Rng unused(1);
  out.mask = sample_tube_mask(m.vcfg.patches_per_frame(), m.vcfg.frames, 0.0, unused);
  int total = static_cast<int>(s.frames.shape[0]);
  if (s.caption_only) {
    out.caption = m.vocab.encode(s.caption, m.tcfg.context);
    FramePlan plan = midpoint_frames(0.0, s.duration, m.vcfg.frames);
    out.frames = select_frames<T>(s.frames, frame_indices(plan, s.fps, total));
    return out;
  }
  ShuffledSegments segs =
      chronological_segments(s.track, static_cast<int>(cfg.k_segments), cfg.segment_len);
  out.has_sort = true;
  for (const auto& words : segs.segments)
    out.segments.push_back(m.vocab.encode_words(words, m.tcfg.context));
  if (shuffle_stream >= 0) {
    Rng rng = Rng(static_cast<uint64_t>(cfg.seed))
                  .fork(Rng::mix(0xE7A1, static_cast<uint64_t>(shuffle_stream)));
    for (int64_t d = 0; d < cfg.eval_sort_draws; ++d)
      out.orders.push_back(shuffle_permutation(segs.k, rng));
  } else {
    out.orders.push_back(segs.order);  // identity
  }
  FramePlan plan = midpoint_frames(segs.interval_begin(), segs.interval_end(), m.vcfg.frames);
  out.frames = select_frames<T>(s.frames, frame_indices(plan, s.fps, total));
  return out;
}

// ---- batch pass ---------------------------------------------------------------

enum class LossMode { Full, ContrastiveOnly, SortOnly };

template <typename T>
struct SampleForward {
  std::unique_ptr<Graph<T>> graph;
  typename Graph<T>::Var summary, tbar, sort_loss_v, sort_logits;
  bool has_sort = false;
};

template <typename T>
SampleForward<T> forward_sample(ModelBundle<T>& m, const PreparedSample<T>& ps, bool with_grad) {
  SampleForward<T> f;
  f.graph = std::make_unique<Graph<T>>(with_grad);
  Graph<T>& g = *f.graph;
  auto vf = encode_video(g, ps.frames, ps.mask, m.video, m.vcfg);
  f.summary = vf.summary;
  if (ps.has_sort) {
    std::vector<typename Graph<T>::Var> embs;
    embs.reserve(ps.segments.size());
    for (const auto& seg : ps.segments) embs.push_back(encode_text(g, seg, m.text, m.tcfg));
    auto text_cls = g.concat_rows(embs);  // chronological rows
    const auto& perm = ps.orders[0];
    auto slots = g.gather_rows(text_cls, perm);
    auto so = sort_loss(g, slots, vf.token_states, perm, m.head, m.hcfg);
    f.sort_loss_v = so.loss;
    f.sort_logits = so.logits;
    f.has_sort = true;
    // batch summary of the K segment embeddings; renormalized to unit length
    f.tbar = g.l2_normalize_rows(g.mean_rows(text_cls));
  } else {
    f.tbar = encode_text(g, ps.caption, m.text, m.tcfg);
  }
  return f;
}

struct StepStats {
  double total = 0, contrastive = 0, sort = 0;
  int sort_correct = 0, sort_slots = 0, sort_samples = 0;
  double sort_accuracy() const {
    return sort_slots ? static_cast<double>(sort_correct) / sort_slots : 0.0;
  }
};

inline void parallel_for(size_t n, int workers, const std::function<void(size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex err_mu;
  size_t nt = std::min(static_cast<size_t>(workers), n);
  std::vector<std::thread> pool;
  for (size_t t = 0; t < nt; ++t)
    pool.emplace_back([&] {
      size_t i;
      while (!failed.load(std::memory_order_relaxed) &&
             (i = next.fetch_add(1)) < n) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!first_error) first_error = std::current_exception();
          failed.store(true);
        }
      }
    });
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// One optimization step's forward (and optionally backward) over a batch.
// The contrastive term couples samples, so each sample runs its own graph and
// a small batch-level graph stitches their outputs together; gradients flow
// back through seeded reverse sweeps. Parameter gradient accumulation is
// serialized in batch order, which keeps results identical for any worker
// count.
template <typename T>
StepStats batch_pass(ModelBundle<T>& m, const std::vector<PreparedSample<T>>& batch,
                     const RunConfig& cfg, LossMode mode, bool do_backward, int workers) {
  if (batch.empty()) throw ContractError("batch_pass: empty batch");
  size_t b = batch.size();
  std::vector<SampleForward<T>> fwd(b);
  parallel_for(b, workers, [&](size_t i) { fwd[i] = forward_sample(m, batch[i], do_backward); });

  int d = m.vcfg.shared_dim;
  Tensor<T> vmat({static_cast<int64_t>(b), d}), tmat({static_cast<int64_t>(b), d});
  for (size_t i = 0; i < b; ++i) {
    const auto& vrow = fwd[i].graph->value(fwd[i].summary);
    const auto& trow = fwd[i].graph->value(fwd[i].tbar);
    std::copy_n(vrow.data.data(), d, &vmat.at(static_cast<int64_t>(i), 0));
    std::copy_n(trow.data.data(), d, &tmat.at(static_cast<int64_t>(i), 0));
  }

  StepStats stats;
  Graph<T> gb(do_backward);
  auto vleaf = gb.leaf(vmat);
  auto tleaf = gb.leaf(tmat);
  auto vtc = contrastive_loss(gb, vleaf, tleaf, cfg.tau);
  stats.contrastive = static_cast<double>(gb.value(vtc).at(0));

  double sort_sum = 0;
  int n_sort = 0;
  for (size_t i = 0; i < b; ++i) {
    if (!fwd[i].has_sort) continue;
    ++n_sort;
    sort_sum += static_cast<double>(fwd[i].graph->value(fwd[i].sort_loss_v).at(0));
    const Tensor<T>& logits = fwd[i].graph->value(fwd[i].sort_logits);
    for (int64_t r = 0; r < logits.rows(); ++r) {
      int best = 0;
      for (int64_t cidx = 1; cidx < logits.cols(); ++cidx)
        if (logits.at(r, cidx) > logits.at(r, best)) best = static_cast<int>(cidx);
      if (best == batch[i].orders[0][static_cast<size_t>(r)]) stats.sort_correct++;
      stats.sort_slots++;
    }
  }
  stats.sort_samples = n_sort;
  stats.sort = n_sort ? sort_sum / n_sort : 0.0;

  switch (mode) {
    case LossMode::Full:
      stats.total = stats.contrastive + cfg.lambda_sort * stats.sort;
      break;
    case LossMode::ContrastiveOnly:
      stats.total = stats.contrastive;
      break;
    case LossMode::SortOnly:
      stats.total = cfg.lambda_sort * stats.sort;
      break;
  }

  if (!do_backward) return stats;

  Tensor<T> dv = Tensor<T>::zeros(vmat.shape), dt = Tensor<T>::zeros(tmat.shape);
  if (mode != LossMode::SortOnly) {
    gb.backward(vtc);
    dv = gb.grad(vleaf);
    dt = gb.grad(tleaf);
  }
  T sort_seed = n_sort ? static_cast<T>(cfg.lambda_sort / n_sort) : T(0);

  parallel_for(b, workers, [&](size_t i) {
    std::vector<std::pair<typename Graph<T>::Var, Tensor<T>>> seeds;
    if (mode != LossMode::SortOnly) {
      Tensor<T> sv({1, d}), st({1, d});
      std::copy_n(&dv.at(static_cast<int64_t>(i), 0), d, sv.data.data());
      std::copy_n(&dt.at(static_cast<int64_t>(i), 0), d, st.data.data());
      seeds.emplace_back(fwd[i].summary, std::move(sv));
      seeds.emplace_back(fwd[i].tbar, std::move(st));
    }
    if (mode != LossMode::ContrastiveOnly && fwd[i].has_sort && sort_seed != T(0))
      seeds.emplace_back(fwd[i].sort_loss_v, Tensor<T>::full({1}, sort_seed));
    if (!seeds.empty()) fwd[i].graph->backward_seeded(seeds);
  });
  for (size_t i = 0; i < b; ++i) fwd[i].graph->accumulate_param_grads();
  return stats;
}

// ---- dataset access -----------------------------------------------------------

class SampleStore {
 public:
  SampleStore(std::string manifest_path, int fps, int64_t cache_mb)
      : fps_(fps) {
    namespace fs = std::filesystem;
    entries_ = read_manifest(manifest_path);
    dir_ = fs::path(manifest_path).parent_path().string();
    if (dir_.empty()) dir_ = ".";
    // decide whether everything fits in the cache budget
    uint64_t budget = static_cast<uint64_t>(cache_mb) << 20;
    uint64_t total = 0;
    for (const auto& e : entries_) {
      std::error_code ec;
      total += fs::file_size(fs::path(dir_) / e.frames, ec);
      if (ec) total += budget;  // unknown size: assume it will not fit
    }
    preload_ = total <= budget;
    if (preload_) {
      cache_.resize(entries_.size());
      for (size_t i = 0; i < entries_.size(); ++i)
        cache_[i] = std::make_unique<LoadedSample>(load_sample(dir_, entries_[i], fps_));
    }
  }

  size_t size() const { return entries_.size(); }
  const ManifestEntry& entry(size_t i) const { return entries_[i]; }

  // Returned reference is stable while the store lives (preload) or until the
  // next get() on the same slot (lazy fallback).
  const LoadedSample& get(size_t i) {
    if (preload_) return *cache_[i];
    scratch_ = load_sample(dir_, entries_[i], fps_);
    return scratch_;
  }

  bool preloaded() const { return preload_; }

 private:
  std::vector<ManifestEntry> entries_;
  std::string dir_;
  int fps_;
  bool preload_ = false;
  std::vector<std::unique_ptr<LoadedSample>> cache_;
  LoadedSample scratch_;
};

// ---- evaluation -----------------------------------------------------------------

template <typename T>
Tensor<double> eval_video_embedding(ModelBundle<T>& m, const PreparedSample<T>& ps) {
  Graph<T> g(false);
  auto vf = encode_video(g, ps.frames, ps.mask, m.video, m.vcfg);
  return g.value(vf.summary).template cast<double>();
}

template <typename T>
Tensor<double> eval_text_embedding(ModelBundle<T>& m, const PreparedSample<T>& ps) {
  Graph<T> g(false);
  if (!ps.has_sort) {
    auto e = encode_text(g, ps.caption, m.text, m.tcfg);
    return g.value(e).template cast<double>();
  }
  std::vector<typename Graph<T>::Var> embs;
  for (const auto& seg : ps.segments) embs.push_back(encode_text(g, seg, m.text, m.tcfg));
  auto tbar = g.l2_normalize_rows(g.mean_rows(g.concat_rows(embs)));
  return g.value(tbar).template cast<double>();
}

// Ordering accuracy for one clip. Rank logits are averaged over several clip
// views (deterministic midpoints plus stream-keyed segment-uniform draws)
// before decoding, the usual multi-view protocol for video models; the
// averaged matrix is then decoded once per shuffle draw and slot accuracy is
// averaged across draws.
template <typename T>
double eval_sort_accuracy_one(ModelBundle<T>& m, const RunConfig& cfg, const LoadedSample& s,
                              int64_t stream) {
  ShuffledSegments segs =
      chronological_segments(s.track, static_cast<int>(cfg.k_segments), cfg.segment_len);
  Rng perm_rng = Rng(static_cast<uint64_t>(cfg.seed))
                     .fork(Rng::mix(0xE7A1, static_cast<uint64_t>(stream)));
  std::vector<std::vector<int>> orders;
  for (int64_t d = 0; d < cfg.eval_sort_draws; ++d)
    orders.push_back(shuffle_permutation(segs.k, perm_rng));

  Rng unused(1);
  TubeMask mask = sample_tube_mask(m.vcfg.patches_per_frame(), m.vcfg.frames, 0.0, unused);
  int total = static_cast<int>(s.frames.shape[0]);

  Graph<T> g(false);
  std::vector<typename Graph<T>::Var> embs;
  for (const auto& words : segs.segments)
    embs.push_back(encode_text(g, m.vocab.encode_words(words, m.tcfg.context), m.text, m.tcfg));
  auto text_cls = g.concat_rows(embs);

  std::vector<Tensor<double>> logit_sum(orders.size());
  Rng view_rng = Rng(static_cast<uint64_t>(cfg.seed))
                     .fork(Rng::mix(0x71ED, static_cast<uint64_t>(stream)));
  for (int64_t v = 0; v < cfg.eval_clip_views; ++v) {
    FramePlan plan =
        v == 0 ? midpoint_frames(segs.interval_begin(), segs.interval_end(), m.vcfg.frames)
               : sample_frames(segs.interval_begin(), segs.interval_end(), m.vcfg.frames,
                               view_rng);
    Tensor<T> frames = select_frames<T>(s.frames, frame_indices(plan, s.fps, total));
    auto vf = encode_video(g, frames, mask, m.video, m.vcfg);
    for (size_t d = 0; d < orders.size(); ++d) {
      auto slots = g.gather_rows(text_cls, orders[d]);
      auto so = sort_loss(g, slots, vf.token_states, orders[d], m.head, m.hcfg);
      Tensor<double> lg = g.value(so.logits).template cast<double>();
      if (v == 0) {
        logit_sum[d] = std::move(lg);
      } else {
        for (size_t j = 0; j < lg.data.size(); ++j) logit_sum[d].data[j] += lg.data[j];
      }
    }
  }

  // A slot counts as correct when the window text it places at the predicted
  // rank matches the true window's text. Identical windows are interchangeable
  // (no evidence, pixel or textual, can tell them apart), which is also what
  // lets a brute-force matcher recover chronology with accuracy 1.
  double acc = 0;
  for (size_t d = 0; d < orders.size(); ++d) {
    std::vector<int> pred = decode_ranking(logit_sum[d]);
    int correct = 0;
    for (size_t r = 0; r < pred.size(); ++r)
      if (pred[r] == orders[d][r] ||
          segs.segments[static_cast<size_t>(pred[r])] ==
              segs.segments[static_cast<size_t>(orders[d][r])])
        ++correct;
    acc += static_cast<double>(correct) / static_cast<double>(pred.size());
  }
  return acc / static_cast<double>(orders.size());
}

template <typename T>
EvalMetrics evaluate_model(ModelBundle<T>& m, const RunConfig& cfg, SampleStore& val,
                           unsigned flags, SampleStore* probe_store) {
  size_t q = val.size();
  int d = m.vcfg.shared_dim;
  Tensor<double> videos({static_cast<int64_t>(q), d});
  Tensor<double> texts({static_cast<int64_t>(q), d});
  std::vector<int> labels(q, -1);
  std::vector<size_t> sort_idx;
  EvalMetrics out;

  for (size_t i = 0; i < q; ++i) {
    const LoadedSample& s = val.get(i);
    labels[i] = dominant_shape_of_sample(s);
    PreparedSample<T> ps = prepare_eval_sample(s, m, cfg, -1);
    Tensor<double> ve = eval_video_embedding(m, ps);
    Tensor<double> te = eval_text_embedding(m, ps);
    std::copy_n(ve.data.data(), d, &videos.at(static_cast<int64_t>(i), 0));
    std::copy_n(te.data.data(), d, &texts.at(static_cast<int64_t>(i), 0));
    if (!s.caption_only) sort_idx.push_back(i);
  }

  out.gallery_size = static_cast<int>(q);
  std::vector<int> ident(q);
  for (size_t i = 0; i < q; ++i) ident[i] = static_cast<int>(i);
  Tensor<double> sim_t2v = similarity_matrix(texts, videos);
  Tensor<double> sim_v2t = similarity_matrix(videos, texts);
  out.t2v = recall_and_rank(sim_t2v, ident);
  out.v2t = recall_and_rank(sim_v2t, ident);

  if (flags & kEvalDualSoftmax) {
    out.t2v_rescored = recall_and_rank(dual_softmax(sim_t2v, cfg.dsl_inv_temp), ident);
    out.v2t_rescored = recall_and_rank(dual_softmax(sim_v2t, cfg.dsl_inv_temp), ident);
    out.has_rescored = true;
  }

  // Several shuffle draws per clip shrink the variance of the ordering metric.
  double sort_acc = 0;
  for (size_t i : sort_idx)
    sort_acc += eval_sort_accuracy_one(m, cfg, val.get(i), static_cast<int64_t>(i));
  out.sort_samples = static_cast<int>(sort_idx.size());
  out.sort_accuracy = sort_idx.empty() ? 0.0 : sort_acc / static_cast<double>(sort_idx.size());

  if (flags & kEvalMultiChoice) {
    int choices = std::min<int>(8, static_cast<int>(q));
    Tensor<double> scores({static_cast<int64_t>(q), choices});
    std::vector<int> truth(q, 0);
    for (size_t i = 0; i < q; ++i)
      for (int j = 0; j < choices; ++j)
        scores.at(static_cast<int64_t>(i), j) = sim_v2t.at(static_cast<int64_t>(i),
                                                           static_cast<int64_t>((i + static_cast<size_t>(j)) % q));
    out.multi_choice = multi_choice_accuracy(scores, truth);
  }

  if (flags & kEvalZeroShot) {
    const auto& shapes = shape_names();
    Tensor<double> class_embs({static_cast<int64_t>(shapes.size()), d});
    for (size_t c = 0; c < shapes.size(); ++c) {
      Graph<T> g(false);
      auto e = encode_text(g, m.vocab.encode("a clip showing " + shapes[c], m.tcfg.context),
                           m.text, m.tcfg);
      const auto& row = g.value(e);
      for (int j = 0; j < d; ++j)
        class_embs.at(static_cast<int64_t>(c), j) = static_cast<double>(row.at(0, j));
    }
    std::vector<int> pred = classify(videos, class_embs);
    int64_t hit = 0, seen = 0;
    for (size_t i = 0; i < q; ++i) {
      if (labels[i] < 0) continue;
      ++seen;
      if (pred[i] == labels[i]) ++hit;
    }
    out.zero_shot_top1 = seen ? static_cast<double>(hit) / static_cast<double>(seen) : 0.0;
  }

  if (flags & kEvalProbe) {
    if (!probe_store) throw ConfigError("probe evaluation needs training data");
    size_t n = std::min<size_t>(static_cast<size_t>(cfg.probe_train), probe_store->size());
    Tensor<double> feats({static_cast<int64_t>(n), d});
    std::vector<int> ys;
    for (size_t i = 0; i < n; ++i) {
      const LoadedSample& s = probe_store->get(i);
      PreparedSample<T> ps = prepare_eval_sample(s, m, cfg, -1);
      Tensor<double> ve = eval_video_embedding(m, ps);
      std::copy_n(ve.data.data(), d, &feats.at(static_cast<int64_t>(i), 0));
      int y = dominant_shape_of_sample(s);
      if (y < 0) throw ValidationError("probe: sample without a shape word");
      ys.push_back(y);
    }
    std::vector<int> val_y;
    for (size_t i = 0; i < q; ++i) val_y.push_back(labels[i] < 0 ? 0 : labels[i]);
    ProbeResult pr =
        linear_probe(feats, ys, videos, val_y, static_cast<int>(shape_names().size()),
                     static_cast<int>(cfg.probe_epochs), cfg.probe_lr);
    out.probe_top1 = pr.top1;
    out.probe_top5 = pr.top5;
  }
  return out;
}

}  // namespace tvts2
