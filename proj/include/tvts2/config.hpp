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

#include <cstdint>
#include <string>
#include <vector>

namespace tvts2 {

// Flat configuration shared by every command. Files use one "key = value"
// per line ('#' starts a comment); unknown keys are hard errors, so typos
// cannot silently fall back to defaults.
struct RunConfig {
  // run control
  int64_t seed = 42;
  int64_t steps = 2000;
  int64_t batch_size = 16;
  int64_t eval_interval = 500;
  int64_t log_interval = 50;
  int64_t workers = 1;

  // objectives and sampling
  std::string regime = "pf";          // ft | ff | pf
  int64_t text_tunable_layers = -1;   // -1: derive from regime
  double rho = 0.5;                   // tube masking ratio
  int64_t k_segments = 4;
  double segment_len = 1;
  double lambda_sort = 2;
  double tau = 0.05;
  int64_t eval_sort_draws = 4;  // shuffle draws averaged by the ordering metric
  int64_t eval_clip_views = 3;  // clip views whose rank logits are averaged

  // optimizer
  double lr_fresh = 1e-3;
  double lr_carried = 1e-3;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-8;
  int64_t warmup_steps = 100;  // linear ramp to the peak rates; 0 disables
  double clip_norm = 1.0;      // global gradient norm cap; 0 disables
  bool cosine_decay = true;    // cosine-anneal both rates to zero after warmup

  // model geometry
  int64_t image_size = 32;
  int64_t patch_size = 8;
  int64_t frames = 8;
  int64_t video_dim = 64;
  int64_t video_heads = 4;
  int64_t video_layers = 4;
  int64_t shared_dim = 32;
  int64_t text_dim = 64;
  int64_t text_heads = 4;
  int64_t text_layers = 4;
  int64_t context_len = 16;
  int64_t joint_dim = 64;
  int64_t joint_heads = 4;
  int64_t joint_layers = 2;
  int64_t mlp_ratio = 4;

  // data
  std::string data_dir;  // default: $TVTS_DATA_DIR
  std::string out_dir = "out";
  std::string train_manifest = "train.tsv";  // relative to data_dir
  std::string val_manifest = "val.tsv";
  std::string vocab_file = "vocab.txt";
  int64_t fps = 2;
  int64_t duration = 7;
  int64_t train_count = 2000;
  int64_t val_count = 64;
  double caption_fraction = 0.1;
  int64_t cache_mb = 2048;

  // evaluation
  std::string checkpoint;
  double dsl_inv_temp = 100;
  int64_t probe_train = 256;
  int64_t probe_epochs = 100;
  double probe_lr = 0.1;

  RunConfig();  // fills data_dir from TVTS_DATA_DIR if set

  static const std::vector<std::string>& keys();
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  void load_file(const std::string& path);
  void load_text(const std::string& text, const std::string& origin = "<config>");
  void apply_overrides(const std::vector<std::string>& assignments);  // "key=value"
  std::string dump() const;  // every key, sorted, round-trips exactly
  void validate() const;

  int resolved_tunable_layers() const;
};

}  // namespace tvts2
