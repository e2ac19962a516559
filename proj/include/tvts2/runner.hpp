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

#include <iosfwd>
#include <string>

#include "tvts2/config.hpp"
#include "tvts2/evalkit.hpp"

namespace tvts2 {

// Evaluation feature flags (bitmask).
inline constexpr unsigned kEvalDualSoftmax = 1u << 0;
inline constexpr unsigned kEvalMultiChoice = 1u << 1;
inline constexpr unsigned kEvalZeroShot = 1u << 2;
inline constexpr unsigned kEvalProbe = 1u << 3;

struct EvalMetrics {
  RetrievalMetrics t2v, v2t;
  RetrievalMetrics t2v_rescored, v2t_rescored;
  bool has_rescored = false;
  double sort_accuracy = 0;
  int sort_samples = 0;
  double multi_choice = -1;     // -1 when not requested
  double zero_shot_top1 = -1;
  double probe_top1 = -1, probe_top5 = -1;
  int gallery_size = 0;
};

struct TrainResult {
  double final_loss = 0;
  double final_contrastive = 0;
  double final_sort = 0;
  double final_sort_accuracy = 0;
  int64_t steps_run = 0;
  EvalMetrics eval;
  std::string checkpoint_path;
  std::string manifest_path;
};

struct GradCheckSummary {
  double max_rel_err = 0;
  int64_t coords_checked = 0;
  double seconds = 0;
  bool sort_text_grads_zero = false;
  std::string report;  // per-block table
};

struct DataSummary {
  int train_count = 0;
  int val_count = 0;
  std::string root;
};

// Command entry points used by the public API layer. Each throws the error
// taxonomy in common.hpp; the caller maps ErrorKind to an exit code.
DataSummary cmd_generate_data(const RunConfig& cfg, std::ostream& log);
TrainResult cmd_train(const RunConfig& cfg, std::ostream& log);
EvalMetrics cmd_evaluate(const RunConfig& cfg, unsigned flags, std::ostream& log);
GradCheckSummary cmd_gradcheck(const RunConfig& cfg, std::ostream& log);
int cmd_sweep(const RunConfig& cfg, const std::string& axis, std::ostream& log);

}  // namespace tvts2
