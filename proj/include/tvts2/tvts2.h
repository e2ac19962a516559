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

/* Public C interface of the tvts2 shared library.
 *
 * Every entry point returns a tvts2_status; on failure the thread-local
 * message from tvts2_last_error() describes what went wrong. Configuration
 * objects are opaque; keys and values are the same strings accepted by
 * configuration files ("key = value" lines).
 */

#ifndef TVTS2_TVTS2_H_
#define TVTS2_TVTS2_H_

#include <stddef.h>
#include <stdio.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes; the CLI uses them verbatim as process exit codes. */
typedef enum tvts2_status {
  TVTS2_OK = 0,
  TVTS2_ERR_CONFIG = 2,  /* bad configuration, unknown key, invalid value */
  TVTS2_ERR_NUMERIC = 3, /* divergence, failed numeric check, broken contract */
  TVTS2_ERR_IO = 4       /* missing or malformed file */
} tvts2_status;

/* Feature flags for tvts2_evaluate. */
#define TVTS2_EVAL_DUAL_SOFTMAX 0x1u /* rescore similarities before ranking */
#define TVTS2_EVAL_MULTI_CHOICE 0x2u /* 8-way caption choice accuracy */
#define TVTS2_EVAL_ZERO_SHOT 0x4u    /* prompt-based shape classification */
#define TVTS2_EVAL_PROBE 0x8u        /* linear probe on frozen video features */

typedef struct tvts2_config tvts2_config;

/* Fresh configuration with built-in defaults; data_dir is seeded from the
 * TVTS_DATA_DIR environment variable when it is set. Free with
 * tvts2_config_free (NULL is ignored). Returns NULL only on allocation
 * failure. */
tvts2_config* tvts2_config_new(void);
void tvts2_config_free(tvts2_config* cfg);

/* Loads "key = value" lines; '#' starts a comment. Unknown keys fail. */
tvts2_status tvts2_config_load(tvts2_config* cfg, const char* path);
tvts2_status tvts2_config_set(tvts2_config* cfg, const char* key, const char* value);

/* Copies the value of key into buf (always NUL-terminated when cap > 0) and
 * returns the full value length, or -1 for an unknown key. */
long tvts2_config_get(const tvts2_config* cfg, const char* key, char* buf, size_t cap);

/* Message for the most recent failure on this thread ("" when none). The
 * pointer stays valid until the next library call on the same thread. */
const char* tvts2_last_error(void);

const char* tvts2_version(void);

typedef struct tvts2_train_result {
  double final_loss;
  double final_contrastive;
  double final_sort;
  double train_sort_accuracy; /* over the trailing 50 steps */
  double t2v_r1;              /* final validation retrieval, percent */
  double v2t_r1;
  long long steps;
  char checkpoint_path[512];
} tvts2_train_result;

typedef struct tvts2_eval_metrics {
  double t2v_r1, t2v_r5, t2v_r10, t2v_median_rank;
  double v2t_r1, v2t_r5, v2t_r10, v2t_median_rank;
  double sort_accuracy;
  double multi_choice;   /* -1 unless TVTS2_EVAL_MULTI_CHOICE */
  double zero_shot_top1; /* -1 unless TVTS2_EVAL_ZERO_SHOT */
  double probe_top1;     /* -1 unless TVTS2_EVAL_PROBE */
  double probe_top5;
  int gallery_size;
} tvts2_eval_metrics;

typedef struct tvts2_gradcheck_result {
  double max_rel_err;
  long long coords_checked;
  double seconds;
  int text_grads_zero_under_ordering; /* 1 when the stop-gradient held */
} tvts2_gradcheck_result;

/* Commands. `log` receives human-readable progress (NULL silences it);
 * result pointers may be NULL when the caller only wants the status. */
tvts2_status tvts2_generate_data(const tvts2_config* cfg, FILE* log);
tvts2_status tvts2_train(const tvts2_config* cfg, tvts2_train_result* out, FILE* log);
tvts2_status tvts2_evaluate(const tvts2_config* cfg, const char* checkpoint, unsigned flags,
                            tvts2_eval_metrics* out, FILE* log);
tvts2_status tvts2_gradcheck(const tvts2_config* cfg, tvts2_gradcheck_result* out, FILE* log);
tvts2_status tvts2_sweep(const tvts2_config* cfg, const char* axis, FILE* log);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* TVTS2_TVTS2_H_ */
