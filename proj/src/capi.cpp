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

#include "tvts2/tvts2.h"

#include <cstring>
#include <new>
#include <ostream>
#include <streambuf>
#include <string>

#include "tvts2/common.hpp"
#include "tvts2/config.hpp"
#include "tvts2/runner.hpp"

struct tvts2_config {
  tvts2::RunConfig cfg;
};

namespace {

thread_local std::string g_last_error;

tvts2_status status_of(tvts2::ErrorKind kind) {
  switch (kind) {
    case tvts2::ErrorKind::Config:
      return TVTS2_ERR_CONFIG;
    case tvts2::ErrorKind::Numeric:
      return TVTS2_ERR_NUMERIC;
    case tvts2::ErrorKind::Io:
      return TVTS2_ERR_IO;
  }
  return TVTS2_ERR_NUMERIC;
}

template <typename Fn>
tvts2_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return TVTS2_OK;
  } catch (const tvts2::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return TVTS2_ERR_NUMERIC;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TVTS2_ERR_NUMERIC;
  }
}

// std::ostream view over a caller-provided FILE*; a null FILE* swallows all
// output.
class FileBuf : public std::streambuf {
 public:
  explicit FileBuf(FILE* f) : f_(f) {}

 protected:
  int overflow(int ch) override {
    if (ch == traits_type::eof()) return 0;
    if (f_ && std::fputc(ch, f_) == EOF) return traits_type::eof();
    return ch;
  }
  std::streamsize xsputn(const char* s, std::streamsize n) override {
    if (!f_) return n;
    return static_cast<std::streamsize>(std::fwrite(s, 1, static_cast<size_t>(n), f_));
  }
  int sync() override {
    if (f_ && std::fflush(f_) != 0) return -1;
    return 0;
  }

 private:
  FILE* f_;
};

void copy_path(char (&dst)[512], const std::string& src) {
  std::snprintf(dst, sizeof(dst), "%s", src.c_str());
}

void fill_metrics(tvts2_eval_metrics& out, const tvts2::EvalMetrics& em) {
  out.t2v_r1 = em.t2v.r1;
  out.t2v_r5 = em.t2v.r5;
  out.t2v_r10 = em.t2v.r10;
  out.t2v_median_rank = em.t2v.median_rank;
  out.v2t_r1 = em.v2t.r1;
  out.v2t_r5 = em.v2t.r5;
  out.v2t_r10 = em.v2t.r10;
  out.v2t_median_rank = em.v2t.median_rank;
  out.sort_accuracy = em.sort_accuracy;
  out.multi_choice = em.multi_choice;
  out.zero_shot_top1 = em.zero_shot_top1;
  out.probe_top1 = em.probe_top1;
  out.probe_top5 = em.probe_top5;
  out.gallery_size = em.gallery_size;
}

}  // namespace

extern "C" {

tvts2_config* tvts2_config_new(void) { return new (std::nothrow) tvts2_config(); }

void tvts2_config_free(tvts2_config* cfg) { delete cfg; }

tvts2_status tvts2_config_load(tvts2_config* cfg, const char* path) {
  if (!cfg || !path) {
    g_last_error = "null argument";
    return TVTS2_ERR_CONFIG;
  }
  return guarded([&] { cfg->cfg.load_file(path); });
}

tvts2_status tvts2_config_set(tvts2_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) {
    g_last_error = "null argument";
    return TVTS2_ERR_CONFIG;
  }
  return guarded([&] { cfg->cfg.set(key, value); });
}

long tvts2_config_get(const tvts2_config* cfg, const char* key, char* buf, size_t cap) {
  if (!cfg || !key) return -1;
  std::string value;
  try {
    value = cfg->cfg.get(key);
  } catch (const std::exception&) {
    return -1;
  }
  if (buf && cap > 0) {
    size_t n = value.size() < cap - 1 ? value.size() : cap - 1;
    std::memcpy(buf, value.data(), n);
    buf[n] = '\0';
  }
  return static_cast<long>(value.size());
}

const char* tvts2_last_error(void) { return g_last_error.c_str(); }

const char* tvts2_version(void) { return "1.0.0"; }

tvts2_status tvts2_generate_data(const tvts2_config* cfg, FILE* log) {
  if (!cfg) {
    g_last_error = "null configuration";
    return TVTS2_ERR_CONFIG;
  }
  return guarded([&] {
    FileBuf buf(log);
    std::ostream os(&buf);
    tvts2::cmd_generate_data(cfg->cfg, os);
  });
}

tvts2_status tvts2_train(const tvts2_config* cfg, tvts2_train_result* out, FILE* log) {
  if (!cfg) {
    g_last_error = "null configuration";
    return TVTS2_ERR_CONFIG;
  }
  return guarded([&] {
    FileBuf buf(log);
    std::ostream os(&buf);
    tvts2::TrainResult r = tvts2::cmd_train(cfg->cfg, os);
    if (out) {
      *out = tvts2_train_result{};
      out->final_loss = r.final_loss;
      out->final_contrastive = r.final_contrastive;
      out->final_sort = r.final_sort;
      out->train_sort_accuracy = r.final_sort_accuracy;
      out->t2v_r1 = r.eval.t2v.r1;
      out->v2t_r1 = r.eval.v2t.r1;
      out->steps = r.steps_run;
      copy_path(out->checkpoint_path, r.checkpoint_path);
    }
  });
}

tvts2_status tvts2_evaluate(const tvts2_config* cfg, const char* checkpoint, unsigned flags,
                            tvts2_eval_metrics* out, FILE* log) {
  if (!cfg) {
    g_last_error = "null configuration";
    return TVTS2_ERR_CONFIG;
  }
  return guarded([&] {
    tvts2::RunConfig run = cfg->cfg;
    if (checkpoint && *checkpoint) run.checkpoint = checkpoint;
    FileBuf buf(log);
    std::ostream os(&buf);
    tvts2::EvalMetrics em = tvts2::cmd_evaluate(run, flags, os);
    if (out) {
      *out = tvts2_eval_metrics{};
      fill_metrics(*out, em);
    }
  });
}

tvts2_status tvts2_gradcheck(const tvts2_config* cfg, tvts2_gradcheck_result* out, FILE* log) {
  if (!cfg) {
    g_last_error = "null configuration";
    return TVTS2_ERR_CONFIG;
  }
  return guarded([&] {
    FileBuf buf(log);
    std::ostream os(&buf);
    tvts2::GradCheckSummary s = tvts2::cmd_gradcheck(cfg->cfg, os);
    if (out) {
      *out = tvts2_gradcheck_result{};
      out->max_rel_err = s.max_rel_err;
      out->coords_checked = s.coords_checked;
      out->seconds = s.seconds;
      out->text_grads_zero_under_ordering = s.sort_text_grads_zero ? 1 : 0;
    }
  });
}

tvts2_status tvts2_sweep(const tvts2_config* cfg, const char* axis, FILE* log) {
  if (!cfg || !axis) {
    g_last_error = "null argument";
    return TVTS2_ERR_CONFIG;
  }
  return guarded([&] {
    FileBuf buf(log);
    std::ostream os(&buf);
    tvts2::cmd_sweep(cfg->cfg, axis, os);
  });
}

}  // extern "C"
