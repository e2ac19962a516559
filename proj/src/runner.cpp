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

#include "tvts2/runner.hpp"

#include <chrono>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>

#include "tvts2/trainer.hpp"

namespace tvts2 {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

const std::string& require_data_dir(const RunConfig& cfg) {
  if (cfg.data_dir.empty())
    throw ConfigError("no data directory: set TVTS_DATA_DIR or data_dir");
  return cfg.data_dir;
}

std::string data_path(const RunConfig& cfg, const std::string& rel) {
  return (fs::path(require_data_dir(cfg)) / rel).string();
}

// Epoch-shuffled index stream: every sample appears once per epoch, epochs
// are reshuffled, batches that straddle an epoch boundary borrow from the
// next epoch.
class BatchSampler {
 public:
  BatchSampler(size_t n, Rng rng) : rng_(rng), order_(n) {
    std::iota(order_.begin(), order_.end(), size_t{0});
    pos_ = n;
  }

  std::vector<size_t> next(size_t batch) {
    std::vector<size_t> out;
    out.reserve(batch);
    while (out.size() < batch) {
      if (pos_ >= order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    for (size_t i = order_.size(); i > 1; --i) {
      size_t j = rng_.index(i);
      std::swap(order_[i - 1], order_[j]);
    }
    pos_ = 0;
  }

  Rng rng_;
  std::vector<size_t> order_;
  size_t pos_ = 0;
};

void log_retrieval(std::ostream& log, const char* tag, const RetrievalMetrics& m) {
  log << "  " << tag << "  R@1 " << fmt(m.r1, 2) << "  R@5 " << fmt(m.r5, 2) << "  R@10 "
      << fmt(m.r10, 2) << "  MdR " << fmt(m.median_rank, 1) << "  MeanSim "
      << fmt(m.mean_matched_sim, 4) << "\n";
}

void log_eval(std::ostream& log, const EvalMetrics& em) {
  log << "evaluation over " << em.gallery_size << " pairs\n";
  log_retrieval(log, "t2v", em.t2v);
  log_retrieval(log, "v2t", em.v2t);
  if (em.has_rescored) {
    log_retrieval(log, "t2v*", em.t2v_rescored);
    log_retrieval(log, "v2t*", em.v2t_rescored);
  }
  log << "  ordering accuracy " << fmt(em.sort_accuracy, 4) << " over " << em.sort_samples
      << " clips\n";
  if (em.multi_choice >= 0) log << "  multi-choice accuracy " << fmt(em.multi_choice, 4) << "\n";
  if (em.zero_shot_top1 >= 0) log << "  zero-shot top-1 " << fmt(em.zero_shot_top1, 4) << "\n";
  if (em.probe_top1 >= 0)
    log << "  linear probe top-1 " << fmt(em.probe_top1, 4) << "  top-5 " << fmt(em.probe_top5, 4)
        << "\n";
}

void write_eval_row(std::ofstream& out, int64_t step, const EvalMetrics& em) {
  out << step << '\t' << fmt(em.t2v.r1, 4) << '\t' << fmt(em.t2v.r5, 4) << '\t'
      << fmt(em.t2v.r10, 4) << '\t' << fmt(em.t2v.median_rank, 2) << '\t' << fmt(em.v2t.r1, 4)
      << '\t' << fmt(em.sort_accuracy, 6) << '\n';
}

template <typename T>
TrainResult train_run(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  auto t0 = Clock::now();

  Vocabulary vocab = Vocabulary::load(data_path(cfg, cfg.vocab_file));
  ModelBundle<T> model = build_model<T>(cfg, std::move(vocab));
  ParamRefs<T> params = model.params();
  AdamW<T> opt(params, adamw_options_of(cfg));

  SampleStore train(data_path(cfg, cfg.train_manifest), static_cast<int>(cfg.fps), cfg.cache_mb);
  SampleStore val(data_path(cfg, cfg.val_manifest), static_cast<int>(cfg.fps), cfg.cache_mb);

  size_t total_params = 0, trainable_params = 0;
  for (const auto* p : params) {
    total_params += p->value.data.size();
    if (!p->frozen) trainable_params += p->value.data.size();
  }
  log << "training on " << train.size() << " clips (" << val.size() << " held out), "
      << trainable_params << "/" << total_params << " weights trainable, regime " << cfg.regime
      << " (" << cfg.resolved_tunable_layers() << "/" << cfg.text_layers
      << " text blocks tunable)\n";
  if (!train.preloaded()) log << "note: dataset exceeds cache_mb, reloading clips per step\n";

  fs::create_directories(cfg.out_dir);
  std::ofstream curve(fs::path(cfg.out_dir) / "train_curve.tsv");
  if (!curve) throw IoError("cannot write into output directory " + cfg.out_dir);
  curve << "step\tloss\tcontrastive\tsort\tsort_accuracy\n";
  std::ofstream ecurve(fs::path(cfg.out_dir) / "eval_curve.tsv");
  ecurve << "step\tt2v_r1\tt2v_r5\tt2v_r10\tt2v_mdr\tv2t_r1\tsort_accuracy\n";

  BatchSampler sampler(train.size(), Rng(static_cast<uint64_t>(cfg.seed)).fork(0xDA7A));
  StepStats last;
  // trailing window so the reported training accuracy is not a single noisy batch
  std::deque<std::pair<int, int>> window;
  int win_correct = 0, win_slots = 0;

  for (int64_t step = 1; step <= cfg.steps; ++step) {
    std::vector<size_t> idx = sampler.next(static_cast<size_t>(cfg.batch_size));
    std::vector<PreparedSample<T>> batch;
    batch.reserve(idx.size());
    for (size_t slot = 0; slot < idx.size(); ++slot) {
      Rng prep = Rng(static_cast<uint64_t>(cfg.seed))
                     .fork(Rng::mix(static_cast<uint64_t>(step), 0x50A4 + slot));
      batch.push_back(prepare_train_sample(train.get(idx[slot]), model, cfg, prep));
    }
    zero_grad(params);
    StepStats st =
        batch_pass(model, batch, cfg, LossMode::Full, true, static_cast<int>(cfg.workers));
    if (!std::isfinite(st.total))
      throw NumericError("training diverged at step " + std::to_string(step));
    if (cfg.clip_norm > 0) clip_grad_norm(params, cfg.clip_norm);
    double scale = 1.0;
    if (cfg.warmup_steps > 0)
      scale = std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg.warmup_steps));
    if (cfg.cosine_decay && step > cfg.warmup_steps) {
      double span = static_cast<double>(std::max<int64_t>(1, cfg.steps - cfg.warmup_steps));
      double progress = static_cast<double>(step - cfg.warmup_steps) / span;
      scale *= 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
    }
    opt.set_lr_scale(scale);
    opt.step();
    last = st;

    window.emplace_back(st.sort_correct, st.sort_slots);
    win_correct += st.sort_correct;
    win_slots += st.sort_slots;
    while (window.size() > 50) {
      win_correct -= window.front().first;
      win_slots -= window.front().second;
      window.pop_front();
    }

    curve << step << '\t' << fmt(st.total, 6) << '\t' << fmt(st.contrastive, 6) << '\t'
          << fmt(st.sort, 6) << '\t' << fmt(st.sort_accuracy(), 6) << '\n';
    if (step == 1 || step == cfg.steps || (cfg.log_interval > 0 && step % cfg.log_interval == 0)) {
      double el = seconds_since(t0);
      log << "step " << step << "/" << cfg.steps << "  loss " << fmt(st.total) << "  vtc "
          << fmt(st.contrastive) << "  sort " << fmt(st.sort) << "  acc "
          << fmt(st.sort_accuracy()) << "  " << fmt(static_cast<double>(step) / el, 2)
          << " steps/s\n";
      log.flush();
    }
    if (cfg.eval_interval > 0 && step % cfg.eval_interval == 0 && step != cfg.steps) {
      EvalMetrics em = evaluate_model(model, cfg, val, 0u, nullptr);
      write_eval_row(ecurve, step, em);
      log_eval(log, em);
      log.flush();
    }
  }

  EvalMetrics em = evaluate_model(model, cfg, val, 0u, nullptr);
  write_eval_row(ecurve, cfg.steps, em);
  log_eval(log, em);

  TrainResult res;
  res.final_loss = last.total;
  res.final_contrastive = last.contrastive;
  res.final_sort = last.sort;
  res.final_sort_accuracy =
      win_slots ? static_cast<double>(win_correct) / win_slots : 0.0;
  res.steps_run = cfg.steps;
  res.eval = em;

  res.manifest_path = (fs::path(cfg.out_dir) / "run_manifest.cfg").string();
  {
    std::ofstream mf(res.manifest_path);
    if (!mf) throw IoError("cannot write " + res.manifest_path);
    mf << cfg.dump();
  }
  res.checkpoint_path = (fs::path(cfg.out_dir) / "model.tvc").string();
  save_checkpoint(res.checkpoint_path, cfg.dump(), params_to_records(params));
  model.vocab.save((fs::path(cfg.out_dir) / "vocab.txt").string());
  {
    std::ofstream mt(fs::path(cfg.out_dir) / "metrics.tsv");
    mt << "final_loss\t" << fmt(res.final_loss, 6) << "\n"
       << "final_contrastive\t" << fmt(res.final_contrastive, 6) << "\n"
       << "final_sort\t" << fmt(res.final_sort, 6) << "\n"
       << "train_sort_accuracy\t" << fmt(res.final_sort_accuracy, 6) << "\n"
       << "val_sort_accuracy\t" << fmt(em.sort_accuracy, 6) << "\n"
       << "t2v_r1\t" << fmt(em.t2v.r1, 4) << "\n"
       << "t2v_r5\t" << fmt(em.t2v.r5, 4) << "\n"
       << "t2v_r10\t" << fmt(em.t2v.r10, 4) << "\n"
       << "t2v_mdr\t" << fmt(em.t2v.median_rank, 2) << "\n"
       << "v2t_r1\t" << fmt(em.v2t.r1, 4) << "\n"
       << "v2t_r5\t" << fmt(em.v2t.r5, 4) << "\n"
       << "v2t_r10\t" << fmt(em.v2t.r10, 4) << "\n"
       << "v2t_mdr\t" << fmt(em.v2t.median_rank, 2) << "\n"
       << "steps\t" << res.steps_run << "\n"
       << "wall_seconds\t" << fmt(seconds_since(t0), 1) << "\n";
  }
  log << "finished in " << fmt(seconds_since(t0), 1) << " s; checkpoint at "
      << res.checkpoint_path << "\n";
  return res;
}

}  // namespace

DataSummary cmd_generate_data(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  DatasetOptions opt;
  opt.train_count = static_cast<int>(cfg.train_count);
  opt.val_count = static_cast<int>(cfg.val_count);
  opt.duration = static_cast<int>(cfg.duration);
  opt.fps = static_cast<int>(cfg.fps);
  opt.h = opt.w = static_cast<int>(cfg.image_size);
  opt.caption_fraction = cfg.caption_fraction;
  opt.seed = static_cast<uint64_t>(cfg.seed);
  DatasetLayout out = generate_dataset(require_data_dir(cfg), opt);
  log << "wrote " << opt.train_count << " training and " << opt.val_count
      << " validation clips under " << out.root << "\n";
  DataSummary s;
  s.train_count = opt.train_count;
  s.val_count = opt.val_count;
  s.root = out.root;
  return s;
}

TrainResult cmd_train(const RunConfig& cfg, std::ostream& log) {
  return train_run<float>(cfg, log);
}

EvalMetrics cmd_evaluate(const RunConfig& cfg, unsigned flags, std::ostream& log) {
  if (cfg.checkpoint.empty()) throw ConfigError("evaluate needs a checkpoint path");
  CheckpointFile ck = load_checkpoint(cfg.checkpoint);

  // Model geometry and task parameters come from the snapshot stored in the
  // checkpoint; data location and evaluation knobs come from the caller.
  RunConfig run;
  run.load_text(ck.config_text, cfg.checkpoint);
  run.data_dir = cfg.data_dir;
  run.out_dir = cfg.out_dir;
  run.train_manifest = cfg.train_manifest;
  run.val_manifest = cfg.val_manifest;
  run.vocab_file = cfg.vocab_file;
  run.fps = cfg.fps;
  run.cache_mb = cfg.cache_mb;
  run.workers = cfg.workers;
  run.checkpoint = cfg.checkpoint;
  run.dsl_inv_temp = cfg.dsl_inv_temp;
  run.probe_train = cfg.probe_train;
  run.probe_epochs = cfg.probe_epochs;
  run.probe_lr = cfg.probe_lr;
  run.validate();

  Vocabulary vocab = Vocabulary::load(data_path(run, run.vocab_file));
  ModelBundle<float> model = build_model<float>(run, std::move(vocab));
  ParamRefs<float> params = model.params();
  records_to_params(ck.records, params);

  SampleStore val(data_path(run, run.val_manifest), static_cast<int>(run.fps), run.cache_mb);
  std::unique_ptr<SampleStore> probe;
  if (flags & kEvalProbe)
    probe = std::make_unique<SampleStore>(data_path(run, run.train_manifest),
                                          static_cast<int>(run.fps), run.cache_mb);
  EvalMetrics em = evaluate_model(model, run, val, flags, probe.get());
  log_eval(log, em);
  return em;
}

GradCheckSummary cmd_gradcheck(const RunConfig& cfg, std::ostream& log) {
  auto t0 = Clock::now();

  // Small double-precision geometry: big enough to exercise every operator
  // (masking, both attention stages, both text paths, the ordering head),
  // small enough to check every coordinate by central differences.
  RunConfig g;
  g.seed = cfg.seed;
  g.image_size = 24;
  g.patch_size = 8;
  g.frames = 2;
  g.video_dim = 8;
  g.video_heads = 2;
  g.video_layers = 1;
  g.shared_dim = 8;
  g.text_dim = 8;
  g.text_heads = 2;
  g.text_layers = 1;
  g.context_len = 8;
  g.joint_dim = 8;
  g.joint_heads = 2;
  g.joint_layers = 1;
  g.mlp_ratio = 2;
  g.k_segments = 2;
  g.segment_len = 2;
  g.rho = 0.5;
  g.tau = 0.05;
  g.lambda_sort = 2;
  g.regime = "ft";  // nothing frozen, so every parameter is checked
  g.duration = 6;
  g.fps = 2;
  g.validate();

  ModelBundle<double> model = build_model<double>(g, build_vocab());
  ParamRefs<double> params = model.params();

  // Two in-memory clips, one narrated and one captioned, so both text paths
  // participate in the batch.
  Rng drng = Rng(static_cast<uint64_t>(g.seed)).fork(0x6C0D);
  std::vector<PreparedSample<double>> batch;
  for (int i = 0; i < 2; ++i) {
    EventScript sc = generate_script(static_cast<int>(g.duration), static_cast<int>(g.image_size),
                                     static_cast<int>(g.image_size), drng);
    LoadedSample s;
    s.frames = render_clip(sc);
    s.fps = static_cast<int>(g.fps);
    s.duration = static_cast<double>(g.duration);
    if (i == 1) {
      s.caption = script_caption(sc);
      s.caption_only = true;
    } else {
      s.track = script_transcript(sc);
    }
    Rng prep = Rng(static_cast<uint64_t>(g.seed)).fork(Rng::mix(0xBA7C, static_cast<uint64_t>(i)));
    batch.push_back(prepare_train_sample(s, model, g, prep));
  }

  auto loss_of = [&](LossMode mode) {
    return batch_pass(model, batch, g, mode, false, 1).total;
  };

  ParamRefs<double> vh_params, text_params;
  for (auto* p : params)
    (p->name.rfind("text.", 0) == 0 ? text_params : vh_params).push_back(p);

  // The ordering head applies a stop-gradient to the text summaries, so text
  // parameters receive gradient only through the contrastive term. Finite
  // differences of the full loss would see the blocked path too; text
  // parameters are therefore checked against the contrastive loss alone.
  zero_grad(params);
  batch_pass(model, batch, g, LossMode::Full, true, 1);
  Rng crng = Rng(static_cast<uint64_t>(g.seed)).fork(0xC0DE);
  GradCheckReport rep_vh =
      grad_check<double>([&] { return loss_of(LossMode::Full); }, vh_params, 1e-5, 0, crng);

  zero_grad(params);
  batch_pass(model, batch, g, LossMode::ContrastiveOnly, true, 1);
  GradCheckReport rep_tx = grad_check<double>(
      [&] { return loss_of(LossMode::ContrastiveOnly); }, text_params, 1e-5, 0, crng);

  zero_grad(params);
  batch_pass(model, batch, g, LossMode::SortOnly, true, 1);
  bool text_zero = true;
  for (const auto* p : text_params)
    for (double v : p->grad.data)
      if (v != 0.0) text_zero = false;

  GradCheckSummary out;
  out.max_rel_err = std::max(rep_vh.max_rel_err, rep_tx.max_rel_err);
  out.coords_checked = rep_vh.coords_checked + rep_tx.coords_checked;
  out.seconds = seconds_since(t0);
  out.sort_text_grads_zero = text_zero;

  std::string rep;
  char line[160];
  std::snprintf(line, sizeof(line), "%-28s %8s %14s\n", "tensor", "coords", "max_rel_err");
  rep += line;
  auto add_blocks = [&](const GradCheckReport& r, const char* loss_name) {
    rep += std::string("-- checked against ") + loss_name + " --\n";
    for (const auto& b : r.blocks) {
      std::snprintf(line, sizeof(line), "%-28s %8lld %14.3e\n", b.name.c_str(),
                    static_cast<long long>(b.coords_checked), b.max_rel_err);
      rep += line;
    }
  };
  add_blocks(rep_vh, "full objective");
  add_blocks(rep_tx, "contrastive objective");
  out.report = rep;

  log << rep;
  log << "checked " << out.coords_checked << " coordinates in " << fmt(out.seconds, 2)
      << " s; max relative error " << fmt(out.max_rel_err * 1e6, 4) << "e-6\n";
  log << "text gradients under the ordering loss alone: "
      << (text_zero ? "all exactly zero" : "NONZERO") << "\n";
  if (out.max_rel_err >= 1e-6)
    throw NumericError("gradient check failed: max relative error " +
                       std::to_string(out.max_rel_err));
  if (!text_zero)
    throw NumericError("gradient check failed: ordering loss leaked into text parameters");
  return out;
}

int cmd_sweep(const RunConfig& cfg, const std::string& axis, std::ostream& log) {
  cfg.validate();
  std::vector<std::pair<std::string, std::string>> settings;
  if (axis == "rho") {
    for (const char* v : {"0", "0.25", "0.5", "0.7"}) settings.emplace_back("rho", v);
  } else if (axis == "tunable_layers") {
    for (int64_t v = 0; v <= cfg.text_layers; ++v)
      settings.emplace_back("text_tunable_layers", std::to_string(v));
  } else {
    throw ConfigError("sweep axis must be 'rho' or 'tunable_layers', got '" + axis + "'");
  }

  std::string base_out = cfg.out_dir;
  struct Row {
    std::string label;
    TrainResult r;
  };
  std::vector<Row> rows;
  for (const auto& [key, value] : settings) {
    RunConfig c = cfg;
    c.set(key, value);
    c.out_dir = (fs::path(base_out) / (key + "_" + value)).string();
    log << "== sweep " << key << " = " << value << " ==\n";
    rows.push_back({key + "=" + value, train_run<float>(c, log)});
  }

  log << "\nsweep summary\n";
  char line[200];
  std::snprintf(line, sizeof(line), "%-24s %10s %10s %10s %10s\n", "setting", "loss", "train_acc",
                "t2v_R@1", "v2t_R@1");
  log << line;
  for (const auto& row : rows) {
    std::snprintf(line, sizeof(line), "%-24s %10.4f %10.4f %10.2f %10.2f\n", row.label.c_str(),
                  row.r.final_loss, row.r.final_sort_accuracy, row.r.eval.t2v.r1,
                  row.r.eval.v2t.r1);
    log << line;
  }
  return static_cast<int>(rows.size());
}

}  // namespace tvts2
