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

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tvts2/tvts2.h"

namespace {

struct ConfigDeleter {
  void operator()(tvts2_config* c) const { tvts2_config_free(c); }
};
using ConfigPtr = std::unique_ptr<tvts2_config, ConfigDeleter>;

struct CommonArgs {
  std::string config_file;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_file, "configuration file with key = value lines");
  cmd->add_option("-s,--set", args.overrides, "override one key (key=value); may repeat");
}

std::string trimmed(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

int report(tvts2_status st) {
  if (st != TVTS2_OK) std::fprintf(stderr, "error: %s\n", tvts2_last_error());
  return static_cast<int>(st);
}

// Builds the configuration from file and overrides; returns nullptr after
// printing the failure (caller exits with *status).
ConfigPtr make_config(const CommonArgs& args, int* status) {
  ConfigPtr cfg(tvts2_config_new());
  if (!cfg) {
    std::fprintf(stderr, "error: out of memory\n");
    *status = TVTS2_ERR_NUMERIC;
    return nullptr;
  }
  if (!args.config_file.empty()) {
    tvts2_status st = tvts2_config_load(cfg.get(), args.config_file.c_str());
    if (st != TVTS2_OK) {
      *status = report(st);
      return nullptr;
    }
  }
  for (const std::string& kv : args.overrides) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
      *status = TVTS2_ERR_CONFIG;
      return nullptr;
    }
    std::string key = trimmed(kv.substr(0, eq));
    std::string value = trimmed(kv.substr(eq + 1));
    tvts2_status st = tvts2_config_set(cfg.get(), key.c_str(), value.c_str());
    if (st != TVTS2_OK) {
      *status = report(st);
      return nullptr;
    }
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"video-text pretraining workbench"};
  app.set_version_flag("--version", std::string("tvts2 ") + tvts2_version());
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, grad_args, sweep_args;

  CLI::App* gen = app.add_subcommand("generate-data", "write a synthetic clip dataset");
  add_common(gen, gen_args);

  CLI::App* train = app.add_subcommand("train", "train a model and save a checkpoint");
  add_common(train, train_args);

  CLI::App* eva = app.add_subcommand("evaluate", "score a checkpoint on the validation split");
  add_common(eva, eval_args);
  std::string checkpoint;
  bool dsl = false, multi = false, zero = false, probe = false;
  eva->add_option("--checkpoint", checkpoint, "checkpoint file to evaluate");
  eva->add_flag("--dsl", dsl, "also report dual-softmax rescored retrieval");
  eva->add_flag("--multi-choice", multi, "also report 8-way multiple choice accuracy");
  eva->add_flag("--zero-shot", zero, "also report zero-shot shape classification");
  eva->add_flag("--probe", probe, "also report linear probe accuracy");

  CLI::App* grad = app.add_subcommand("gradcheck", "verify gradients by finite differences");
  add_common(grad, grad_args);

  CLI::App* swp = app.add_subcommand("sweep", "train across one axis and summarize");
  add_common(swp, sweep_args);
  std::string axis;
  swp->add_option("--axis", axis, "sweep axis: rho or tunable_layers")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return TVTS2_ERR_CONFIG;
  }

  int status = 0;
  if (gen->parsed()) {
    ConfigPtr cfg = make_config(gen_args, &status);
    if (!cfg) return status;
    return report(tvts2_generate_data(cfg.get(), stdout));
  }
  if (train->parsed()) {
    ConfigPtr cfg = make_config(train_args, &status);
    if (!cfg) return status;
    return report(tvts2_train(cfg.get(), nullptr, stdout));
  }
  if (eva->parsed()) {
    ConfigPtr cfg = make_config(eval_args, &status);
    if (!cfg) return status;
    unsigned flags = 0;
    if (dsl) flags |= TVTS2_EVAL_DUAL_SOFTMAX;
    if (multi) flags |= TVTS2_EVAL_MULTI_CHOICE;
    if (zero) flags |= TVTS2_EVAL_ZERO_SHOT;
    if (probe) flags |= TVTS2_EVAL_PROBE;
    const char* ckpt = checkpoint.empty() ? nullptr : checkpoint.c_str();
    return report(tvts2_evaluate(cfg.get(), ckpt, flags, nullptr, stdout));
  }
  if (grad->parsed()) {
    ConfigPtr cfg = make_config(grad_args, &status);
    if (!cfg) return status;
    return report(tvts2_gradcheck(cfg.get(), nullptr, stdout));
  }
  if (swp->parsed()) {
    ConfigPtr cfg = make_config(sweep_args, &status);
    if (!cfg) return status;
    return report(tvts2_sweep(cfg.get(), axis.c_str(), stdout));
  }
  return 0;
}
