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

#include "tvts2/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <variant>

#include "tvts2/common.hpp"
#include "tvts2/model.hpp"

namespace tvts2 {

namespace {

using Member = std::variant<int64_t RunConfig::*, double RunConfig::*, bool RunConfig::*,
                            std::string RunConfig::*>;

struct Field {
  const char* name;
  Member member;
};

#define TVTS2_FIELD(member) {#member, &RunConfig::member}

const Field kFields[] = {
    TVTS2_FIELD(seed),
    TVTS2_FIELD(steps),
    TVTS2_FIELD(batch_size),
    TVTS2_FIELD(eval_interval),
    TVTS2_FIELD(log_interval),
    TVTS2_FIELD(workers),
    TVTS2_FIELD(regime),
    TVTS2_FIELD(text_tunable_layers),
    TVTS2_FIELD(rho),
    TVTS2_FIELD(k_segments),
    TVTS2_FIELD(segment_len),
    TVTS2_FIELD(lambda_sort),
    TVTS2_FIELD(tau),
    TVTS2_FIELD(eval_sort_draws),
    TVTS2_FIELD(eval_clip_views),
    TVTS2_FIELD(lr_fresh),
    TVTS2_FIELD(lr_carried),
    TVTS2_FIELD(weight_decay),
    TVTS2_FIELD(beta1),
    TVTS2_FIELD(beta2),
    TVTS2_FIELD(adam_eps),
    TVTS2_FIELD(warmup_steps),
    TVTS2_FIELD(clip_norm),
    TVTS2_FIELD(cosine_decay),
    TVTS2_FIELD(image_size),
    TVTS2_FIELD(patch_size),
    TVTS2_FIELD(frames),
    TVTS2_FIELD(video_dim),
    TVTS2_FIELD(video_heads),
    TVTS2_FIELD(video_layers),
    TVTS2_FIELD(shared_dim),
    TVTS2_FIELD(text_dim),
    TVTS2_FIELD(text_heads),
    TVTS2_FIELD(text_layers),
    TVTS2_FIELD(context_len),
    TVTS2_FIELD(joint_dim),
    TVTS2_FIELD(joint_heads),
    TVTS2_FIELD(joint_layers),
    TVTS2_FIELD(mlp_ratio),
    TVTS2_FIELD(data_dir),
    TVTS2_FIELD(out_dir),
    TVTS2_FIELD(train_manifest),
    TVTS2_FIELD(val_manifest),
    TVTS2_FIELD(vocab_file),
    TVTS2_FIELD(fps),
    TVTS2_FIELD(duration),
    TVTS2_FIELD(train_count),
    TVTS2_FIELD(val_count),
    TVTS2_FIELD(caption_fraction),
    TVTS2_FIELD(cache_mb),
    TVTS2_FIELD(checkpoint),
    TVTS2_FIELD(dsl_inv_temp),
    TVTS2_FIELD(probe_train),
    TVTS2_FIELD(probe_epochs),
    TVTS2_FIELD(probe_lr),
};

#undef TVTS2_FIELD

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

const Field* find_field(const std::string& key) {
  for (const auto& f : kFields)
    if (key == f.name) return &f;
  return nullptr;
}


std::string format_f64(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

RunConfig::RunConfig() {
  if (const char* env = std::getenv("TVTS_DATA_DIR")) data_dir = env;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> v;
    for (const auto& f : kFields) v.push_back(f.name);
    std::sort(v.begin(), v.end());
    return v;
  }();
  return k;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown configuration key '" + key + "'");
  std::string v = trim(value);
  std::visit(
      [&](auto member) {
        using M = std::decay_t<decltype(this->*member)>;
        if constexpr (std::is_same_v<M, int64_t>) {
          int64_t out = 0;
          auto res = std::from_chars(v.data(), v.data() + v.size(), out);
          if (res.ec != std::errc() || res.ptr != v.data() + v.size())
            throw ConfigError("key '" + key + "': expected integer, got '" + v + "'");
          this->*member = out;
        } else if constexpr (std::is_same_v<M, double>) {
          try {
            size_t used = 0;
            double out = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument("trailing");
            this->*member = out;
          } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': expected number, got '" + v + "'");
          }
        } else if constexpr (std::is_same_v<M, bool>) {
          if (v == "true" || v == "1")
            this->*member = true;
          else if (v == "false" || v == "0")
            this->*member = false;
          else
            throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
        } else {
          this->*member = v;
        }
      },
      f->member);
}

std::string RunConfig::get(const std::string& key) const {
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown configuration key '" + key + "'");
  return std::visit(
      [&](auto member) -> std::string {
        using M = std::decay_t<decltype(this->*member)>;
        if constexpr (std::is_same_v<M, int64_t>)
          return std::to_string(this->*member);
        else if constexpr (std::is_same_v<M, double>)
          return format_f64(this->*member);
        else if constexpr (std::is_same_v<M, bool>)
          return this->*member ? "true" : "false";
        else
          return this->*member;
      },
      f->member);
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    set(key, value);
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  load_text(buf.str(), path);
}

void RunConfig::apply_overrides(const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    size_t eq = a.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override '" + a + "': expected key=value");
    set(trim(a.substr(0, eq)), trim(a.substr(eq + 1)));
  }
}

std::string RunConfig::dump() const {
  std::ostringstream os;
  for (const auto& k : keys()) os << k << " = " << get(k) << "\n";
  return os.str();
}

void RunConfig::validate() const {
  if (steps < 0) throw ConfigError("steps must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be non-negative");
  if (clip_norm < 0) throw ConfigError("clip_norm must be non-negative (0 disables)");
  if (eval_interval < 0) throw ConfigError("eval_interval must be non-negative (0 disables)");
  if (log_interval < 0) throw ConfigError("log_interval must be non-negative (0 disables)");
  if (workers < 1) throw ConfigError("workers must be positive");
  if (!(rho >= 0.0) || rho >= 1.0) throw ConfigError("rho must lie in [0, 1)");
  if (k_segments < 2) throw ConfigError("k_segments must be at least 2");
  if (segment_len < 0) throw ConfigError("segment_len must be non-negative");
  if (lambda_sort < 0) throw ConfigError("lambda_sort must be non-negative");
  if (eval_sort_draws < 1) throw ConfigError("eval_sort_draws must be positive");
  if (eval_clip_views < 1) throw ConfigError("eval_clip_views must be positive");
  if (!(tau > 0)) throw ConfigError("tau must be positive");
  if (fps < 1) throw ConfigError("fps must be positive");
  if (duration < 1) throw ConfigError("duration must be positive");
  if (cache_mb < 0) throw ConfigError("cache_mb must be non-negative");
  if (caption_fraction < 0 || caption_fraction > 1)
    throw ConfigError("caption_fraction must lie in [0, 1]");
  parse_regime(regime);
  int tl = resolved_tunable_layers();
  if (tl < 0 || tl > text_layers)
    throw ConfigError("text_tunable_layers must lie in [0, text_layers]");
  double span = static_cast<double>(k_segments) * (segment_len + 1.0) - 1.0;
  if (static_cast<double>(duration) < span)
    throw ConfigError("duration too small: k_segments windows need " +
                      std::to_string(span) + "s");
  if (probe_train < 1 || probe_epochs < 1 || !(probe_lr > 0))
    throw ConfigError("bad probe settings");
  if (!(dsl_inv_temp > 0)) throw ConfigError("dsl_inv_temp must be positive");
}

int RunConfig::resolved_tunable_layers() const {
  if (text_tunable_layers >= 0) return static_cast<int>(text_tunable_layers);
  return resolve_tunable_layers(parse_regime(regime), static_cast<int>(text_layers));
}

}  // namespace tvts2
