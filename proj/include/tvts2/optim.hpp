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
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "tvts2/common.hpp"
#include "tvts2/tensor.hpp"

namespace tvts2 {

// Learning-rate group. Modules initialized from scratch ("fresh") train at a
// different rate than modules whose weights are carried over ("carried").
enum class ParamGroup : uint8_t { Carried = 0, Fresh = 1 };

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool grad_live = false;  // set by zero_grad; step() demands it on trainables
  bool frozen = false;
  ParamGroup group = ParamGroup::Carried;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v, ParamGroup g = ParamGroup::Carried)
      : name(std::move(n)), value(std::move(v)), group(g) {
    grad = Tensor<T>::zeros(value.shape);
  }
};

template <typename T>
using ParamRefs = std::vector<Parameter<T>*>;

template <typename T>
void zero_grad(ParamRefs<T>& params) {
  for (auto* p : params) {
    std::fill(p->grad.data.begin(), p->grad.data.end(), T(0));
    p->grad_live = true;
  }
}

struct AdamWOptions {
  double lr_fresh = 1e-3;
  double lr_carried = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

// AdamW with decoupled weight decay and two learning-rate groups. Frozen
// parameters get no moment slots and are never written to; step() refuses to
// run if a trainable parameter has no accumulated gradient (guards against
// silently skipping part of the model).
template <typename T>
class AdamW {
 public:
  AdamW(ParamRefs<T> params, AdamWOptions opt) : opt_(opt) {
    if (!(opt.beta1 >= 0 && opt.beta1 < 1) || !(opt.beta2 >= 0 && opt.beta2 < 1))
      throw ConfigError("adamw: betas must lie in [0,1)");
    if (opt.eps <= 0) throw ConfigError("adamw: eps must be positive");
    if (opt.lr_fresh < 0 || opt.lr_carried < 0)
      throw ConfigError("adamw: learning rates must be non-negative");
    if (opt.weight_decay < 0) throw ConfigError("adamw: weight decay must be non-negative");
    for (auto* p : params) {
      if (p->frozen) continue;
      Slot s;
      s.p = p;
      s.m.assign(p->value.data.size(), T(0));
      s.v.assign(p->value.data.size(), T(0));
      slots_.push_back(std::move(s));
    }
  }

  // Scales both learning rates for the next steps (used for warmup ramps).
  void set_lr_scale(double s) {
    if (!(s >= 0)) throw ConfigError("adamw: lr scale must be non-negative");
    lr_scale_ = s;
  }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (auto& s : slots_) {
      Parameter<T>* p = s.p;
      if (!p->grad_live)
        throw ContractError("adamw: parameter '" + p->name +
                            "' has no gradient accumulated for this step");
      double lr = lr_scale_ * (p->group == ParamGroup::Fresh ? opt_.lr_fresh : opt_.lr_carried);
      size_t n = p->value.data.size();
      for (size_t i = 0; i < n; ++i) {
        double g = static_cast<double>(p->grad.data[i]);
        double m = opt_.beta1 * static_cast<double>(s.m[i]) + (1.0 - opt_.beta1) * g;
        double v = opt_.beta2 * static_cast<double>(s.v[i]) + (1.0 - opt_.beta2) * g * g;
        s.m[i] = static_cast<T>(m);
        s.v[i] = static_cast<T>(v);
        double mhat = m / bc1;
        double vhat = v / bc2;
        double w = static_cast<double>(p->value.data[i]);
        w *= 1.0 - lr * opt_.weight_decay;  // decoupled decay
        w -= lr * mhat / (std::sqrt(vhat) + opt_.eps);
        p->value.data[i] = static_cast<T>(w);
      }
    }
  }

  int64_t step_count() const { return t_; }
  size_t trainable_count() const { return slots_.size(); }

 private:
  struct Slot {
    Parameter<T>* p;
    std::vector<T> m, v;
  };
  std::vector<Slot> slots_;
  AdamWOptions opt_;
  int64_t t_ = 0;
  double lr_scale_ = 1.0;
};

// Scales gradients in place so their global l2 norm does not exceed
// max_norm; returns the norm before clipping. Frozen parameters are skipped.
template <typename T>
double clip_grad_norm(ParamRefs<T>& params, double max_norm) {
  if (max_norm <= 0) throw ConfigError("clip_grad_norm: max_norm must be positive");
  double sq = 0;
  for (const auto* p : params) {
    if (p->frozen) continue;
    for (const T& g : p->grad.data) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  double norm = std::sqrt(sq);
  if (norm > max_norm) {
    T s = static_cast<T>(max_norm / norm);
    for (auto* p : params) {
      if (p->frozen) continue;
      for (T& g : p->grad.data) g *= s;
    }
  }
  return norm;
}

struct GradCheckBlock {
  std::string name;
  double max_rel_err = 0.0;
  int64_t coords_checked = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  int64_t coords_checked = 0;
  std::vector<GradCheckBlock> blocks;
};

// Central-difference check of already-populated analytic gradients. loss_fn
// must recompute the loss from the parameters' current values. Relative error
// uses max(1, |analytic|, |fd|) in the denominator so near-zero gradients are
// judged on absolute error.
template <typename T>
GradCheckReport grad_check(const std::function<double()>& loss_fn,
                           const ParamRefs<T>& params, double epsilon,
                           int64_t max_coords_per_tensor, Rng& rng,
                           const std::function<std::string(const std::string&)>&
                               block_of = nullptr) {
  GradCheckReport report;
  auto block_index = [&](const std::string& pname) -> GradCheckBlock& {
    std::string key = block_of ? block_of(pname) : pname;
    for (auto& b : report.blocks)
      if (b.name == key) return b;
    report.blocks.push_back({key, 0.0, 0});
    return report.blocks.back();
  };
  for (auto* p : params) {
    if (p->frozen) continue;
    int64_t n = p->value.numel();
    std::vector<int64_t> coords;
    if (max_coords_per_tensor <= 0 || n <= max_coords_per_tensor) {
      coords.resize(static_cast<size_t>(n));
      std::iota(coords.begin(), coords.end(), 0);
    } else {
      for (int64_t i = 0; i < max_coords_per_tensor; ++i)
        coords.push_back(static_cast<int64_t>(rng.index(static_cast<uint64_t>(n))));
    }
    GradCheckBlock& blk = block_index(p->name);
    for (int64_t c : coords) {
      T saved = p->value.at(c);
      p->value.at(c) = saved + static_cast<T>(epsilon);
      double fp = loss_fn();
      p->value.at(c) = saved - static_cast<T>(epsilon);
      double fm = loss_fn();
      p->value.at(c) = saved;
      double fd = (fp - fm) / (2.0 * epsilon);
      double an = static_cast<double>(p->grad.at(c));
      double denom = std::max({1.0, std::fabs(an), std::fabs(fd)});
      double err = std::fabs(an - fd) / denom;
      blk.max_rel_err = std::max(blk.max_rel_err, err);
      blk.coords_checked++;
      report.max_rel_err = std::max(report.max_rel_err, err);
      report.coords_checked++;
    }
  }
  return report;
}

}  // namespace tvts2
