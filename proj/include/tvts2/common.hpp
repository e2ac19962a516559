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

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace tvts2 {

// Error taxonomy. Every failure surfaced through the C API / CLI maps to one
// of three exit codes: 2 = bad configuration, 3 = numeric/contract failure,
// 4 = IO or on-disk format failure.
enum class ErrorKind : int {
  Config = 2,
  Numeric = 3,
  Io = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Bad run configuration: unknown keys, out-of-range values, impossible setups.
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(ErrorKind::Config, msg) {}
};

// Numeric failure at runtime (NaN loss, gradient check above threshold).
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(ErrorKind::Numeric, msg) {}
};

// A call contract was violated (caller bug, not user input).
struct ContractError : Error {
  explicit ContractError(const std::string& msg) : Error(ErrorKind::Numeric, msg) {}
};

// Shape mismatch between tensors.
struct DimensionError : ContractError {
  explicit DimensionError(const std::string& msg) : ContractError(msg) {}
};

// Index out of range (class labels, gather rows).
struct IndexError : ContractError {
  explicit IndexError(const std::string& msg) : ContractError(msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(ErrorKind::Io, msg) {}
};

// Corrupt or unparseable on-disk data; message carries the byte offset when known.
struct FormatError : IoError {
  explicit FormatError(const std::string& msg) : IoError(msg) {}
};

// Structurally valid file with semantically invalid content.
struct ValidationError : IoError {
  explicit ValidationError(const std::string& msg) : IoError(msg) {}
};

// A single sample cannot be drawn (e.g. transcript too short). Callers in the
// training loop skip the sample; escaping to the CLI it reads as config misuse.
struct SampleError : Error {
  explicit SampleError(const std::string& msg) : Error(ErrorKind::Config, msg) {}
};

// Deterministic pseudo-random stream. All randomness in the project flows
// through this class so that runs are reproducible from a single seed; derived
// streams (per sample, per step) come from fork() and are independent of
// scheduling.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {
    // Warm the state so that small seeds do not produce correlated streams.
    next_u64();
    next_u64();
  }

  uint64_t next_u64() {
    // splitmix64: tiny, fast, and fully pinned by this code (no dependence on
    // library-defined distributions).
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling keeps it exactly unbiased.
  uint64_t index(uint64_t n) {
    if (n == 0) throw ContractError("Rng::index: n must be positive");
    uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller (pair cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  static uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  Rng fork(uint64_t stream) const { return Rng(mix(state_, stream)); }

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// round-half-to-even, used for mask budgets where rho*N may be non-integral.
inline int round_half_even(double x) {
  double f = std::floor(x);
  double d = x - f;
  if (d > 0.5) return static_cast<int>(f) + 1;
  if (d < 0.5) return static_cast<int>(f);
  long long fi = static_cast<long long>(f);
  return static_cast<int>(fi % 2 == 0 ? fi : fi + 1);
}

}  // namespace tvts2
