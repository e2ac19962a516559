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
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "tvts2/common.hpp"

namespace tvts2 {

// Dense row-major tensor. Most graph ops treat values as 2-D matrices; frames
// use 4-D shapes. Kept deliberately simple: shape + flat storage.
template <typename T>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<T> data;

  Tensor() = default;

  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), T(0));
  }

  Tensor(std::vector<int64_t> s, std::vector<T> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape))
      throw DimensionError("tensor: data size does not match shape");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d < 0) throw DimensionError("tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<int64_t> s, T v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static Tensor row(std::initializer_list<T> vals) {
    Tensor t;
    t.shape = {1, static_cast<int64_t>(vals.size())};
    t.data.assign(vals.begin(), vals.end());
    return t;
  }

  static Tensor matrix(int64_t r, int64_t c, std::initializer_list<T> vals) {
    Tensor t;
    t.shape = {r, c};
    t.data.assign(vals.begin(), vals.end());
    if (static_cast<int64_t>(t.data.size()) != r * c)
      throw DimensionError("tensor: initializer size mismatch");
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t ndim() const { return static_cast<int64_t>(shape.size()); }

  int64_t rows() const {
    if (shape.size() != 2) throw DimensionError("tensor: rows() needs 2-D");
    return shape[0];
  }
  int64_t cols() const {
    if (shape.size() != 2) throw DimensionError("tensor: cols() needs 2-D");
    return shape[1];
  }

  T& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& at(int64_t i) const { return data[static_cast<size_t>(i)]; }

  T& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
  const T& at(int64_t i, int64_t j) const {
    return data[static_cast<size_t>(i * shape[1] + j)];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) os << "x";
      os << shape[i];
    }
    os << "]";
    return os.str();
  }
};

}  // namespace tvts2
