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

#include "tvts2/evalkit.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace tvts2 {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

void check_unit_rows(const Tensor<double>& m, const char* what) {
  for (int64_t r = 0; r < m.rows(); ++r) {
    double s = 0;
    for (int64_t c = 0; c < m.cols(); ++c) s += m.at(r, c) * m.at(r, c);
    if (std::fabs(std::sqrt(s) - 1.0) > 1e-3)
      throw ContractError(std::string(what) + ": row " + std::to_string(r) +
                          " is not unit length");
  }
}

}  // namespace

Tensor<double> similarity_matrix(const Tensor<double>& q, const Tensor<double>& g) {
  if (q.ndim() != 2 || g.ndim() != 2 || q.cols() != g.cols())
    throw DimensionError("similarity: embedding widths differ");
  if (q.rows() == 0 || g.rows() == 0) throw DimensionError("similarity: empty embedding set");
  check_unit_rows(q, "similarity(queries)");
  check_unit_rows(g, "similarity(gallery)");
  Tensor<double> sim({q.rows(), g.rows()});
  MMap(sim.data.data(), q.rows(), g.rows()).noalias() =
      CMap(q.data.data(), q.rows(), q.cols()) * CMap(g.data.data(), g.rows(), g.cols()).transpose();
  return sim;
}

RetrievalMetrics recall_and_rank(const Tensor<double>& sim, const std::vector<int>& truth) {
  if (sim.ndim() != 2) throw DimensionError("recall: similarity must be 2-D");
  int64_t q = sim.rows(), g = sim.cols();
  if (static_cast<int64_t>(truth.size()) != q)
    throw DimensionError("recall: one truth index per query");
  for (int t : truth)
    if (t < 0 || t >= g) throw IndexError("recall: truth index out of range");

  std::vector<int64_t> ranks(static_cast<size_t>(q));
  RetrievalMetrics m;
  for (int64_t i = 0; i < q; ++i) {
    int t = truth[static_cast<size_t>(i)];
    double s = sim.at(i, t);
    // rank = 1 + items strictly better + earlier-indexed ties
    int64_t rank = 1;
    for (int64_t j = 0; j < g; ++j) {
      if (j == t) continue;
      double v = sim.at(i, j);
      if (v > s || (v == s && j < t)) ++rank;
    }
    ranks[static_cast<size_t>(i)] = rank;
    if (rank <= 1) m.r1 += 1;
    if (rank <= 5) m.r5 += 1;
    if (rank <= 10) m.r10 += 1;
    m.mean_matched_sim += s;
  }
  m.r1 *= 100.0 / q;
  m.r5 *= 100.0 / q;
  m.r10 *= 100.0 / q;
  m.mean_matched_sim /= q;
  std::sort(ranks.begin(), ranks.end());
  if (q % 2 == 1)
    m.median_rank = static_cast<double>(ranks[static_cast<size_t>(q / 2)]);
  else
    m.median_rank = (static_cast<double>(ranks[static_cast<size_t>(q / 2 - 1)]) +
                     static_cast<double>(ranks[static_cast<size_t>(q / 2)])) /
                    2.0;
  return m;
}

Tensor<double> dual_softmax(const Tensor<double>& sim, double inv_temp) {
  if (sim.ndim() != 2) throw DimensionError("dual softmax: similarity must be 2-D");
  if (!(inv_temp > 0)) throw ConfigError("dual softmax: inverse temperature must be positive");
  int64_t q = sim.rows(), g = sim.cols();
  Tensor<double> rows({q, g}), cols({q, g}), out({q, g});
  for (int64_t i = 0; i < q; ++i) {
    double mx = -1e300;
    for (int64_t j = 0; j < g; ++j) mx = std::max(mx, inv_temp * sim.at(i, j));
    double z = 0;
    for (int64_t j = 0; j < g; ++j) {
      double e = std::exp(inv_temp * sim.at(i, j) - mx);
      rows.at(i, j) = e;
      z += e;
    }
    for (int64_t j = 0; j < g; ++j) rows.at(i, j) /= z;
  }
  for (int64_t j = 0; j < g; ++j) {
    double mx = -1e300;
    for (int64_t i = 0; i < q; ++i) mx = std::max(mx, inv_temp * sim.at(i, j));
    double z = 0;
    for (int64_t i = 0; i < q; ++i) {
      double e = std::exp(inv_temp * sim.at(i, j) - mx);
      cols.at(i, j) = e;
      z += e;
    }
    for (int64_t i = 0; i < q; ++i) cols.at(i, j) /= z;
  }
  for (int64_t i = 0; i < q; ++i)
    for (int64_t j = 0; j < g; ++j) out.at(i, j) = rows.at(i, j) * cols.at(i, j);
  return out;
}

std::vector<int> classify(const Tensor<double>& queries, const Tensor<double>& classes) {
  Tensor<double> sim = similarity_matrix(queries, classes);
  std::vector<int> out(static_cast<size_t>(sim.rows()));
  for (int64_t i = 0; i < sim.rows(); ++i) {
    int best = 0;
    for (int64_t j = 1; j < sim.cols(); ++j)
      if (sim.at(i, j) > sim.at(i, best)) best = static_cast<int>(j);
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

double multi_choice_accuracy(const Tensor<double>& scores, const std::vector<int>& truth) {
  if (scores.ndim() != 2) throw DimensionError("multi choice: scores must be 2-D");
  if (static_cast<int64_t>(truth.size()) != scores.rows())
    throw DimensionError("multi choice: one truth index per question");
  int64_t correct = 0;
  for (int64_t i = 0; i < scores.rows(); ++i) {
    int t = truth[static_cast<size_t>(i)];
    if (t < 0 || t >= scores.cols()) throw IndexError("multi choice: truth index out of range");
    int best = 0;
    for (int64_t j = 1; j < scores.cols(); ++j)
      if (scores.at(i, j) > scores.at(i, best)) best = static_cast<int>(j);
    if (best == t) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.rows());
}

std::vector<int> decode_ranking(const Tensor<double>& scores) {
  if (scores.ndim() != 2 || scores.rows() != scores.cols())
    throw DimensionError("decode ranking: scores must be square");
  int k = static_cast<int>(scores.rows());
  std::vector<int> best(static_cast<size_t>(k));
  if (k <= 8) {
    std::vector<int> perm(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) perm[static_cast<size_t>(i)] = i;
    double best_total = -std::numeric_limits<double>::infinity();
    do {
      double total = 0;
      for (int i = 0; i < k; ++i) total += scores.at(i, perm[static_cast<size_t>(i)]);
      if (total > best_total) {
        best_total = total;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
  }
  // Greedy: repeatedly commit the highest remaining (slot, rank) cell.
  std::vector<char> slot_done(static_cast<size_t>(k), 0), rank_done(static_cast<size_t>(k), 0);
  for (int n = 0; n < k; ++n) {
    int bi = -1, bj = -1;
    double bv = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < k; ++i) {
      if (slot_done[static_cast<size_t>(i)]) continue;
      for (int j = 0; j < k; ++j) {
        if (rank_done[static_cast<size_t>(j)]) continue;
        if (scores.at(i, j) > bv) {
          bv = scores.at(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    best[static_cast<size_t>(bi)] = bj;
    slot_done[static_cast<size_t>(bi)] = 1;
    rank_done[static_cast<size_t>(bj)] = 1;
  }
  return best;
}

ProbeResult linear_probe(const Tensor<double>& train_x, const std::vector<int>& train_y,
                         const Tensor<double>& val_x, const std::vector<int>& val_y,
                         int num_classes, int epochs, double lr) {
  if (train_x.ndim() != 2 || val_x.ndim() != 2 || train_x.cols() != val_x.cols())
    throw DimensionError("probe: feature widths differ");
  int64_t n = train_x.rows(), d = train_x.cols(), m = val_x.rows();
  if (static_cast<int64_t>(train_y.size()) != n || static_cast<int64_t>(val_y.size()) != m)
    throw DimensionError("probe: one label per row");
  if (num_classes < 2) throw ConfigError("probe: need at least two classes");
  if (epochs < 1 || !(lr > 0)) throw ConfigError("probe: bad training schedule");
  std::vector<int64_t> counts(static_cast<size_t>(num_classes), 0);
  for (int y : train_y) {
    if (y < 0 || y >= num_classes) throw IndexError("probe: label out of range");
    counts[static_cast<size_t>(y)]++;
  }
  for (int c = 0; c < num_classes; ++c)
    if (counts[static_cast<size_t>(c)] == 0)
      throw ConfigError("probe: class " + std::to_string(c) + " missing from training split");
  for (int y : val_y)
    if (y < 0 || y >= num_classes) throw IndexError("probe: validation label out of range");

  ProbeResult res;
  res.weights = Tensor<double>::zeros({d, num_classes});
  res.bias = Tensor<double>::zeros({1, num_classes});
  CMap X(train_x.data.data(), n, d);
  MMap W(res.weights.data.data(), d, num_classes);
  EMat logits(n, num_classes), probs(n, num_classes);
  for (int e = 0; e < epochs; ++e) {
    logits.noalias() = X * W;
    for (int64_t i = 0; i < n; ++i)
      for (int c = 0; c < num_classes; ++c) logits(i, c) += res.bias.at(0, c);
    for (int64_t i = 0; i < n; ++i) {
      double mx = logits.row(i).maxCoeff();
      double z = 0;
      for (int c = 0; c < num_classes; ++c) {
        probs(i, c) = std::exp(logits(i, c) - mx);
        z += probs(i, c);
      }
      for (int c = 0; c < num_classes; ++c) probs(i, c) /= z;
      probs(i, train_y[static_cast<size_t>(i)]) -= 1.0;
    }
    probs /= static_cast<double>(n);
    W.noalias() -= lr * (X.transpose() * probs);
    for (int c = 0; c < num_classes; ++c) {
      double g = 0;
      for (int64_t i = 0; i < n; ++i) g += probs(i, c);
      res.bias.at(0, c) -= lr * g;
    }
  }

  // validation accuracy; ties resolve toward the lower class index, and the
  // top-5 cut counts strictly better classes plus earlier-indexed ties
  int64_t hit1 = 0, hit5 = 0;
  for (int64_t i = 0; i < m; ++i) {
    std::vector<double> row(static_cast<size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c) {
      double v = res.bias.at(0, c);
      for (int64_t k = 0; k < d; ++k) v += val_x.at(i, k) * res.weights.at(k, c);
      row[static_cast<size_t>(c)] = v;
    }
    int t = val_y[static_cast<size_t>(i)];
    int rank = 1;
    for (int c = 0; c < num_classes; ++c) {
      if (c == t) continue;
      if (row[static_cast<size_t>(c)] > row[static_cast<size_t>(t)] ||
          (row[static_cast<size_t>(c)] == row[static_cast<size_t>(t)] && c < t))
        ++rank;
    }
    if (rank <= 1) ++hit1;
    if (rank <= 5) ++hit5;
  }
  res.top1 = m ? static_cast<double>(hit1) / static_cast<double>(m) : 0.0;
  res.top5 = m ? static_cast<double>(hit5) / static_cast<double>(m) : 0.0;
  return res;
}

}  // namespace tvts2
