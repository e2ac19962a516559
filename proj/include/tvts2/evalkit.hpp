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

#include <vector>

#include "tvts2/common.hpp"
#include "tvts2/tensor.hpp"

namespace tvts2 {

// Retrieval and probing metrics. Everything here runs in double precision on
// plain matrices; no gradients are involved.

// Cosine similarity matrix [Q x G] between two sets of embeddings whose rows
// must already be unit length (checked to 1e-3).
Tensor<double> similarity_matrix(const Tensor<double>& queries, const Tensor<double>& gallery);

struct RetrievalMetrics {
  double r1 = 0, r5 = 0, r10 = 0;  // recall percentages in [0, 100]
  double median_rank = 0;           // 1-based; average of middle two when even
  double mean_matched_sim = 0;      // mean similarity of the true pairs
};

// Ranks use a deterministic tie rule: an equal-scoring gallery item with a
// lower index outranks the match.
RetrievalMetrics recall_and_rank(const Tensor<double>& sim, const std::vector<int>& truth);

// Dual softmax rescoring: elementwise product of the row-wise and
// column-wise softmax of inv_temp * sim.
Tensor<double> dual_softmax(const Tensor<double>& sim, double inv_temp);

// Zero-shot classification: per query row, index of the best class embedding.
std::vector<int> classify(const Tensor<double>& queries, const Tensor<double>& classes);

// Multiple choice: one row of candidates per question; returns accuracy in
// [0,1]. truth[i] is the correct candidate column for question i.
double multi_choice_accuracy(const Tensor<double>& scores, const std::vector<int>& truth);

// Ordering decode: scores[i][j] rates slot i taking rank j. Returns the
// permutation (rank per slot) with the highest total score — exhaustive for
// K <= 8, greedy best-first assignment beyond that.
std::vector<int> decode_ranking(const Tensor<double>& scores);

struct ProbeResult {
  double top1 = 0, top5 = 0;  // accuracies in [0,1]
  Tensor<double> weights;     // [D x C]
  Tensor<double> bias;        // [1 x C]
};

// Linear probe on frozen features: multinomial logistic regression trained
// full-batch (plain gradient descent). Every class must appear in the
// training split.
ProbeResult linear_probe(const Tensor<double>& train_x, const std::vector<int>& train_y,
                         const Tensor<double>& val_x, const std::vector<int>& val_y,
                         int num_classes, int epochs = 100, double lr = 0.1);

}  // namespace tvts2
