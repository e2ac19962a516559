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

#include "tvts2/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace tvts2 {

TubeMask sample_tube_mask(int n, int t, double rho, Rng& rng) {
  if (n <= 0 || t <= 0) throw ConfigError("tube mask: n and t must be positive");
  if (!(rho >= 0.0) || rho >= 1.0)
    throw ConfigError("tube mask: rho must lie in [0, 1)");
  int m = round_half_even(rho * n);
  if (m >= n) throw ConfigError("tube mask: mask budget leaves no visible positions");

  // Partial Fisher-Yates: first m entries of a shuffled identity.
  std::vector<int> pool(static_cast<size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < m; ++i) {
    uint64_t j = i + rng.index(static_cast<uint64_t>(n - i));
    std::swap(pool[static_cast<size_t>(i)], pool[j]);
  }

  TubeMask mask;
  mask.n = n;
  mask.t = t;
  mask.rho = rho;
  mask.masked.assign(pool.begin(), pool.begin() + m);
  std::sort(mask.masked.begin(), mask.masked.end());
  std::vector<char> is_masked(static_cast<size_t>(n), 0);
  for (int p : mask.masked) is_masked[static_cast<size_t>(p)] = 1;
  for (int p = 0; p < n; ++p)
    if (!is_masked[static_cast<size_t>(p)]) mask.visible.push_back(p);
  return mask;
}

namespace {

ShuffledSegments cut_segments(const TranscriptTrack& track, int k, double l,
                              double l_start, std::vector<int> order) {
  ShuffledSegments out;
  out.k = k;
  out.seg_len = l;
  out.l_start = l_start;
  out.order = std::move(order);
  // chronological windows
  std::vector<std::vector<std::string>> chrono(static_cast<size_t>(k));
  for (int ki = 0; ki < k; ++ki) {
    double lo = l_start + ki * (l + 1.0);
    double hi = lo + l;
    for (const auto& w : track.words)
      if (w.time >= lo && w.time <= hi) chrono[static_cast<size_t>(ki)].push_back(w.word);
  }
  out.segments.resize(static_cast<size_t>(k));
  for (int slot = 0; slot < k; ++slot)
    out.segments[static_cast<size_t>(slot)] = chrono[static_cast<size_t>(out.order[static_cast<size_t>(slot)])];
  return out;
}

}  // namespace

ShuffledSegments sample_segments(const TranscriptTrack& track, int k, double l, Rng& rng) {
  if (k <= 0) throw ConfigError("segments: k must be positive");
  if (l < 0) throw ConfigError("segments: segment length must be non-negative");
  double span = k * (l + 1.0) - 1.0;
  if (track.duration < span) {
    std::ostringstream os;
    os << "segments: track duration " << track.duration << " shorter than required span "
       << span;
    throw SampleError(os.str());
  }
  double l_start = rng.uniform(0.0, track.duration - span);
  return cut_segments(track, k, l, l_start, shuffle_permutation(k, rng));
}

ShuffledSegments chronological_segments(const TranscriptTrack& track, int k, double l) {
  if (k <= 0) throw ConfigError("segments: k must be positive");
  if (l < 0) throw ConfigError("segments: segment length must be non-negative");
  double span = k * (l + 1.0) - 1.0;
  if (track.duration < span)
    throw SampleError("segments: track too short for chronological windows");
  std::vector<int> ident(static_cast<size_t>(k));
  std::iota(ident.begin(), ident.end(), 0);
  return cut_segments(track, k, l, 0.0, std::move(ident));
}

FramePlan sample_frames(double begin, double end, int t, Rng& rng) {
  if (t <= 0) throw ConfigError("frame plan: t must be positive");
  if (!(end > begin)) throw ConfigError("frame plan: empty interval");
  FramePlan plan;
  plan.begin = begin;
  plan.end = end;
  double step = (end - begin) / t;
  for (int i = 0; i < t; ++i)
    plan.times.push_back(begin + (i + rng.uniform()) * step);
  return plan;
}

FramePlan midpoint_frames(double begin, double end, int t) {
  if (t <= 0) throw ConfigError("frame plan: t must be positive");
  if (!(end > begin)) throw ConfigError("frame plan: empty interval");
  FramePlan plan;
  plan.begin = begin;
  plan.end = end;
  double step = (end - begin) / t;
  for (int i = 0; i < t; ++i) plan.times.push_back(begin + (i + 0.5) * step);
  return plan;
}

std::vector<int> shuffle_permutation(int k, Rng& rng) {
  if (k <= 0) throw ConfigError("permutation: k must be positive");
  std::vector<int> p(static_cast<size_t>(k));
  std::iota(p.begin(), p.end(), 0);
  for (int i = k - 1; i > 0; --i) {
    uint64_t j = rng.index(static_cast<uint64_t>(i + 1));
    std::swap(p[static_cast<size_t>(i)], p[j]);
  }
  return p;
}

void validate_track(const TranscriptTrack& track) {
  if (track.duration < 0) throw ValidationError("transcript: negative duration");
  double prev = 0.0;
  for (size_t i = 0; i < track.words.size(); ++i) {
    const auto& w = track.words[i];
    if (w.word.empty()) throw ValidationError("transcript: empty word at entry " + std::to_string(i));
    if (!(w.time >= 0.0))
      throw ValidationError("transcript: negative timestamp at entry " + std::to_string(i));
    if (w.time > track.duration)
      throw ValidationError("transcript: timestamp beyond duration at entry " + std::to_string(i));
    if (i > 0 && w.time < prev)
      throw ValidationError("transcript: timestamps decrease at entry " + std::to_string(i));
    prev = w.time;
  }
}

}  // namespace tvts2
