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

#include <string>
#include <vector>

#include "tvts2/common.hpp"

namespace tvts2 {

// Tube mask: the same spatial positions are hidden in every frame, so a
// masked position forms a tube through time.
struct TubeMask {
  int n = 0;          // spatial positions per frame
  int t = 0;          // frames
  double rho = 0.0;   // requested masking ratio
  std::vector<int> masked;   // sorted masked positions
  std::vector<int> visible;  // sorted complement

  int visible_per_frame() const { return static_cast<int>(visible.size()); }
  int visible_total() const { return t * visible_per_frame(); }
};

// Draws round-half-even(rho*n) masked positions uniformly without
// replacement. rho outside [0,1) or a fully-masked frame is a config error.
TubeMask sample_tube_mask(int n, int t, double rho, Rng& rng);

struct TimedWord {
  double time = 0.0;
  std::string word;
};

// A transcript: words with non-decreasing timestamps plus a total duration.
struct TranscriptTrack {
  std::vector<TimedWord> words;
  double duration = 0.0;
};

// K contiguous one-second-separated windows of length l, shuffled.
// segments[i] holds the words of the window whose chronological rank is
// order[i]; window k (0-based) covers [l_start + k*(l+1), l_start + k*(l+1) + l].
struct ShuffledSegments {
  int k = 0;
  double seg_len = 0.0;
  double l_start = 0.0;
  std::vector<std::vector<std::string>> segments;  // in shuffled slot order
  std::vector<int> order;                          // chronological rank per slot

  double interval_begin() const { return l_start; }
  double interval_end() const {
    return l_start + (k - 1) * (seg_len + 1.0) + seg_len;
  }
};

// Draws l_start uniform in [0, duration - (K(l+1) - 1)] and cuts K closed
// windows. Words on a window boundary belong to every window containing them.
// duration < K(l+1) - 1 is a sample error.
ShuffledSegments sample_segments(const TranscriptTrack& track, int k, double l, Rng& rng);

// As above but with l_start = 0 and chronological order (evaluation path).
ShuffledSegments chronological_segments(const TranscriptTrack& track, int k, double l);

struct FramePlan {
  double begin = 0.0, end = 0.0;
  std::vector<double> times;  // strictly increasing
};

// Segment-based frame sampling: [begin, end] is split into t equal
// sub-intervals and one time is drawn uniformly inside each.
FramePlan sample_frames(double begin, double end, int t, Rng& rng);

// Deterministic variant taking each sub-interval midpoint.
FramePlan midpoint_frames(double begin, double end, int t);

// Uniform random permutation of 0..k-1 (Fisher-Yates).
std::vector<int> shuffle_permutation(int k, Rng& rng);

// Validates a parsed transcript: non-negative non-decreasing times within
// [0, duration]. Throws ValidationError.
void validate_track(const TranscriptTrack& track);

}  // namespace tvts2
