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

#include <array>
#include <string>
#include <vector>

#include "tvts2/common.hpp"
#include "tvts2/sampling.hpp"
#include "tvts2/tensor.hpp"
#include "tvts2/vocab.hpp"

namespace tvts2 {

// Synthetic clips: one colored glyph gliding over a checkerboard. Every
// second carries one event (shape, motion); the transcript narrates it with
// the shape word at s+0.25 and the motion word at s+0.75.

const std::vector<std::string>& shape_names();   // 8 entries
const std::vector<std::string>& motion_names();  // left right up down

struct ShapeMotionEvent {
  int shape = 0;
  int motion = 0;
};

struct EventScript {
  int h = 32, w = 32, fps = 2, duration = 0;
  std::vector<ShapeMotionEvent> events;            // one per second
  std::vector<std::array<double, 2>> centers;      // (cy,cx) at each second start
};

// Draws one event per second. Motions are drawn only among directions whose
// full-second travel stays inside the canvas margin, so narrated motion is
// always visible in pixels.
EventScript generate_script(int duration, int h, int w, Rng& rng);

// Frames [F x 3 x H x W], F = duration*fps, values in [0,1].
Tensor<float> render_clip(const EventScript& script);

TranscriptTrack script_transcript(const EventScript& script);
std::string script_caption(const EventScript& script);

// The fixed 64-word vocabulary used by generated datasets.
Vocabulary build_vocab();

// ---- file formats ---------------------------------------------------------

// Frames file: magic "TVF1", four u32 LE (frames, channels, height, width),
// then f32 LE samples in [frame][channel][row][col] order.
void write_frames(const std::string& path, const Tensor<float>& frames);
Tensor<float> read_frames(const std::string& path);

// Transcript file: one "time<TAB>word" line per word, times with 2 decimals.
void write_transcript(const std::string& path, const TranscriptTrack& track);
// duration is not stored in the file; the caller supplies it (frames / fps).
TranscriptTrack read_transcript(const std::string& path, double duration);

struct ManifestEntry {
  std::string id;
  std::string frames;      // path relative to the manifest
  std::string transcript;  // path relative to the manifest
  std::string caption;     // empty unless this is a caption sample
};

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

struct LoadedSample {
  Tensor<float> frames;  // [F x 3 x H x W]
  int fps = 2;
  double duration = 0.0;
  TranscriptTrack track;  // empty for caption samples
  std::string caption;    // empty for transcript samples
  bool caption_only = false;
};

LoadedSample load_sample(const std::string& manifest_dir, const ManifestEntry& entry, int fps);

// ---- dataset generation -----------------------------------------------------

struct DatasetLayout {
  std::string root;
  std::string train_manifest;  // root/train.tsv
  std::string val_manifest;    // root/val.tsv
  std::string vocab_file;      // root/vocab.txt
};

struct DatasetOptions {
  int train_count = 2000;
  int val_count = 64;
  int duration = 24;  // seconds per clip
  int fps = 2;
  int h = 32, w = 32;
  double caption_fraction = 0.1;
  uint64_t seed = 42;
};

DatasetLayout generate_dataset(const std::string& dir, const DatasetOptions& opt);

// ---- pixel-level decoding (used as an independent oracle in tests) ---------

struct DecodedSecond {
  int shape = -1;
  int motion = -1;
};

// Recovers each second's event purely from pixels: glyph pixels are located
// by channel spread, the shape read off mean color, the motion from the
// centroid displacement between the first and last frame of the second.
std::vector<DecodedSecond> decode_clip(const Tensor<float>& frames, int fps);

// Most frequent shape word; ties resolve to the lowest shape id. Returns -1
// if no shape word occurs.
int dominant_shape(const std::vector<std::string>& words);
int dominant_shape_of_sample(const LoadedSample& s);

}  // namespace tvts2
