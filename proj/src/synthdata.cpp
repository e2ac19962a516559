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

#include "tvts2/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace tvts2 {

namespace {

constexpr double kSpeed = 6.0;   // pixels per second
constexpr double kMargin = 4.0;  // glyph half-extent
constexpr float kTileA = 0.22f, kTileB = 0.28f;
constexpr int kTile = 4;

const std::vector<std::string> kShapes = {"square", "circle", "triangle", "star",
                                          "cross", "ring", "diamond", "arrow"};
const std::vector<std::string> kMotions = {"left", "right", "up", "down"};

// (dy, dx) per second
constexpr double kDir[4][2] = {{0, -kSpeed}, {0, kSpeed}, {-kSpeed, 0}, {kSpeed, 0}};

constexpr float kColors[8][3] = {
    {0.90f, 0.10f, 0.10f},  // square: red
    {0.10f, 0.75f, 0.10f},  // circle: green
    {0.10f, 0.30f, 0.95f},  // triangle: blue
    {0.95f, 0.85f, 0.10f},  // star: yellow
    {0.85f, 0.10f, 0.85f},  // cross: magenta
    {0.10f, 0.85f, 0.85f},  // ring: cyan
    {0.95f, 0.55f, 0.10f},  // diamond: orange
    {0.60f, 0.30f, 0.90f},  // arrow: purple
};

const char* kGlyphs[8][8] = {
    {"########", "########", "########", "########", "########", "########", "########", "########"},
    {"..####..", ".######.", "########", "########", "########", "########", ".######.", "..####.."},
    {"#.......", "##......", "###.....", "####....", "#####...", "######..", "#######.", "########"},
    {"...##...", "...##...", "..####..", "########", "########", "..####..", "...##...", "...##..."},
    {"#......#", "##....##", ".##..##.", "..####..", "..####..", ".##..##.", "##....##", "#......#"},
    {"..####..", ".#....#.", "#......#", "#......#", "#......#", "#......#", ".#....#.", "..####.."},
    {"...##...", "..####..", ".######.", "########", "########", ".######.", "..####..", "...##..."},
    {"...#....", "...##...", "...###..", "########", "########", "...###..", "...##...", "...#...."},
};

std::array<double, 2> clamp_center(std::array<double, 2> c, int h, int w) {
  c[0] = std::min(std::max(c[0], kMargin), static_cast<double>(h) - kMargin);
  c[1] = std::min(std::max(c[1], kMargin), static_cast<double>(w) - kMargin);
  return c;
}

bool motion_legal(const std::array<double, 2>& c, int m, int h, int w) {
  double ey = c[0] + kDir[m][0];
  double ex = c[1] + kDir[m][1];
  return ey >= kMargin && ey <= h - kMargin && ex >= kMargin && ex <= w - kMargin;
}

void draw_glyph(Tensor<float>& frames, int f, int shape, double cy, double cx) {
  int h = static_cast<int>(frames.shape[2]);
  int w = static_cast<int>(frames.shape[3]);
  int oy = static_cast<int>(std::lround(cy)) - 4;
  int ox = static_cast<int>(std::lround(cx)) - 4;
  size_t frame_off = static_cast<size_t>(f) * 3 * h * w;
  for (int gy = 0; gy < 8; ++gy) {
    int y = oy + gy;
    if (y < 0 || y >= h) continue;
    for (int gx = 0; gx < 8; ++gx) {
      if (kGlyphs[shape][gy][gx] != '#') continue;
      int x = ox + gx;
      if (x < 0 || x >= w) continue;
      for (int c = 0; c < 3; ++c)
        frames.data[frame_off + (static_cast<size_t>(c) * h + y) * w + x] = kColors[shape][c];
    }
  }
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw FormatError(msg);
}

uint32_t read_u32(std::istream& in, const std::string& path, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in)
    throw FormatError(path + ": truncated while reading " + what + " at offset " +
                      std::to_string(static_cast<long long>(in.tellg())));
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

const std::vector<std::string>& shape_names() { return kShapes; }
const std::vector<std::string>& motion_names() { return kMotions; }

EventScript generate_script(int duration, int h, int w, Rng& rng) {
  if (duration <= 0) throw ConfigError("script: duration must be positive");
  // With a 4px margin, a point at worst sits (h-8)/2 from the farther wall;
  // that must cover one second of travel so some direction is always legal.
  if (h < 20 || w < 20) throw ConfigError("script: canvas must be at least 20x20");
  EventScript s;
  s.h = h;
  s.w = w;
  s.duration = duration;
  std::array<double, 2> c = {h / 2.0, w / 2.0};
  s.centers.push_back(c);
  for (int sec = 0; sec < duration; ++sec) {
    ShapeMotionEvent e;
    e.shape = static_cast<int>(rng.index(kShapes.size()));
    std::vector<int> legal;
    for (int m = 0; m < 4; ++m)
      if (motion_legal(c, m, h, w)) legal.push_back(m);
    if (legal.empty()) throw ContractError("script: no legal motion from current position");
    e.motion = legal[rng.index(legal.size())];
    s.events.push_back(e);
    c[0] += kDir[e.motion][0];
    c[1] += kDir[e.motion][1];
    c = clamp_center(c, h, w);
    s.centers.push_back(c);
  }
  return s;
}

Tensor<float> render_clip(const EventScript& s) {
  if (s.fps < 1) throw ConfigError("render: fps must be at least 1");
  int f_total = s.duration * s.fps;
  Tensor<float> frames({f_total, 3, s.h, s.w});
  // background
  for (int f = 0; f < f_total; ++f) {
    size_t off = static_cast<size_t>(f) * 3 * s.h * s.w;
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        float v = ((y / kTile + x / kTile) % 2 == 0) ? kTileA : kTileB;
        for (int c = 0; c < 3; ++c)
          frames.data[off + (static_cast<size_t>(c) * s.h + y) * s.w + x] = v;
      }
  }
  for (int f = 0; f < f_total; ++f) {
    double t = static_cast<double>(f) / s.fps;
    int sec = static_cast<int>(std::floor(t));
    if (sec >= s.duration) sec = s.duration - 1;
    const auto& e = s.events[static_cast<size_t>(sec)];
    double frac = t - sec;
    std::array<double, 2> c = s.centers[static_cast<size_t>(sec)];
    c[0] += kDir[e.motion][0] * frac;
    c[1] += kDir[e.motion][1] * frac;
    c = clamp_center(c, s.h, s.w);
    draw_glyph(frames, f, e.shape, c[0], c[1]);
  }
  return frames;
}

TranscriptTrack script_transcript(const EventScript& s) {
  TranscriptTrack track;
  track.duration = s.duration;
  for (int sec = 0; sec < s.duration; ++sec) {
    const auto& e = s.events[static_cast<size_t>(sec)];
    track.words.push_back({sec + 0.25, kShapes[static_cast<size_t>(e.shape)]});
    track.words.push_back({sec + 0.75, kMotions[static_cast<size_t>(e.motion)]});
  }
  return track;
}

std::string script_caption(const EventScript& s) {
  std::string out = "a clip showing";
  for (const auto& e : s.events) {
    out += " " + kShapes[static_cast<size_t>(e.shape)];
    out += " " + kMotions[static_cast<size_t>(e.motion)];
  }
  return out;
}

Vocabulary build_vocab() {
  std::vector<std::string> words = {"<pad>", "<unk>", "<eos>"};
  words.insert(words.end(), kShapes.begin(), kShapes.end());
  words.insert(words.end(), kMotions.begin(), kMotions.end());
  const char* extra[] = {
      "a",      "clip",    "showing", "the",    "then",   "moves",  "moving",
      "over",   "across",  "board",   "scene",  "object", "video",  "shows",
      "while",  "slowly",  "quickly", "glides", "slides", "drifts", "travels",
      "toward", "against", "bright",  "small",  "frame",  "second", "first",
      "next",   "last",    "again",   "keeps",  "going",  "turns",  "stays",
      "briefly", "steady",  "colored", "shape",  "screen", "view",   "still",
      "panel",  "corner",  "center",  "edge",   "motion", "path",   "now",
  };
  for (const char* w : extra) words.push_back(w);
  if (static_cast<int>(words.size()) != 64)
    throw ContractError("vocab: expected exactly 64 entries");
  return Vocabulary(std::move(words));
}

void write_frames(const std::string& path, const Tensor<float>& frames) {
  if (frames.ndim() != 4 || frames.shape[1] != 3)
    throw DimensionError("frames: expected [F x 3 x H x W]");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("frames: cannot write " + path);
  out.write("TVF1", 4);
  for (int i = 0; i < 4; ++i) write_u32(out, static_cast<uint32_t>(frames.shape[static_cast<size_t>(i)]));
  static_assert(sizeof(float) == 4);
  out.write(reinterpret_cast<const char*>(frames.data.data()),
            static_cast<std::streamsize>(frames.data.size() * 4));
  if (!out) throw IoError("frames: write failed for " + path);
}

Tensor<float> read_frames(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("frames: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  require(static_cast<bool>(in) && std::memcmp(magic, "TVF1", 4) == 0,
          path + ": bad magic at offset 0 (expected TVF1)");
  uint32_t f = read_u32(in, path, "frame count");
  uint32_t c = read_u32(in, path, "channel count");
  uint32_t h = read_u32(in, path, "height");
  uint32_t w = read_u32(in, path, "width");
  require(c == 3, path + ": channel count must be 3 (offset 8)");
  require(f >= 1 && f <= 1000000, path + ": implausible frame count (offset 4)");
  require(h >= 1 && h <= 4096 && w >= 1 && w <= 4096, path + ": implausible frame size");
  uint64_t n = static_cast<uint64_t>(f) * c * h * w;
  Tensor<float> frames({static_cast<int64_t>(f), 3, static_cast<int64_t>(h), static_cast<int64_t>(w)});
  in.read(reinterpret_cast<char*>(frames.data.data()), static_cast<std::streamsize>(n * 4));
  if (static_cast<uint64_t>(in.gcount()) != n * 4)
    throw FormatError(path + ": truncated payload at offset " +
                      std::to_string(20 + static_cast<uint64_t>(std::max<std::streamsize>(in.gcount(), 0))));
  in.peek();
  if (!in.eof()) throw FormatError(path + ": trailing bytes after payload");
  return frames;
}

void write_transcript(const std::string& path, const TranscriptTrack& track) {
  std::ofstream out(path);
  if (!out) throw IoError("transcript: cannot write " + path);
  char buf[32];
  for (const auto& w : track.words) {
    std::snprintf(buf, sizeof buf, "%.2f", w.time);
    out << buf << "\t" << w.word << "\n";
  }
  if (!out) throw IoError("transcript: write failed for " + path);
}

TranscriptTrack read_transcript(const std::string& path, double duration) {
  std::ifstream in(path);
  if (!in) throw IoError("transcript: cannot open " + path);
  TranscriptTrack track;
  track.duration = duration;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected time<TAB>word");
    std::string ts = line.substr(0, tab);
    std::string word = line.substr(tab + 1);
    try {
      size_t used = 0;
      double t = std::stod(ts, &used);
      if (used != ts.size()) throw std::invalid_argument("trailing");
      track.words.push_back({t, word});
    } catch (const std::exception&) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": bad timestamp '" + ts + "'");
    }
  }
  validate_track(track);
  return track;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw IoError("manifest: cannot write " + path);
  for (const auto& e : entries) {
    out << e.id << "\t" << e.frames << "\t" << e.transcript;
    if (!e.caption.empty()) out << "\t" << e.caption;
    out << "\n";
  }
  if (!out) throw IoError("manifest: write failed for " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("manifest: cannot open " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    size_t start = 0;
    while (true) {
      size_t tab = line.find('\t', start);
      if (tab == std::string::npos) {
        cols.push_back(line.substr(start));
        break;
      }
      cols.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    if (cols.size() < 3 || cols.size() > 4)
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected 3 or 4 columns, got " +
                        std::to_string(cols.size()));
    ManifestEntry e;
    e.id = cols[0];
    e.frames = cols[1];
    e.transcript = cols[2];
    if (cols.size() == 4) e.caption = cols[3];
    if (e.id.empty() || e.frames.empty() || e.transcript.empty())
      throw FormatError(path + ":" + std::to_string(lineno) + ": empty column");
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw ValidationError(path + ": manifest has no entries");
  return entries;
}

LoadedSample load_sample(const std::string& manifest_dir, const ManifestEntry& entry, int fps) {
  if (fps < 1) throw ConfigError("load: fps must be at least 1");
  LoadedSample s;
  s.fps = fps;
  fs::path base(manifest_dir);
  s.frames = read_frames((base / entry.frames).string());
  s.duration = static_cast<double>(s.frames.shape[0]) / fps;
  if (!entry.caption.empty()) {
    s.caption = entry.caption;
    s.caption_only = true;
  } else {
    s.track = read_transcript((base / entry.transcript).string(), s.duration);
  }
  return s;
}

DatasetLayout generate_dataset(const std::string& dir, const DatasetOptions& opt) {
  if (opt.train_count < 1 || opt.val_count < 1)
    throw ConfigError("dataset: train and val counts must be positive");
  if (opt.caption_fraction < 0 || opt.caption_fraction > 1)
    throw ConfigError("dataset: caption fraction must lie in [0,1]");
  fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root / "clips", ec);
  if (ec) throw IoError("dataset: cannot create " + (root / "clips").string());

  DatasetLayout layout;
  layout.root = root.string();
  layout.train_manifest = (root / "train.tsv").string();
  layout.val_manifest = (root / "val.tsv").string();
  layout.vocab_file = (root / "vocab.txt").string();
  build_vocab().save(layout.vocab_file);

  Rng base(opt.seed);
  auto emit = [&](const std::string& prefix, int count, uint64_t stream) {
    std::vector<ManifestEntry> entries;
    for (int i = 0; i < count; ++i) {
      Rng rng = base.fork(Rng::mix(stream, static_cast<uint64_t>(i)));
      EventScript script = generate_script(opt.duration, opt.h, opt.w, rng);
      script.fps = opt.fps;
      char idbuf[32];
      std::snprintf(idbuf, sizeof idbuf, "%s%05d", prefix.c_str(), i);
      ManifestEntry e;
      e.id = idbuf;
      e.frames = "clips/" + e.id + ".tvf";
      e.transcript = "clips/" + e.id + ".txt";
      write_frames((root / e.frames).string(), render_clip(script));
      write_transcript((root / e.transcript).string(), script_transcript(script));
      if (rng.uniform() < opt.caption_fraction) e.caption = script_caption(script);
      entries.push_back(std::move(e));
    }
    return entries;
  };
  write_manifest(layout.train_manifest, emit("t", opt.train_count, 1));
  write_manifest(layout.val_manifest, emit("v", opt.val_count, 2));
  return layout;
}

std::vector<DecodedSecond> decode_clip(const Tensor<float>& frames, int fps) {
  if (frames.ndim() != 4 || frames.shape[1] != 3)
    throw DimensionError("decode: expected [F x 3 x H x W]");
  if (fps < 2) throw ConfigError("decode: needs at least 2 fps");
  int f_total = static_cast<int>(frames.shape[0]);
  int h = static_cast<int>(frames.shape[2]);
  int w = static_cast<int>(frames.shape[3]);
  int seconds = f_total / fps;

  auto glyph_stats = [&](int f, double& cy, double& cx, float rgb[3]) {
    double sy = 0, sx = 0;
    double sum[3] = {0, 0, 0};
    int count = 0;
    size_t off = static_cast<size_t>(f) * 3 * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float r = frames.data[off + (0 * static_cast<size_t>(h) + y) * w + x];
        float g = frames.data[off + (1 * static_cast<size_t>(h) + y) * w + x];
        float b = frames.data[off + (2 * static_cast<size_t>(h) + y) * w + x];
        float spread = std::max({r, g, b}) - std::min({r, g, b});
        if (spread > 0.2f) {
          sy += y;
          sx += x;
          sum[0] += r;
          sum[1] += g;
          sum[2] += b;
          ++count;
        }
      }
    if (count == 0) return false;
    cy = sy / count;
    cx = sx / count;
    for (int c = 0; c < 3; ++c) rgb[c] = static_cast<float>(sum[c] / count);
    return true;
  };

  std::vector<DecodedSecond> out;
  for (int sec = 0; sec < seconds; ++sec) {
    int fa = sec * fps;
    int fb = fa + fps - 1;
    double ya, xa, yb, xb;
    float ca[3], cb[3];
    DecodedSecond d;
    if (glyph_stats(fa, ya, xa, ca) && glyph_stats(fb, yb, xb, cb)) {
      double best = 1e9;
      for (int s = 0; s < 8; ++s) {
        double dist = 0;
        for (int c = 0; c < 3; ++c) {
          double dd = ca[c] - kColors[s][c];
          dist += dd * dd;
        }
        if (dist < best) {
          best = dist;
          d.shape = s;
        }
      }
      double dy = yb - ya, dx = xb - xa;
      if (std::abs(dx) >= std::abs(dy))
        d.motion = dx < 0 ? 0 : 1;
      else
        d.motion = dy < 0 ? 2 : 3;
      if (std::abs(dx) < 0.5 && std::abs(dy) < 0.5) d.motion = -1;
    }
    out.push_back(d);
  }
  return out;
}

int dominant_shape(const std::vector<std::string>& words) {
  std::array<int, 8> counts{};
  for (const auto& w : words) {
    for (size_t s = 0; s < kShapes.size(); ++s)
      if (w == kShapes[s]) {
        counts[s]++;
        break;
      }
  }
  int best = -1, best_count = 0;
  for (int s = 0; s < 8; ++s)
    if (counts[static_cast<size_t>(s)] > best_count) {
      best_count = counts[static_cast<size_t>(s)];
      best = s;
    }
  return best;
}

int dominant_shape_of_sample(const LoadedSample& s) {
  std::vector<std::string> words;
  if (s.caption_only)
    words = whitespace_split(lowercased(s.caption));
  else
    for (const auto& w : s.track.words) words.push_back(w.word);
  return dominant_shape(words);
}

}  // namespace tvts2
