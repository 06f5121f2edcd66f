// avsr/data.hpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Paired audio-visual samples: synthetic correlated generation, a binary
// dataset container with a JSON manifest, long-utterance splitting,
// crop/flip augmentation, and frame-budget batching.

#ifndef AVSR_DATA_HPP_
#define AVSR_DATA_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "avsr/config.hpp"
#include "avsr/error.hpp"
#include "avsr/rng.hpp"
#include "avsr/tensor.hpp"
#include "avsr/wer.hpp"

namespace avsr {

constexpr int64_t kSamplesPerFrame = 640;
constexpr int64_t kFps = 25;
constexpr int64_t kFullHW = 96;
constexpr int64_t kCropHW = 88;
constexpr int64_t kMaxSplitFrames = 600;  // 24 s at 25 fps

// video: [T_v, H, W] grayscale in [0,1]; audio: [T_a] mono in [-1,1]
struct AVSample {
  Tensor video;
  Tensor audio;
  std::string transcript;
  std::string sample_id;

  int64_t frames() const { return video.dim(0); }
};

inline void CheckAlignment(const AVSample& s) {
  Require(s.video.ndim() == 3, "shape-mismatch", "video must be [T,H,W]");
  Require(s.audio.ndim() == 1 &&
              s.audio.numel() == kSamplesPerFrame * s.video.dim(0),
          "length-mismatch",
          "audio length must be exactly 640 samples per video frame");
}

// ---------------------------------------------------------------------------
// synthetic generation

// latent token of frame i at the given rates
inline int64_t TokenOfFrame(int64_t i, double tokens_per_second) {
  return static_cast<int64_t>(
      std::floor(static_cast<double>(i) * tokens_per_second /
                 static_cast<double>(kFps)));
}

inline char TokenChar(int64_t token) {
  return static_cast<char>('a' + token);
}

// distinct deterministic 96x96 pattern per token: oblique sinusoid with
// token-indexed frequency pair and golden-ratio phase
inline double VideoTemplateAt(int64_t token, int64_t y, int64_t x) {
  double fx = 1.0 + static_cast<double>(token % 5);
  double fy = 1.0 + static_cast<double>(token / 5);
  double phase = 6.28318530717958648 *
                 std::fmod(0.6180339887498949 * static_cast<double>(token + 1),
                           1.0);
  double arg = 6.28318530717958648 *
                   (fx * static_cast<double>(x) + fy * static_cast<double>(y)) /
                   static_cast<double>(kFullHW) +
               phase;
  return 0.5 + 0.5 * std::sin(arg);
}

// per-token sinusoid mixture; s is the absolute sample index so segments of
// the same token are phase-locked
inline double AudioTemplateAt(int64_t token, int64_t s) {
  double t = static_cast<double>(s) / 16000.0;
  double f1 = 200.0 + 60.0 * static_cast<double>(token);
  double f2 = 350.0 + 85.0 * static_cast<double>(token);
  return 0.5 * std::sin(6.28318530717958648 * f1 * t) +
         0.3 * std::sin(6.28318530717958648 * f2 * t + 1.0);
}

inline AVSample GenerateSample(const SyntheticSpec& spec, int64_t index) {
  Require(spec.vocab_size >= 2 && spec.vocab_size <= 26, "parse-error",
          "synthetic vocab_size must lie in [2,26]");
  RngStream root(static_cast<uint64_t>(spec.seed));
  RngStream rng = root.Child("sample", static_cast<uint64_t>(index));
  double dur = rng.Uniform(spec.min_duration, spec.max_duration);
  int64_t t_v = std::max<int64_t>(1, std::llround(dur * kFps));
  int64_t n_tokens = TokenOfFrame(t_v - 1, spec.tokens_per_second) + 1;

  std::vector<int64_t> tokens(static_cast<size_t>(n_tokens));
  RngStream tok_rng = rng.Child("tokens");
  for (int64_t& t : tokens) t = tok_rng.UniformInt(spec.vocab_size);

  Tensor video({t_v, kFullHW, kFullHW});
  RngStream vnoise = rng.Child("video-noise");
  for (int64_t i = 0; i < t_v; ++i) {
    int64_t tok = tokens[static_cast<size_t>(TokenOfFrame(i, spec.tokens_per_second))];
    for (int64_t y = 0; y < kFullHW; ++y)
      for (int64_t x = 0; x < kFullHW; ++x) {
        double v = VideoTemplateAt(tok, y, x);
        if (spec.video_noise_std > 0.0)
          v += vnoise.Gaussian(0.0, spec.video_noise_std);
        video[(i * kFullHW + y) * kFullHW + x] = std::clamp(v, 0.0, 1.0);
      }
  }

  int64_t t_a = t_v * kSamplesPerFrame;
  Tensor audio({t_a});
  RngStream anoise = rng.Child("audio-noise");
  for (int64_t s = 0; s < t_a; ++s) {
    int64_t tok = tokens[static_cast<size_t>(
        TokenOfFrame(s / kSamplesPerFrame, spec.tokens_per_second))];
    double a = AudioTemplateAt(tok, s);
    if (spec.audio_noise_std > 0.0)
      a += anoise.Gaussian(0.0, spec.audio_noise_std);
    audio[s] = std::clamp(a, -1.0, 1.0);
  }

  std::string transcript;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) transcript.push_back(' ');
    transcript.push_back(TokenChar(tokens[i]));
  }
  char idbuf[32];
  std::snprintf(idbuf, sizeof(idbuf), "s%06lld",
                static_cast<long long>(index));
  return AVSample{std::move(video), std::move(audio), std::move(transcript),
                  idbuf};
}

// ---------------------------------------------------------------------------
// splitting

// cuts at exact frame boundaries; transcript words are assigned to pieces by
// their nominal start frame under a uniform word rate, which matches the
// synthetic generator's token grid
inline std::vector<AVSample> SplitLong(const AVSample& sample,
                                       double max_seconds = 24.0) {
  CheckAlignment(sample);
  int64_t max_frames = static_cast<int64_t>(max_seconds * kFps);
  Require(max_frames >= 1, "bad-length", "split window below one frame");
  int64_t t_v = sample.frames();
  if (t_v <= max_frames) return {sample};

  std::vector<std::string> words = SplitWords(sample.transcript);
  int64_t h = sample.video.dim(1), w = sample.video.dim(2);
  std::vector<AVSample> out;
  size_t word_idx = 0;
  int part = 0;
  for (int64_t a = 0; a < t_v; a += max_frames, ++part) {
    int64_t b = std::min(t_v, a + max_frames);
    int64_t n = b - a;
    Tensor video({n, h, w});
    std::copy(sample.video.data.begin() + a * h * w,
              sample.video.data.begin() + b * h * w, video.data.begin());
    Tensor audio({n * kSamplesPerFrame});
    std::copy(sample.audio.data.begin() + a * kSamplesPerFrame,
              sample.audio.data.begin() + b * kSamplesPerFrame,
              audio.data.begin());
    size_t word_end = word_idx;
    while (word_end < words.size() &&
           static_cast<int64_t>(word_end) * t_v <
               b * static_cast<int64_t>(words.size()))
      ++word_end;
    AVSample piece;
    piece.video = std::move(video);
    piece.audio = std::move(audio);
    piece.transcript = JoinWords(words, word_idx, word_end);
    piece.sample_id = sample.sample_id + "_p" + std::to_string(part);
    out.push_back(std::move(piece));
    word_idx = word_end;
  }
  return out;
}

// ---------------------------------------------------------------------------
// augmentation

// deterministic core: optional horizontal flip after a fixed-offset 88x88
// crop shared by all frames
inline Tensor AugmentVideoWith(const Tensor& frames, bool flip, int64_t dy,
                               int64_t dx) {
  Require(frames.ndim() == 3 && frames.dim(1) == kFullHW &&
              frames.dim(2) == kFullHW,
          "wrong-input-size", "augmentation expects 96x96 frames");
  Require(dy >= 0 && dx >= 0 && dy <= kFullHW - kCropHW &&
              dx <= kFullHW - kCropHW,
          "wrong-input-size", "crop offset out of range");
  int64_t t_v = frames.dim(0);
  Tensor out({t_v, kCropHW, kCropHW});
  for (int64_t i = 0; i < t_v; ++i)
    for (int64_t y = 0; y < kCropHW; ++y)
      for (int64_t x = 0; x < kCropHW; ++x) {
        int64_t sx = flip ? (kCropHW - 1 - x) : x;  // flip the cropped image
        out[(i * kCropHW + y) * kCropHW + x] =
            frames[(i * kFullHW + (y + dy)) * kFullHW + (dx + sx)];
      }
  return out;
}

inline Tensor AugmentVideo(const Tensor& frames, RngStream& rng) {
  bool flip = rng.Bernoulli(0.5);
  int64_t dy = rng.UniformInt(kFullHW - kCropHW + 1);
  int64_t dx = rng.UniformInt(kFullHW - kCropHW + 1);
  return AugmentVideoWith(frames, flip, dy, dx);
}

// ---------------------------------------------------------------------------
// batching

struct Batch {
  Tensor video;                        // [N, Tmax, H, W], zero padded
  Tensor audio;                        // [N, 640*Tmax], zero padded
  std::vector<int64_t> frame_lengths;  // per-sample T_v
  std::vector<std::string> transcripts;
  std::vector<std::string> sample_ids;
  int64_t total_frames = 0;

  int64_t size() const { return static_cast<int64_t>(frame_lengths.size()); }

  Tensor VideoOf(int64_t n) const {
    int64_t t = frame_lengths[static_cast<size_t>(n)];
    int64_t h = video.dim(2), w = video.dim(3);
    Tensor out({t, h, w});
    const double* src = &video.data[static_cast<size_t>(
        n * video.dim(1) * h * w)];
    std::copy(src, src + t * h * w, out.data.begin());
    return out;
  }

  Tensor AudioOf(int64_t n) const {
    int64_t t = frame_lengths[static_cast<size_t>(n)] * kSamplesPerFrame;
    Tensor out({t});
    const double* src = &audio.data[static_cast<size_t>(n * audio.dim(1))];
    std::copy(src, src + t, out.data.begin());
    return out;
  }
};

inline Batch PackBatch(const std::vector<AVSample>& samples) {
  Require(!samples.empty(), "bad-length", "cannot pack an empty batch");
  int64_t h = samples[0].video.dim(1), w = samples[0].video.dim(2);
  int64_t tmax = 0;
  for (const AVSample& s : samples) {
    Require(s.video.dim(1) == h && s.video.dim(2) == w, "shape-mismatch",
            "mixed spatial sizes in one batch");
    tmax = std::max(tmax, s.frames());
  }
  Batch b;
  int64_t n = static_cast<int64_t>(samples.size());
  b.video = Tensor::Zeros({n, tmax, h, w});
  b.audio = Tensor::Zeros({n, tmax * kSamplesPerFrame});
  for (int64_t i = 0; i < n; ++i) {
    const AVSample& s = samples[static_cast<size_t>(i)];
    CheckAlignment(s);
    std::copy(s.video.data.begin(), s.video.data.end(),
              b.video.data.begin() + i * tmax * h * w);
    std::copy(s.audio.data.begin(), s.audio.data.end(),
              b.audio.data.begin() + i * tmax * kSamplesPerFrame);
    b.frame_lengths.push_back(s.frames());
    b.transcripts.push_back(s.transcript);
    b.sample_ids.push_back(s.sample_id);
    b.total_frames += s.frames();
  }
  return b;
}

// greedy packing in the given order
inline std::vector<Batch> MakeBatches(const std::vector<AVSample>& samples,
                                      int64_t max_frames) {
  std::vector<Batch> out;
  std::vector<AVSample> cur;
  int64_t cur_frames = 0;
  for (const AVSample& s : samples) {
    Require(s.frames() <= max_frames, "sample-exceeds-budget",
            "sample " + s.sample_id + " has " + std::to_string(s.frames()) +
                " frames, budget " + std::to_string(max_frames));
    if (cur_frames + s.frames() > max_frames) {
      out.push_back(PackBatch(cur));
      cur.clear();
      cur_frames = 0;
    }
    cur.push_back(s);
    cur_frames += s.frames();
  }
  if (!cur.empty()) out.push_back(PackBatch(cur));
  return out;
}

// ---------------------------------------------------------------------------
// dataset container: <dir>/manifest.json plus one .avs record per sample.
// record layout (little endian): magic "AVSR", u32 version, u32 T_v, u32 H,
// u32 W, u64 T_a, u32 id length + bytes, u32 transcript length + bytes,
// T_v*H*W u8 video planes, T_a i16 audio samples.

namespace detail {

inline void PutU32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void PutU64(std::string& s, uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct ByteReader {
  const std::string& buf;
  size_t pos = 0;

  void Need(size_t n) {
    Require(pos + n <= buf.size(), "malformed-container",
            "record truncated");
  }
  uint32_t U32() {
    Need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t U64() {
    Need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    pos += 8;
    return v;
  }
  std::string Bytes(size_t n) {
    Need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace detail

inline std::string EncodeSampleRecord(const AVSample& s) {
  CheckAlignment(s);
  std::string out;
  out += "AVSR";
  detail::PutU32(out, 1);
  detail::PutU32(out, static_cast<uint32_t>(s.video.dim(0)));
  detail::PutU32(out, static_cast<uint32_t>(s.video.dim(1)));
  detail::PutU32(out, static_cast<uint32_t>(s.video.dim(2)));
  detail::PutU64(out, static_cast<uint64_t>(s.audio.numel()));
  detail::PutU32(out, static_cast<uint32_t>(s.sample_id.size()));
  out += s.sample_id;
  detail::PutU32(out, static_cast<uint32_t>(s.transcript.size()));
  out += s.transcript;
  for (double v : s.video.data)
    out.push_back(static_cast<char>(
        static_cast<unsigned char>(std::llround(std::clamp(v, 0.0, 1.0) * 255.0))));
  for (double a : s.audio.data) {
    int64_t q = std::llround(std::clamp(a, -1.0, 1.0) * 32767.0);
    out.push_back(static_cast<char>(q & 0xff));
    out.push_back(static_cast<char>((q >> 8) & 0xff));
  }
  return out;
}

inline AVSample DecodeSampleRecord(const std::string& buf) {
  detail::ByteReader r{buf};
  Require(r.Bytes(4) == "AVSR", "malformed-container", "bad record magic");
  Require(r.U32() == 1, "malformed-container", "unsupported record version");
  int64_t t_v = r.U32();
  int64_t h = r.U32();
  int64_t w = r.U32();
  int64_t t_a = static_cast<int64_t>(r.U64());
  Require(t_a == t_v * kSamplesPerFrame, "malformed-container",
          "audio length does not align to 640 samples per frame");
  AVSample s;
  s.sample_id = r.Bytes(r.U32());
  s.transcript = r.Bytes(r.U32());
  s.video = Tensor({t_v, h, w});
  std::string planes = r.Bytes(static_cast<size_t>(t_v * h * w));
  for (int64_t i = 0; i < t_v * h * w; ++i)
    s.video[i] =
        static_cast<double>(static_cast<unsigned char>(planes[static_cast<size_t>(i)])) /
        255.0;
  s.audio = Tensor({t_a});
  std::string pcm = r.Bytes(static_cast<size_t>(t_a) * 2);
  for (int64_t i = 0; i < t_a; ++i) {
    uint16_t lo = static_cast<unsigned char>(pcm[static_cast<size_t>(2 * i)]);
    uint16_t hi = static_cast<unsigned char>(pcm[static_cast<size_t>(2 * i + 1)]);
    int16_t q = static_cast<int16_t>(lo | (hi << 8));
    s.audio[i] = static_cast<double>(q) / 32767.0;
  }
  Require(r.pos == buf.size(), "malformed-container",
          "trailing bytes after sample record");
  return s;
}

inline void WriteDataset(const std::string& dir,
                         const std::vector<AVSample>& samples,
                         const std::map<std::string, std::string>& provenance =
                             {}) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  Require(!ec, "io-error", "cannot create dataset directory " + dir);
  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["samples"] = nlohmann::json::array();
  for (const AVSample& s : samples) {
    std::string fname = s.sample_id + ".avs";
    std::string record = EncodeSampleRecord(s);
    std::ofstream f(std::filesystem::path(dir) / fname, std::ios::binary);
    Require(f.good(), "io-error", "cannot open " + fname + " for writing");
    f.write(record.data(), static_cast<std::streamsize>(record.size()));
    Require(f.good(), "io-error", "short write on " + fname);
    manifest["samples"].push_back({{"id", s.sample_id},
                                   {"frames", s.frames()},
                                   {"transcript", s.transcript},
                                   {"file", fname}});
  }
  if (!provenance.empty()) manifest["provenance"] = provenance;
  std::ofstream mf(std::filesystem::path(dir) / "manifest.json");
  Require(mf.good(), "io-error", "cannot write manifest in " + dir);
  mf << manifest.dump(2) << "\n";
  Require(mf.good(), "io-error", "short write on manifest");
}

inline std::vector<AVSample> ReadDataset(const std::string& dir) {
  std::ifstream mf(std::filesystem::path(dir) / "manifest.json");
  Require(mf.good(), "io-error", "cannot open manifest in " + dir);
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    Fail("malformed-container", std::string("manifest is not valid JSON: ") +
                                    e.what());
  }
  Require(manifest.is_object() && manifest.value("version", 0) == 1 &&
              manifest.contains("samples") && manifest["samples"].is_array(),
          "malformed-container", "manifest missing version/samples");
  std::vector<AVSample> out;
  for (const auto& entry : manifest["samples"]) {
    Require(entry.is_object() && entry.contains("file"),
            "malformed-container", "manifest entry missing file");
    std::ifstream f(std::filesystem::path(dir) /
                        entry["file"].get<std::string>(),
                    std::ios::binary);
    Require(f.good(), "io-error",
            "cannot open sample file " + entry["file"].get<std::string>());
    std::string buf((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
    AVSample s = DecodeSampleRecord(buf);
    Require(!entry.contains("frames") ||
                entry["frames"].get<int64_t>() == s.frames(),
            "malformed-container", "manifest frame count mismatch");
    out.push_back(std::move(s));
  }
  return out;
}

inline std::map<std::string, std::string> ReadDatasetProvenance(
    const std::string& dir) {
  std::ifstream mf(std::filesystem::path(dir) / "manifest.json");
  Require(mf.good(), "io-error", "cannot open manifest in " + dir);
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception&) {
    Fail("malformed-container", "manifest is not valid JSON");
  }
  std::map<std::string, std::string> out;
  if (manifest.contains("provenance"))
    for (const auto& [k, v] : manifest["provenance"].items())
      out[k] = v.get<std::string>();
  return out;
}

}  // namespace avsr

#endif  // AVSR_DATA_HPP_
