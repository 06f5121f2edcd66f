// avsr/masking.hpp

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

// Frame-indexed span masks. Each frame index is independently drawn as a
// span start; spans clip at the sequence end and overlaps merge by union.
// One video frame owns exactly 640 audio samples, so a frame mask induces
// the audio-sample mask.

#ifndef AVSR_MASKING_HPP_
#define AVSR_MASKING_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "avsr/data.hpp"
#include "avsr/error.hpp"
#include "avsr/rng.hpp"

namespace avsr {

struct MaskSpec {
  std::vector<char> frame_mask;
  double start_prob = 0.0;
  int64_t span = 1;

  int64_t length() const { return static_cast<int64_t>(frame_mask.size()); }
  bool any() const {
    return std::any_of(frame_mask.begin(), frame_mask.end(),
                       [](char c) { return c != 0; });
  }
  std::vector<int64_t> MaskedIndices() const {
    std::vector<int64_t> out;
    for (size_t i = 0; i < frame_mask.size(); ++i)
      if (frame_mask[i]) out.push_back(static_cast<int64_t>(i));
    return out;
  }
};

inline MaskSpec SampleMask(int64_t t, double start_prob, int64_t span,
                           RngStream& rng) {
  Require(t >= 1 && span >= 1, "bad-length", "mask needs T >= 1, span >= 1");
  MaskSpec m;
  m.start_prob = start_prob;
  m.span = span;
  m.frame_mask.assign(static_cast<size_t>(t), 0);
  for (int64_t j = 0; j < t; ++j)
    if (rng.Bernoulli(start_prob)) {
      int64_t end = std::min(t, j + span);
      for (int64_t i = j; i < end; ++i) m.frame_mask[static_cast<size_t>(i)] = 1;
    }
  return m;
}

// exact expected masked fraction: position i is covered iff any of the
// min(i+1, span) candidate starts fired
inline double ExpectedCoverage(int64_t t, double start_prob, int64_t span) {
  Require(t >= 1, "bad-length", "coverage needs T >= 1");
  double total = 0.0;
  for (int64_t i = 0; i < t; ++i) {
    int64_t starts = std::min<int64_t>(i + 1, span);
    total += 1.0 - std::pow(1.0 - start_prob, static_cast<double>(starts));
  }
  return total / static_cast<double>(t);
}

// zero out masked video frames and the 640-sample block of each
// audio-masked frame; everything else is untouched
inline AVSample ApplyMask(const AVSample& sample, const MaskSpec& video_mask,
                          const MaskSpec& audio_mask) {
  CheckAlignment(sample);
  Require(video_mask.length() == sample.frames() &&
              audio_mask.length() == sample.frames(),
          "length-mismatch", "mask length must equal the frame count");
  AVSample out = sample;
  int64_t plane = sample.video.dim(1) * sample.video.dim(2);
  for (int64_t i = 0; i < sample.frames(); ++i) {
    if (video_mask.frame_mask[static_cast<size_t>(i)])
      std::fill(out.video.data.begin() + i * plane,
                out.video.data.begin() + (i + 1) * plane, 0.0);
    if (audio_mask.frame_mask[static_cast<size_t>(i)])
      std::fill(out.audio.data.begin() + i * kSamplesPerFrame,
                out.audio.data.begin() + (i + 1) * kSamplesPerFrame, 0.0);
  }
  return out;
}

}  // namespace avsr

#endif  // AVSR_MASKING_HPP_
