// avsr/rng.hpp

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

#ifndef AVSR_RNG_HPP_
#define AVSR_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <string>

namespace avsr {

// splitmix64; used both as the generator core and to derive child seeds.
inline uint64_t SplitMix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t HashCombine(uint64_t seed, uint64_t v) {
  uint64_t s = seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
  return SplitMix64(s);
}

inline uint64_t HashString(const std::string& s) {
  // FNV-1a
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic random stream with named substream derivation. Substreams
// let independent consumers (e.g. the video and audio mask samplers) draw
// without perturbing each other.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : state_(SplitMix64(seed)) {
    // one warmup scramble so nearby seeds diverge immediately
    (void)SplitMix64(state_);
  }

  RngStream Child(const std::string& name) const {
    return RngStream(HashCombine(state_, HashString(name)));
  }
  RngStream Child(const std::string& name, uint64_t index) const {
    return RngStream(HashCombine(HashCombine(state_, HashString(name)), index));
  }

  uint64_t NextU64() { return SplitMix64(state_); }

  // uniform in [0, 1)
  double Uniform() {
    return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
  }
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // uniform integer in [0, n)
  uint64_t UniformInt(uint64_t n) { return n == 0 ? 0 : NextU64() % n; }

  bool Bernoulli(double p) { return Uniform() < p; }

  // Box-Muller; self-contained so streams are stable across standard
  // library implementations.
  double Gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = Uniform();
    double u2 = Uniform();
    while (u1 <= 1e-300) u1 = Uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }
  double Gaussian(double mean, double std) { return mean + std * Gaussian(); }

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace avsr

#endif  // AVSR_RNG_HPP_
