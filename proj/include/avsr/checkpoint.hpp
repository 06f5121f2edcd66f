// avsr/checkpoint.hpp

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

// Checkpoint container: "AVCK" magic, version, a JSON metadata blob, then
// named float64 arrays. Byte order is little endian. No timestamps, so a
// rewrite of the same state is bit identical.

#ifndef AVSR_CHECKPOINT_HPP_
#define AVSR_CHECKPOINT_HPP_

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "avsr/data.hpp"
#include "avsr/error.hpp"
#include "avsr/nets.hpp"
#include "avsr/tensor.hpp"

namespace avsr {

struct Checkpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> arrays;

  const Tensor* Find(const std::string& name) const {
    for (const auto& kv : arrays)
      if (kv.first == name) return &kv.second;
    return nullptr;
  }
};

inline std::string EncodeCheckpoint(const Checkpoint& ck) {
  std::string out = "AVCK";
  detail::PutU32(out, 1);
  std::string meta = ck.meta.dump();
  detail::PutU64(out, meta.size());
  out += meta;
  detail::PutU32(out, static_cast<uint32_t>(ck.arrays.size()));
  for (const auto& kv : ck.arrays) {
    detail::PutU32(out, static_cast<uint32_t>(kv.first.size()));
    out += kv.first;
    const Tensor& t = kv.second;
    detail::PutU32(out, static_cast<uint32_t>(t.ndim()));
    for (int64_t d : t.shape) detail::PutU64(out, static_cast<uint64_t>(d));
    for (double x : t.data) {
      uint64_t bits;
      std::memcpy(&bits, &x, 8);
      detail::PutU64(out, bits);
    }
  }
  return out;
}

inline Checkpoint DecodeCheckpoint(const std::string& bytes) {
  detail::ByteReader r{bytes};
  Require(r.Bytes(4) == "AVCK", "malformed-container",
          "not a checkpoint file");
  uint32_t version = r.U32();
  Require(version == 1, "malformed-container",
          "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  uint64_t meta_len = r.U64();
  std::string meta = r.Bytes(meta_len);
  ck.meta = nlohmann::json::parse(meta, nullptr, false);
  Require(!ck.meta.is_discarded(), "malformed-container",
          "checkpoint metadata is not valid JSON");
  uint32_t n_arrays = r.U32();
  for (uint32_t i = 0; i < n_arrays; ++i) {
    uint32_t name_len = r.U32();
    std::string name = r.Bytes(name_len);
    uint32_t ndim = r.U32();
    std::vector<int64_t> shape;
    int64_t numel = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      uint64_t dim = r.U64();
      Require(dim >= 1 && dim <= (1ull << 40), "malformed-container",
              "bad array dimension");
      shape.push_back(static_cast<int64_t>(dim));
      numel *= static_cast<int64_t>(dim);
    }
    Tensor t(shape);
    for (int64_t j = 0; j < numel; ++j) {
      uint64_t bits = r.U64();
      double x;
      std::memcpy(&x, &bits, 8);
      t[j] = x;
    }
    ck.arrays.emplace_back(std::move(name), std::move(t));
  }
  Require(r.pos == bytes.size(), "malformed-container",
          "trailing bytes after checkpoint payload");
  return ck;
}

inline void SaveCheckpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream f(path, std::ios::binary);
  Require(f.good(), "io-error", "cannot open " + path + " for writing");
  std::string bytes = EncodeCheckpoint(ck);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  Require(f.good(), "io-error", "short write to " + path);
}

inline Checkpoint LoadCheckpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  Require(f.good(), "io-error", "cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  return DecodeCheckpoint(bytes);
}

// snapshot parameters whose names start with prefix (empty takes all)
inline void StoreParams(Checkpoint& ck, const ParamStore& store,
                        const std::string& prefix = "") {
  for (const ParamPtr& p : prefix.empty() ? store.params()
                                          : store.WithPrefix(prefix))
    ck.arrays.emplace_back(p->name, p->value);
}

// copy arrays into parameters, renaming "from + rest" to "to + rest";
// every targeted parameter must exist with the stored shape
inline int64_t LoadParams(const Checkpoint& ck, ParamStore& store,
                          const std::string& from = "",
                          const std::string& to = "") {
  int64_t loaded = 0;
  for (const auto& kv : ck.arrays) {
    if (kv.first.rfind(from, 0) != 0) continue;
    std::string name = to + kv.first.substr(from.size());
    Require(store.Has(name), "config-mismatch",
            "checkpoint array " + kv.first + " has no parameter " + name);
    ParamPtr p = store.Get(name);
    Require(p->value.shape == kv.second.shape, "config-mismatch",
            "shape mismatch loading " + name + ": stored " +
                kv.second.ShapeStr() + " vs model " + p->value.ShapeStr());
    p->value = kv.second;
    ++loaded;
  }
  return loaded;
}

}  // namespace avsr

#endif  // AVSR_CHECKPOINT_HPP_
