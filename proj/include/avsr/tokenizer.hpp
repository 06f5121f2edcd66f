// avsr/tokenizer.hpp

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

// Character tokenizer with reserved ids. The inventory is the sorted set of
// characters seen in training transcripts, so construction is deterministic
// and the inventory round-trips through checkpoint metadata as a string.

#ifndef AVSR_TOKENIZER_HPP_
#define AVSR_TOKENIZER_HPP_

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "avsr/error.hpp"

namespace avsr {

class Tokenizer {
 public:
  static constexpr int64_t kBlank = 0;
  static constexpr int64_t kPad = 1;
  static constexpr int64_t kSos = 2;
  static constexpr int64_t kEos = 3;
  static constexpr int64_t kFirstChar = 4;

  static Tokenizer FromTranscripts(const std::vector<std::string>& texts) {
    std::set<char> seen;
    for (const std::string& t : texts)
      for (char c : t) seen.insert(c);
    std::string inventory(seen.begin(), seen.end());
    return FromInventory(inventory);
  }

  static Tokenizer FromInventory(const std::string& chars) {
    Tokenizer tk;
    std::string sorted = chars;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    tk.chars_ = sorted;
    for (size_t i = 0; i < sorted.size(); ++i)
      tk.to_id_[sorted[i]] = kFirstChar + static_cast<int64_t>(i);
    return tk;
  }

  int64_t vocab_size() const {
    return kFirstChar + static_cast<int64_t>(chars_.size());
  }
  const std::string& inventory() const { return chars_; }

  // encoded transcripts contain only character ids, never reserved ids
  std::vector<int64_t> Encode(const std::string& text) const {
    std::vector<int64_t> out;
    out.reserve(text.size());
    for (char c : text) {
      auto it = to_id_.find(c);
      Require(it != to_id_.end(), "parse-error",
              std::string("character '") + c + "' is not in the inventory");
      out.push_back(it->second);
    }
    return out;
  }

  // reserved ids are dropped; character ids map back to their characters
  std::string Decode(const std::vector<int64_t>& ids) const {
    std::string out;
    for (int64_t id : ids) {
      if (id < kFirstChar) continue;
      Require(id < vocab_size(), "parse-error",
              "token id " + std::to_string(id) + " outside the vocabulary");
      out.push_back(chars_[static_cast<size_t>(id - kFirstChar)]);
    }
    return out;
  }

 private:
  std::string chars_;
  std::unordered_map<char, int64_t> to_id_;
};

}  // namespace avsr

#endif  // AVSR_TOKENIZER_HPP_
