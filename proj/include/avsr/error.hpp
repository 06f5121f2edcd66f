// avsr/error.hpp

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

#ifndef AVSR_ERROR_HPP_
#define AVSR_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace avsr {

// All library failures carry a stable machine-readable kind ("io-error",
// "shape-mismatch", ...) next to the human-readable message, so callers and
// tests can dispatch on the kind without parsing text.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

[[noreturn]] inline void Fail(const std::string& kind, const std::string& msg) {
  throw Error(kind, msg);
}

inline void Require(bool ok, const std::string& kind, const std::string& msg) {
  if (!ok) Fail(kind, msg);
}

}  // namespace avsr

#endif  // AVSR_ERROR_HPP_
