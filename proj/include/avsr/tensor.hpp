// avsr/tensor.hpp

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

#ifndef AVSR_TENSOR_HPP_
#define AVSR_TENSOR_HPP_

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "avsr/error.hpp"
#include "avsr/rng.hpp"

namespace avsr {

// Dense row-major tensor of doubles. All training math runs in 64-bit; the
// sizes in play are small enough that precision wins over speed.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(NumelOf(shape)), 0.0);
  }
  Tensor(std::vector<int64_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    Require(static_cast<int64_t>(data.size()) == NumelOf(shape),
            "shape-mismatch", "tensor data does not match shape");
  }

  static int64_t NumelOf(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
  }

  static Tensor Zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
  static Tensor Full(std::vector<int64_t> s, double v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor FromVector(const std::vector<double>& v) {
    return Tensor({static_cast<int64_t>(v.size())}, v);
  }
  static Tensor Gaussian(std::vector<int64_t> s, RngStream& rng,
                         double mean = 0.0, double std = 1.0) {
    Tensor t(std::move(s));
    for (double& x : t.data) x = rng.Gaussian(mean, std);
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

  double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // 2-D accessors ([rows, cols]); used pervasively for [T x D] feature maps.
  int64_t rows() const { return shape[0]; }
  int64_t cols() const { return shape[1]; }
  double& at(int64_t r, int64_t c) {
    return data[static_cast<size_t>(r * shape[1] + c)];
  }
  double at(int64_t r, int64_t c) const {
    return data[static_cast<size_t>(r * shape[1] + c)];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string ShapeStr() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i)
      os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
  }
};

inline void CheckSameShape(const Tensor& a, const Tensor& b,
                           const std::string& who) {
  Require(a.same_shape(b), "shape-mismatch",
          who + ": " + a.ShapeStr() + " vs " + b.ShapeStr());
}

// y += x
inline void AccumulateInto(Tensor& y, const Tensor& x) {
  CheckSameShape(y, x, "accumulate");
  for (int64_t i = 0; i < x.numel(); ++i) y[i] += x[i];
}

inline double DotAll(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

inline double L2Norm(const Tensor& a) { return std::sqrt(DotAll(a, a)); }

}  // namespace avsr

#endif  // AVSR_TENSOR_HPP_
