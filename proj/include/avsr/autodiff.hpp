// avsr/autodiff.hpp

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

// Reverse-mode automatic differentiation over Tensor. A forward pass builds
// a DAG of Nodes; Backward() walks it in reverse topological order. Nodes
// whose inputs carry no gradient requirement stay unlinked, so teacher-side
// forwards build values only.

#ifndef AVSR_AUTODIFF_HPP_
#define AVSR_AUTODIFF_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "avsr/tensor.hpp"

namespace avsr {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first use during backward
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& EnsureGrad() {
    if (grad.numel() == 0) grad = Tensor::Zeros(value.shape);
    return grad;
  }
};

// Trainable parameter. Gradient accumulates across backward passes until
// explicitly cleared by the optimizer.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor::Zeros(value.shape);
  }
  void ZeroGrad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};
using ParamPtr = std::shared_ptr<Param>;

inline Var MakeConst(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return n;
}

// Leaf that keeps its gradient on the node itself (used by tests).
inline Var MakeLeaf(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  return n;
}

inline Var FromParam(const ParamPtr& p) {
  auto n = std::make_shared<Node>();
  n->value = p->value;
  n->requires_grad = true;
  n->backward_fn = [p](Node& self) { AccumulateInto(p->grad, self.grad); };
  return n;
}

inline Var Detach(const Var& v) { return MakeConst(v->value); }

inline Var NewOp(Tensor value, std::vector<Var> parents,
                 std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool rg = false;
  for (const Var& p : parents) rg = rg || p->requires_grad;
  if (rg) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(fn);
  }
  return n;
}

inline void Backward(const Var& root) {
  Require(root->value.numel() == 1, "shape-mismatch",
          "backward expects a scalar root");
  if (!root->requires_grad) return;
  // reverse post-order DFS over parent edges = consumers before producers
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* n;
    size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({root.get(), 0});
  visited.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Node* c = f.n->parents[f.next++].get();
      if (c->requires_grad && !visited.count(c)) {
        visited.insert(c);
        stack.push_back({c, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }
  root->grad = Tensor::Full(root->value.shape, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    n->EnsureGrad();
    if (n->backward_fn) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise

inline Var Add(const Var& a, const Var& b) {
  CheckSameShape(a->value, b->value, "add");
  Tensor y = a->value;
  for (int64_t i = 0; i < y.numel(); ++i) y[i] += b->value[i];
  return NewOp(std::move(y), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad)
      AccumulateInto(self.parents[0]->EnsureGrad(), self.grad);
    if (self.parents[1]->requires_grad)
      AccumulateInto(self.parents[1]->EnsureGrad(), self.grad);
  });
}

inline Var Sub(const Var& a, const Var& b) {
  CheckSameShape(a->value, b->value, "sub");
  Tensor y = a->value;
  for (int64_t i = 0; i < y.numel(); ++i) y[i] -= b->value[i];
  return NewOp(std::move(y), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad)
      AccumulateInto(self.parents[0]->EnsureGrad(), self.grad);
    if (self.parents[1]->requires_grad) {
      Tensor& g = self.parents[1]->EnsureGrad();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
    }
  });
}

inline Var Mul(const Var& a, const Var& b) {
  CheckSameShape(a->value, b->value, "mul");
  Tensor y = a->value;
  for (int64_t i = 0; i < y.numel(); ++i) y[i] *= b->value[i];
  return NewOp(std::move(y), {a, b}, [](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    if (self.parents[0]->requires_grad) {
      Tensor& g = self.parents[0]->EnsureGrad();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (self.parents[1]->requires_grad) {
      Tensor& g = self.parents[1]->EnsureGrad();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

inline Var Scale(const Var& a, double c) {
  Tensor y = a->value;
  for (double& v : y.data) v *= c;
  return NewOp(std::move(y), {a}, [c](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->EnsureGrad();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += c * self.grad[i];
  });
}

inline Var AddConst(const Var& a, const Tensor& t) {
  CheckSameShape(a->value, t, "add-const");
  Tensor y = a->value;
  for (int64_t i = 0; i < y.numel(); ++i) y[i] += t[i];
  return NewOp(std::move(y), {a}, [](Node& self) {
    if (self.parents[0]->requires_grad)
      AccumulateInto(self.parents[0]->EnsureGrad(), self.grad);
  });
}

inline Var Relu(const Var& a) {
  Tensor y = a->value;
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  return NewOp(std::move(y), {a}, [](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    const Tensor& x = self.parents[0]->value;
    Tensor& g = self.parents[0]->EnsureGrad();
    for (int64_t i = 0; i < g.numel(); ++i)
      if (x[i] > 0.0) g[i] += self.grad[i];
  });
}

inline Var Gelu(const Var& a) {
  static const double kInvSqrt2 = 0.7071067811865475244;
  static const double kInvSqrt2Pi = 0.3989422804014326779;
  Tensor y = a->value;
  for (double& v : y.data) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  return NewOp(std::move(y), {a}, [](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    const Tensor& x = self.parents[0]->value;
    Tensor& g = self.parents[0]->EnsureGrad();
    for (int64_t i = 0; i < g.numel(); ++i) {
      double v = x[i];
      double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      g[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

// ---------------------------------------------------------------------------
// linear algebra

inline Var Matmul(const Var& a, const Var& b) {
  const Tensor& A = a->value;
  const Tensor& B = b->value;
  Require(A.ndim() == 2 && B.ndim() == 2 && A.cols() == B.rows(),
          "shape-mismatch", "matmul " + A.ShapeStr() + " x " + B.ShapeStr());
  int64_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor y({m, n});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t p = 0; p < k; ++p) {
      double av = A.at(i, p);
      if (av == 0.0) continue;
      for (int64_t j = 0; j < n; ++j) y.at(i, j) += av * B.at(p, j);
    }
  return NewOp(std::move(y), {a, b}, [m, k, n](Node& self) {
    const Tensor& A = self.parents[0]->value;
    const Tensor& B = self.parents[1]->value;
    if (self.parents[0]->requires_grad) {
      Tensor& ga = self.parents[0]->EnsureGrad();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
          double gy = self.grad.at(i, j);
          if (gy == 0.0) continue;
          for (int64_t p = 0; p < k; ++p) ga.at(i, p) += gy * B.at(p, j);
        }
    }
    if (self.parents[1]->requires_grad) {
      Tensor& gb = self.parents[1]->EnsureGrad();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t p = 0; p < k; ++p) {
          double av = A.at(i, p);
          if (av == 0.0) continue;
          for (int64_t j = 0; j < n; ++j) gb.at(p, j) += av * self.grad.at(i, j);
        }
    }
  });
}

// y = x W^T + b with x:[T,din], W:[dout,din], b:[dout]
inline Var LinearFwd(const Var& x, const Var& w, const Var& b) {
  const Tensor& X = x->value;
  const Tensor& W = w->value;
  const Tensor& Bv = b->value;
  Require(X.ndim() == 2 && W.ndim() == 2 && X.cols() == W.cols() &&
              Bv.numel() == W.rows(),
          "shape-mismatch", "linear " + X.ShapeStr() + " W " + W.ShapeStr());
  int64_t t_len = X.rows(), din = X.cols(), dout = W.rows();
  Tensor y({t_len, dout});
  for (int64_t t = 0; t < t_len; ++t)
    for (int64_t o = 0; o < dout; ++o) {
      double acc = Bv[o];
      const double* xr = &X.data[static_cast<size_t>(t * din)];
      const double* wr = &W.data[static_cast<size_t>(o * din)];
      for (int64_t i = 0; i < din; ++i) acc += xr[i] * wr[i];
      y.at(t, o) = acc;
    }
  return NewOp(std::move(y), {x, w, b}, [t_len, din, dout](Node& self) {
    const Tensor& X = self.parents[0]->value;
    const Tensor& W = self.parents[1]->value;
    if (self.parents[0]->requires_grad) {
      Tensor& gx = self.parents[0]->EnsureGrad();
      for (int64_t t = 0; t < t_len; ++t)
        for (int64_t o = 0; o < dout; ++o) {
          double gy = self.grad.at(t, o);
          if (gy == 0.0) continue;
          double* gxr = &gx.data[static_cast<size_t>(t * din)];
          const double* wr = &W.data[static_cast<size_t>(o * din)];
          for (int64_t i = 0; i < din; ++i) gxr[i] += gy * wr[i];
        }
    }
    if (self.parents[1]->requires_grad) {
      Tensor& gw = self.parents[1]->EnsureGrad();
      for (int64_t t = 0; t < t_len; ++t)
        for (int64_t o = 0; o < dout; ++o) {
          double gy = self.grad.at(t, o);
          if (gy == 0.0) continue;
          double* gwr = &gw.data[static_cast<size_t>(o * din)];
          const double* xr = &X.data[static_cast<size_t>(t * din)];
          for (int64_t i = 0; i < din; ++i) gwr[i] += gy * xr[i];
        }
    }
    if (self.parents[2]->requires_grad) {
      Tensor& gb = self.parents[2]->EnsureGrad();
      for (int64_t t = 0; t < t_len; ++t)
        for (int64_t o = 0; o < dout; ++o) gb[o] += self.grad.at(t, o);
    }
  });
}

inline Var Transpose2D(const Var& a) {
  const Tensor& A = a->value;
  Require(A.ndim() == 2, "shape-mismatch", "transpose needs 2-D");
  int64_t m = A.rows(), n = A.cols();
  Tensor y({n, m});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) y.at(j, i) = A.at(i, j);
  return NewOp(std::move(y), {a}, [m, n](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->EnsureGrad();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) g.at(i, j) += self.grad.at(j, i);
  });
}

inline Var SliceCols(const Var& a, int64_t c0, int64_t c1) {
  const Tensor& A = a->value;
  Require(A.ndim() == 2 && 0 <= c0 && c0 < c1 && c1 <= A.cols(),
          "shape-mismatch", "slice-cols out of range");
  int64_t m = A.rows(), w = c1 - c0;
  Tensor y({m, w});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < w; ++j) y.at(i, j) = A.at(i, c0 + j);
  return NewOp(std::move(y), {a}, [m, w, c0](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->EnsureGrad();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < w; ++j) g.at(i, c0 + j) += self.grad.at(i, j);
  });
}

inline Var ConcatCols(const std::vector<Var>& parts) {
  Require(!parts.empty(), "shape-mismatch", "concat of nothing");
  int64_t m = parts[0]->value.rows(), total = 0;
  for (const Var& p : parts) {
    Require(p->value.ndim() == 2 && p->value.rows() == m, "shape-mismatch",
            "concat-cols row mismatch");
    total += p->value.cols();
  }
  Tensor y({m, total});
  int64_t off = 0;
  for (const Var& p : parts) {
    int64_t w = p->value.cols();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < w; ++j) y.at(i, off + j) = p->value.at(i, j);
    off += w;
  }
  return NewOp(std::move(y), parts, [m](Node& self) {
    int64_t off = 0;
    for (Var& p : self.parents) {
      int64_t w = p->value.cols();
      if (p->requires_grad) {
        Tensor& g = p->EnsureGrad();
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < w; ++j) g.at(i, j) += self.grad.at(i, off + j);
      }
      off += w;
    }
  });
}

inline Var GatherRows(const Var& a, std::vector<int64_t> rows) {
  const Tensor& A = a->value;
  Require(A.ndim() == 2, "shape-mismatch", "gather-rows needs 2-D");
  int64_t d = A.cols();
  Tensor y({static_cast<int64_t>(rows.size()), d});
  for (size_t i = 0; i < rows.size(); ++i) {
    Require(rows[i] >= 0 && rows[i] < A.rows(), "shape-mismatch",
            "gather row out of range");
    for (int64_t j = 0; j < d; ++j)
      y.at(static_cast<int64_t>(i), j) = A.at(rows[i], j);
  }
  return NewOp(std::move(y), {a}, [rows = std::move(rows), d](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->EnsureGrad();
    for (size_t i = 0; i < rows.size(); ++i)
      for (int64_t j = 0; j < d; ++j)
        g.at(rows[i], j) += self.grad.at(static_cast<int64_t>(i), j);
  });
}

// ---------------------------------------------------------------------------
// normalization / softmax

inline Var LayerNormRows(const Var& x, const Var& gamma, const Var& beta,
                         double eps = 1e-5) {
  const Tensor& X = x->value;
  int64_t t_len = X.rows(), d = X.cols();
  Require(gamma->value.numel() == d && beta->value.numel() == d,
          "shape-mismatch", "layer-norm affine size");
  Tensor y({t_len, d});
  Tensor xhat({t_len, d});
  std::vector<double> inv_std(static_cast<size_t>(t_len));
  for (int64_t t = 0; t < t_len; ++t) {
    double mean = 0.0;
    for (int64_t j = 0; j < d; ++j) mean += X.at(t, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      double c = X.at(t, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(t)] = is;
    for (int64_t j = 0; j < d; ++j) {
      double h = (X.at(t, j) - mean) * is;
      xhat.at(t, j) = h;
      y.at(t, j) = gamma->value[j] * h + beta->value[j];
    }
  }
  return NewOp(std::move(y), {x, gamma, beta},
               [t_len, d, xhat = std::move(xhat),
                inv_std = std::move(inv_std)](Node& self) {
                 const Tensor& gammav = self.parents[1]->value;
                 if (self.parents[0]->requires_grad) {
                   Tensor& gx = self.parents[0]->EnsureGrad();
                   for (int64_t t = 0; t < t_len; ++t) {
                     double sum_dh = 0.0, sum_dh_h = 0.0;
                     for (int64_t j = 0; j < d; ++j) {
                       double dh = self.grad.at(t, j) * gammav[j];
                       sum_dh += dh;
                       sum_dh_h += dh * xhat.at(t, j);
                     }
                     double is = inv_std[static_cast<size_t>(t)];
                     for (int64_t j = 0; j < d; ++j) {
                       double dh = self.grad.at(t, j) * gammav[j];
                       gx.at(t, j) +=
                           is * (dh - (sum_dh + xhat.at(t, j) * sum_dh_h) /
                                          static_cast<double>(d));
                     }
                   }
                 }
                 if (self.parents[1]->requires_grad) {
                   Tensor& gg = self.parents[1]->EnsureGrad();
                   for (int64_t t = 0; t < t_len; ++t)
                     for (int64_t j = 0; j < d; ++j)
                       gg[j] += self.grad.at(t, j) * xhat.at(t, j);
                 }
                 if (self.parents[2]->requires_grad) {
                   Tensor& gb = self.parents[2]->EnsureGrad();
                   for (int64_t t = 0; t < t_len; ++t)
                     for (int64_t j = 0; j < d; ++j) gb[j] += self.grad.at(t, j);
                 }
               });
}

inline Var SoftmaxRows(const Var& x) {
  const Tensor& X = x->value;
  int64_t t_len = X.rows(), d = X.cols();
  Tensor y({t_len, d});
  for (int64_t t = 0; t < t_len; ++t) {
    double mx = X.at(t, 0);
    for (int64_t j = 1; j < d; ++j) mx = std::max(mx, X.at(t, j));
    double z = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      double e = std::exp(X.at(t, j) - mx);
      y.at(t, j) = e;
      z += e;
    }
    for (int64_t j = 0; j < d; ++j) y.at(t, j) /= z;
  }
  Tensor ycopy = y;
  return NewOp(std::move(y), {x}, [t_len, d, ycopy = std::move(ycopy)](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& gx = self.parents[0]->EnsureGrad();
    for (int64_t t = 0; t < t_len; ++t) {
      double dot = 0.0;
      for (int64_t j = 0; j < d; ++j) dot += self.grad.at(t, j) * ycopy.at(t, j);
      for (int64_t j = 0; j < d; ++j)
        gx.at(t, j) += ycopy.at(t, j) * (self.grad.at(t, j) - dot);
    }
  });
}

inline Var LogSoftmaxRows(const Var& x) {
  const Tensor& X = x->value;
  int64_t t_len = X.rows(), d = X.cols();
  Tensor y({t_len, d});
  for (int64_t t = 0; t < t_len; ++t) {
    double mx = X.at(t, 0);
    for (int64_t j = 1; j < d; ++j) mx = std::max(mx, X.at(t, j));
    double z = 0.0;
    for (int64_t j = 0; j < d; ++j) z += std::exp(X.at(t, j) - mx);
    double lse = mx + std::log(z);
    for (int64_t j = 0; j < d; ++j) y.at(t, j) = X.at(t, j) - lse;
  }
  Tensor ycopy = y;
  return NewOp(std::move(y), {x}, [t_len, d, ycopy = std::move(ycopy)](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& gx = self.parents[0]->EnsureGrad();
    for (int64_t t = 0; t < t_len; ++t) {
      double gsum = 0.0;
      for (int64_t j = 0; j < d; ++j) gsum += self.grad.at(t, j);
      for (int64_t j = 0; j < d; ++j)
        gx.at(t, j) += self.grad.at(t, j) - std::exp(ycopy.at(t, j)) * gsum;
    }
  });
}

// ---------------------------------------------------------------------------
// reductions / losses

inline Var MeanAll(const Var& x) {
  double s = 0.0;
  for (double v : x->value.data) s += v;
  int64_t n = x->value.numel();
  Tensor y({1});
  y[0] = s / static_cast<double>(n);
  return NewOp(std::move(y), {x}, [n](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->EnsureGrad();
    double gy = self.grad[0] / static_cast<double>(n);
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += gy;
  });
}

inline Var SumAll(const Var& x) {
  double s = 0.0;
  for (double v : x->value.data) s += v;
  Tensor y({1});
  y[0] = s;
  return NewOp(std::move(y), {x}, [](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->EnsureGrad();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[0];
  });
}

// mean over rows of -logp[t, target_t]
inline Var PickNegLogLik(const Var& logp, std::vector<int64_t> targets) {
  const Tensor& L = logp->value;
  Require(L.ndim() == 2 &&
              static_cast<int64_t>(targets.size()) == L.rows(),
          "shape-mismatch", "nll target count");
  int64_t n = L.rows();
  double s = 0.0;
  for (int64_t t = 0; t < n; ++t) {
    Require(targets[static_cast<size_t>(t)] >= 0 &&
                targets[static_cast<size_t>(t)] < L.cols(),
            "shape-mismatch", "nll target id out of range");
    s -= L.at(t, targets[static_cast<size_t>(t)]);
  }
  Tensor y({1});
  y[0] = s / static_cast<double>(n);
  return NewOp(std::move(y), {logp}, [targets = std::move(targets), n](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->EnsureGrad();
    double gy = self.grad[0] / static_cast<double>(n);
    for (int64_t t = 0; t < n; ++t)
      g.at(t, targets[static_cast<size_t>(t)]) -= gy;
  });
}

// mean over rows of (1 - cos(pred_row, target_row)); targets carry no grad
inline Var CosineDistanceLoss(const Var& pred, const Tensor& target) {
  const Tensor& P = pred->value;
  CheckSameShape(P, target, "cosine-loss");
  Require(P.ndim() == 2 && P.rows() >= 1, "no-masked-positions",
          "cosine loss over empty set");
  int64_t m = P.rows(), d = P.cols();
  const double eps = 1e-12;
  std::vector<double> np(static_cast<size_t>(m)), nt(static_cast<size_t>(m)),
      cs(static_cast<size_t>(m));
  double loss = 0.0;
  for (int64_t r = 0; r < m; ++r) {
    double pp = 0.0, tt = 0.0, pt = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      pp += P.at(r, j) * P.at(r, j);
      tt += target.at(r, j) * target.at(r, j);
      pt += P.at(r, j) * target.at(r, j);
    }
    double a = std::sqrt(pp + eps), b = std::sqrt(tt + eps);
    np[static_cast<size_t>(r)] = a;
    nt[static_cast<size_t>(r)] = b;
    double c = pt / (a * b);
    cs[static_cast<size_t>(r)] = c;
    loss += 1.0 - c;
  }
  Tensor y({1});
  y[0] = loss / static_cast<double>(m);
  return NewOp(std::move(y), {pred},
               [target, m, d, np = std::move(np), nt = std::move(nt),
                cs = std::move(cs)](Node& self) {
                 if (!self.parents[0]->requires_grad) return;
                 const Tensor& P = self.parents[0]->value;
                 Tensor& g = self.parents[0]->EnsureGrad();
                 double gy = self.grad[0] / static_cast<double>(m);
                 for (int64_t r = 0; r < m; ++r) {
                   double a = np[static_cast<size_t>(r)];
                   double b = nt[static_cast<size_t>(r)];
                   double c = cs[static_cast<size_t>(r)];
                   for (int64_t j = 0; j < d; ++j) {
                     double dc = target.at(r, j) / (a * b) -
                                 c * P.at(r, j) / (a * a);
                     g.at(r, j) += -gy * dc;
                   }
                 }
               });
}

// replace rows flagged by mask with a learned token row
inline Var ReplaceMaskedRows(const Var& x, const std::vector<char>& mask,
                             const Var& token) {
  const Tensor& X = x->value;
  Require(X.ndim() == 2 &&
              static_cast<int64_t>(mask.size()) == X.rows() &&
              token->value.numel() == X.cols(),
          "length-mismatch", "mask/token size vs sequence");
  int64_t t_len = X.rows(), d = X.cols();
  Tensor y = X;
  for (int64_t t = 0; t < t_len; ++t)
    if (mask[static_cast<size_t>(t)])
      for (int64_t j = 0; j < d; ++j) y.at(t, j) = token->value[j];
  return NewOp(std::move(y), {x, token}, [mask, t_len, d](Node& self) {
    if (self.parents[0]->requires_grad) {
      Tensor& g = self.parents[0]->EnsureGrad();
      for (int64_t t = 0; t < t_len; ++t)
        if (!mask[static_cast<size_t>(t)])
          for (int64_t j = 0; j < d; ++j) g.at(t, j) += self.grad.at(t, j);
    }
    if (self.parents[1]->requires_grad) {
      Tensor& g = self.parents[1]->EnsureGrad();
      for (int64_t t = 0; t < t_len; ++t)
        if (mask[static_cast<size_t>(t)])
          for (int64_t j = 0; j < d; ++j) g[j] += self.grad.at(t, j);
    }
  });
}

inline Var EmbeddingLookup(const Var& table, std::vector<int64_t> ids) {
  const Tensor& T = table->value;
  Require(T.ndim() == 2, "shape-mismatch", "embedding table must be 2-D");
  int64_t d = T.cols();
  Tensor y({static_cast<int64_t>(ids.size()), d});
  for (size_t i = 0; i < ids.size(); ++i) {
    Require(ids[i] >= 0 && ids[i] < T.rows(), "shape-mismatch",
            "embedding id out of range");
    for (int64_t j = 0; j < d; ++j)
      y.at(static_cast<int64_t>(i), j) = T.at(ids[i], j);
  }
  return NewOp(std::move(y), {table}, [ids = std::move(ids), d](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->EnsureGrad();
    for (size_t i = 0; i < ids.size(); ++i)
      for (int64_t j = 0; j < d; ++j)
        g.at(ids[i], j) += self.grad.at(static_cast<int64_t>(i), j);
  });
}

}  // namespace avsr

#endif  // AVSR_AUTODIFF_HPP_
