// avsr/conv.hpp

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

// Convolution ops for the frontends. Zero padding, floor-divided output
// lengths, no dilation or grouping.

#ifndef AVSR_CONV_HPP_
#define AVSR_CONV_HPP_

#include <utility>
#include <vector>

#include "avsr/autodiff.hpp"

namespace avsr {

inline int64_t ConvOutLen(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  int64_t out = (in + 2 * pad - k) / stride + 1;
  Require(out >= 1, "wrong-input-size", "convolution output would be empty");
  return out;
}

// x:[Cin,L]  w:[Cout,Cin,K]  b:[Cout]  ->  [Cout,Lout]
inline Var Conv1D(const Var& x, const Var& w, const Var& b, int64_t stride,
                  int64_t pad) {
  const Tensor& X = x->value;
  const Tensor& W = w->value;
  Require(X.ndim() == 2 && W.ndim() == 3 && X.dim(0) == W.dim(1) &&
              b->value.numel() == W.dim(0),
          "shape-mismatch", "conv1d " + X.ShapeStr() + " w " + W.ShapeStr());
  int64_t cin = X.dim(0), len = X.dim(1);
  int64_t cout = W.dim(0), k = W.dim(2);
  int64_t lout = ConvOutLen(len, k, stride, pad);
  Tensor y({cout, lout});
  for (int64_t co = 0; co < cout; ++co)
    for (int64_t ol = 0; ol < lout; ++ol) {
      double acc = b->value[co];
      for (int64_t ci = 0; ci < cin; ++ci)
        for (int64_t kk = 0; kk < k; ++kk) {
          int64_t il = ol * stride + kk - pad;
          if (il < 0 || il >= len) continue;
          acc += X.at(ci, il) * W[(co * cin + ci) * k + kk];
        }
      y.at(co, ol) = acc;
    }
  return NewOp(std::move(y), {x, w, b},
               [cin, len, cout, k, lout, stride, pad](Node& self) {
                 const Tensor& X = self.parents[0]->value;
                 const Tensor& W = self.parents[1]->value;
                 bool gx_on = self.parents[0]->requires_grad;
                 bool gw_on = self.parents[1]->requires_grad;
                 bool gb_on = self.parents[2]->requires_grad;
                 Tensor* gx = gx_on ? &self.parents[0]->EnsureGrad() : nullptr;
                 Tensor* gw = gw_on ? &self.parents[1]->EnsureGrad() : nullptr;
                 Tensor* gb = gb_on ? &self.parents[2]->EnsureGrad() : nullptr;
                 for (int64_t co = 0; co < cout; ++co)
                   for (int64_t ol = 0; ol < lout; ++ol) {
                     double gy = self.grad.at(co, ol);
                     if (gy == 0.0) continue;
                     if (gb_on) (*gb)[co] += gy;
                     for (int64_t ci = 0; ci < cin; ++ci)
                       for (int64_t kk = 0; kk < k; ++kk) {
                         int64_t il = ol * stride + kk - pad;
                         if (il < 0 || il >= len) continue;
                         int64_t wi = (co * cin + ci) * k + kk;
                         if (gx_on) gx->at(ci, il) += gy * W[wi];
                         if (gw_on) (*gw)[wi] += gy * X.at(ci, il);
                       }
                   }
               });
}

// x:[N,Cin,H,W]  w:[Cout,Cin,Kh,Kw]  b:[Cout]  ->  [N,Cout,Ho,Wo]
// square stride and padding
inline Var Conv2D(const Var& x, const Var& w, const Var& b, int64_t stride,
                  int64_t pad) {
  const Tensor& X = x->value;
  const Tensor& W = w->value;
  Require(X.ndim() == 4 && W.ndim() == 4 && X.dim(1) == W.dim(1) &&
              b->value.numel() == W.dim(0),
          "shape-mismatch", "conv2d " + X.ShapeStr() + " w " + W.ShapeStr());
  int64_t n = X.dim(0), cin = X.dim(1), h = X.dim(2), wd = X.dim(3);
  int64_t cout = W.dim(0), kh = W.dim(2), kw = W.dim(3);
  int64_t ho = ConvOutLen(h, kh, stride, pad);
  int64_t wo = ConvOutLen(wd, kw, stride, pad);
  Tensor y({n, cout, ho, wo});
  auto xi = [&](int64_t a, int64_t b2, int64_t c, int64_t d) {
    return ((a * cin + b2) * h + c) * wd + d;
  };
  auto yi = [&](int64_t a, int64_t b2, int64_t c, int64_t d) {
    return ((a * cout + b2) * ho + c) * wo + d;
  };
  for (int64_t s = 0; s < n; ++s)
    for (int64_t co = 0; co < cout; ++co)
      for (int64_t oh = 0; oh < ho; ++oh)
        for (int64_t ow = 0; ow < wo; ++ow) {
          double acc = b->value[co];
          for (int64_t ci = 0; ci < cin; ++ci)
            for (int64_t r = 0; r < kh; ++r) {
              int64_t ih = oh * stride + r - pad;
              if (ih < 0 || ih >= h) continue;
              for (int64_t c = 0; c < kw; ++c) {
                int64_t iw = ow * stride + c - pad;
                if (iw < 0 || iw >= wd) continue;
                acc += X[xi(s, ci, ih, iw)] *
                       W[((co * cin + ci) * kh + r) * kw + c];
              }
            }
          y[yi(s, co, oh, ow)] = acc;
        }
  return NewOp(
      std::move(y), {x, w, b},
      [n, cin, h, wd, cout, kh, kw, ho, wo, stride, pad](Node& self) {
        const Tensor& X = self.parents[0]->value;
        const Tensor& W = self.parents[1]->value;
        bool gx_on = self.parents[0]->requires_grad;
        bool gw_on = self.parents[1]->requires_grad;
        bool gb_on = self.parents[2]->requires_grad;
        Tensor* gx = gx_on ? &self.parents[0]->EnsureGrad() : nullptr;
        Tensor* gw = gw_on ? &self.parents[1]->EnsureGrad() : nullptr;
        Tensor* gb = gb_on ? &self.parents[2]->EnsureGrad() : nullptr;
        auto xi = [&](int64_t a, int64_t b2, int64_t c, int64_t d) {
          return ((a * cin + b2) * h + c) * wd + d;
        };
        auto yi = [&](int64_t a, int64_t b2, int64_t c, int64_t d) {
          return ((a * cout + b2) * ho + c) * wo + d;
        };
        for (int64_t s = 0; s < n; ++s)
          for (int64_t co = 0; co < cout; ++co)
            for (int64_t oh = 0; oh < ho; ++oh)
              for (int64_t ow = 0; ow < wo; ++ow) {
                double gy = self.grad[yi(s, co, oh, ow)];
                if (gy == 0.0) continue;
                if (gb_on) (*gb)[co] += gy;
                for (int64_t ci = 0; ci < cin; ++ci)
                  for (int64_t r = 0; r < kh; ++r) {
                    int64_t ih = oh * stride + r - pad;
                    if (ih < 0 || ih >= h) continue;
                    for (int64_t c = 0; c < kw; ++c) {
                      int64_t iw = ow * stride + c - pad;
                      if (iw < 0 || iw >= wd) continue;
                      int64_t wi = ((co * cin + ci) * kh + r) * kw + c;
                      if (gx_on) (*gx)[xi(s, ci, ih, iw)] += gy * W[wi];
                      if (gw_on) (*gw)[wi] += gy * X[xi(s, ci, ih, iw)];
                    }
                  }
              }
      });
}

// x:[Cin,T,H,W]  w:[Cout,Cin,Kt,Kh,Kw]  b:[Cout]  ->  [Cout,To,Ho,Wo]
inline Var Conv3D(const Var& x, const Var& w, const Var& b, int64_t st,
                  int64_t sh, int64_t sw, int64_t pt, int64_t ph, int64_t pw) {
  const Tensor& X = x->value;
  const Tensor& W = w->value;
  Require(X.ndim() == 4 && W.ndim() == 5 && X.dim(0) == W.dim(1) &&
              b->value.numel() == W.dim(0),
          "shape-mismatch", "conv3d " + X.ShapeStr() + " w " + W.ShapeStr());
  int64_t cin = X.dim(0), t = X.dim(1), h = X.dim(2), wd = X.dim(3);
  int64_t cout = W.dim(0), kt = W.dim(2), kh = W.dim(3), kw = W.dim(4);
  int64_t to = ConvOutLen(t, kt, st, pt);
  int64_t ho = ConvOutLen(h, kh, sh, ph);
  int64_t wo = ConvOutLen(wd, kw, sw, pw);
  Tensor y({cout, to, ho, wo});
  auto xi = [&](int64_t a, int64_t b2, int64_t c, int64_t d) {
    return ((a * t + b2) * h + c) * wd + d;
  };
  auto yi = [&](int64_t a, int64_t b2, int64_t c, int64_t d) {
    return ((a * to + b2) * ho + c) * wo + d;
  };
  auto widx = [&](int64_t co, int64_t ci, int64_t a, int64_t b2, int64_t c) {
    return (((co * cin + ci) * kt + a) * kh + b2) * kw + c;
  };
  for (int64_t co = 0; co < cout; ++co)
    for (int64_t ot = 0; ot < to; ++ot)
      for (int64_t oh = 0; oh < ho; ++oh)
        for (int64_t ow = 0; ow < wo; ++ow) {
          double acc = b->value[co];
          for (int64_t ci = 0; ci < cin; ++ci)
            for (int64_t a = 0; a < kt; ++a) {
              int64_t it = ot * st + a - pt;
              if (it < 0 || it >= t) continue;
              for (int64_t r = 0; r < kh; ++r) {
                int64_t ih = oh * sh + r - ph;
                if (ih < 0 || ih >= h) continue;
                for (int64_t c = 0; c < kw; ++c) {
                  int64_t iw = ow * sw + c - pw;
                  if (iw < 0 || iw >= wd) continue;
                  acc += X[xi(ci, it, ih, iw)] * W[widx(co, ci, a, r, c)];
                }
              }
            }
          y[yi(co, ot, oh, ow)] = acc;
        }
  return NewOp(
      std::move(y), {x, w, b},
      [cin, t, h, wd, cout, kt, kh, kw, to, ho, wo, st, sh, sw, pt, ph,
       pw](Node& self) {
        const Tensor& X = self.parents[0]->value;
        const Tensor& W = self.parents[1]->value;
        bool gx_on = self.parents[0]->requires_grad;
        bool gw_on = self.parents[1]->requires_grad;
        bool gb_on = self.parents[2]->requires_grad;
        Tensor* gx = gx_on ? &self.parents[0]->EnsureGrad() : nullptr;
        Tensor* gw = gw_on ? &self.parents[1]->EnsureGrad() : nullptr;
        Tensor* gb = gb_on ? &self.parents[2]->EnsureGrad() : nullptr;
        auto xi = [&](int64_t a, int64_t b2, int64_t c, int64_t d) {
          return ((a * t + b2) * h + c) * wd + d;
        };
        auto yi = [&](int64_t a, int64_t b2, int64_t c, int64_t d) {
          return ((a * to + b2) * ho + c) * wo + d;
        };
        auto widx = [&](int64_t co, int64_t ci, int64_t a, int64_t b2,
                        int64_t c) {
          return (((co * cin + ci) * kt + a) * kh + b2) * kw + c;
        };
        for (int64_t co = 0; co < cout; ++co)
          for (int64_t ot = 0; ot < to; ++ot)
            for (int64_t oh = 0; oh < ho; ++oh)
              for (int64_t ow = 0; ow < wo; ++ow) {
                double gy = self.grad[yi(co, ot, oh, ow)];
                if (gy == 0.0) continue;
                if (gb_on) (*gb)[co] += gy;
                for (int64_t ci = 0; ci < cin; ++ci)
                  for (int64_t a = 0; a < kt; ++a) {
                    int64_t it = ot * st + a - pt;
                    if (it < 0 || it >= t) continue;
                    for (int64_t r = 0; r < kh; ++r) {
                      int64_t ih = oh * sh + r - ph;
                      if (ih < 0 || ih >= h) continue;
                      for (int64_t c = 0; c < kw; ++c) {
                        int64_t iw = ow * sw + c - pw;
                        if (iw < 0 || iw >= wd) continue;
                        int64_t wi = widx(co, ci, a, r, c);
                        if (gx_on) (*gx)[xi(ci, it, ih, iw)] += gy * W[wi];
                        if (gw_on) (*gw)[wi] += gy * X[xi(ci, it, ih, iw)];
                      }
                    }
                  }
              }
      });
}

// [C,T,H,W] -> [T,C,H,W]
inline Var PermuteCTtoTC(const Var& x) {
  const Tensor& X = x->value;
  Require(X.ndim() == 4, "shape-mismatch", "permute needs 4-D");
  int64_t c = X.dim(0), t = X.dim(1), h = X.dim(2), w = X.dim(3);
  Tensor y({t, c, h, w});
  int64_t plane = h * w;
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t ti = 0; ti < t; ++ti)
      for (int64_t p = 0; p < plane; ++p)
        y[(ti * c + ci) * plane + p] = X[(ci * t + ti) * plane + p];
  return NewOp(std::move(y), {x}, [c, t, plane](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->EnsureGrad();
    for (int64_t ci = 0; ci < c; ++ci)
      for (int64_t ti = 0; ti < t; ++ti)
        for (int64_t p = 0; p < plane; ++p)
          g[(ci * t + ti) * plane + p] += self.grad[(ti * c + ci) * plane + p];
  });
}

// [N,C,H,W] -> [N,C] by averaging each spatial plane
inline Var SpatialMeanPool(const Var& x) {
  const Tensor& X = x->value;
  Require(X.ndim() == 4, "shape-mismatch", "pool needs 4-D");
  int64_t n = X.dim(0), c = X.dim(1), plane = X.dim(2) * X.dim(3);
  Tensor y({n, c});
  for (int64_t s = 0; s < n; ++s)
    for (int64_t ci = 0; ci < c; ++ci) {
      double acc = 0.0;
      for (int64_t p = 0; p < plane; ++p) acc += X[(s * c + ci) * plane + p];
      y.at(s, ci) = acc / static_cast<double>(plane);
    }
  return NewOp(std::move(y), {x}, [n, c, plane](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->EnsureGrad();
    for (int64_t s = 0; s < n; ++s)
      for (int64_t ci = 0; ci < c; ++ci) {
        double gy = self.grad.at(s, ci) / static_cast<double>(plane);
        for (int64_t p = 0; p < plane; ++p) g[(s * c + ci) * plane + p] += gy;
      }
  });
}

// flatten leading dims into rows: [A,B,...] viewed as [A, numel/A]
inline Var ReshapeRows(const Var& x, int64_t rows, int64_t cols) {
  Require(rows * cols == x->value.numel(), "shape-mismatch",
          "reshape element count");
  Tensor y({rows, cols});
  y.data = x->value.data;
  return NewOp(std::move(y), {x}, [](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->EnsureGrad();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  });
}

}  // namespace avsr

#endif  // AVSR_CONV_HPP_
