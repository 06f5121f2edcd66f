// avsr/ctc.hpp

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

// CTC marginal likelihood over frame-level log-probabilities, with the
// analytic gradient wired into the autodiff graph, plus an incremental
// prefix scorer for label-synchronous decoding.

#ifndef AVSR_CTC_HPP_
#define AVSR_CTC_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "avsr/autodiff.hpp"
#include "avsr/error.hpp"
#include "avsr/tensor.hpp"

namespace avsr {

namespace detail {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double LogAdd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

}  // namespace detail

// minimum frame count that admits the label sequence: one frame per label
// plus a separating blank between equal neighbours
inline int64_t CtcMinFrames(const std::vector<int64_t>& labels) {
  int64_t need = static_cast<int64_t>(labels.size());
  for (size_t i = 1; i < labels.size(); ++i)
    if (labels[i] == labels[i - 1]) ++need;
  return need;
}

// -log P(labels | logp) marginalized over all blank-augmented alignments.
// logp holds per-frame log-probabilities [T x V]; labels are non-blank ids.
inline Var CtcLoss(const Var& logp, const std::vector<int64_t>& labels,
                   int64_t blank = 0) {
  const Tensor& L = logp->value;
  Require(L.ndim() == 2, "shape-mismatch", "ctc expects [T x V] log probs");
  const int64_t t_len = L.rows();
  const int64_t vocab = L.cols();
  Require(blank >= 0 && blank < vocab, "parse-error",
          "blank id outside the vocabulary");
  for (int64_t y : labels) {
    Require(y >= 0 && y < vocab, "parse-error",
            "label id " + std::to_string(y) + " outside the vocabulary");
    Require(y != blank, "parse-error", "labels may not contain blank");
  }
  Require(t_len >= 1 && t_len >= CtcMinFrames(labels), "infeasible-length",
          "need at least " + std::to_string(CtcMinFrames(labels)) +
              " frames for " + std::to_string(labels.size()) + " labels, got " +
              std::to_string(t_len));

  // extended label: blanks interleaved around every symbol
  const int64_t s_len = 2 * static_cast<int64_t>(labels.size()) + 1;
  std::vector<int64_t> ext(static_cast<size_t>(s_len), blank);
  for (size_t i = 0; i < labels.size(); ++i) ext[2 * i + 1] = labels[i];

  const double ninf = detail::kNegInf;
  auto idx = [s_len](int64_t t, int64_t s) { return t * s_len + s; };

  // forward lattice in the log domain
  std::vector<double> alpha(static_cast<size_t>(t_len * s_len), ninf);
  alpha[static_cast<size_t>(idx(0, 0))] = L.at(0, ext[0]);
  if (s_len > 1) alpha[static_cast<size_t>(idx(0, 1))] = L.at(0, ext[1]);
  for (int64_t t = 1; t < t_len; ++t) {
    for (int64_t s = 0; s < s_len; ++s) {
      double a = alpha[static_cast<size_t>(idx(t - 1, s))];
      if (s >= 1)
        a = detail::LogAdd(a, alpha[static_cast<size_t>(idx(t - 1, s - 1))]);
      if (s >= 2 && ext[static_cast<size_t>(s)] != blank &&
          ext[static_cast<size_t>(s)] != ext[static_cast<size_t>(s - 2)])
        a = detail::LogAdd(a, alpha[static_cast<size_t>(idx(t - 1, s - 2))]);
      alpha[static_cast<size_t>(idx(t, s))] =
          a + L.at(t, ext[static_cast<size_t>(s)]);
    }
  }
  double total = alpha[static_cast<size_t>(idx(t_len - 1, s_len - 1))];
  if (s_len > 1)
    total = detail::LogAdd(
        total, alpha[static_cast<size_t>(idx(t_len - 1, s_len - 2))]);
  Require(std::isfinite(total), "infeasible-length",
          "no alignment has nonzero probability");

  Tensor y({1});
  y[0] = -total;
  return NewOp(
      std::move(y), {logp},
      [alpha = std::move(alpha), ext = std::move(ext), t_len, s_len, total,
       blank, idx](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        const double ninf2 = detail::kNegInf;
        // backward lattice; beta excludes the emission at its own frame
        std::vector<double> beta(static_cast<size_t>(t_len * s_len), ninf2);
        const Tensor& lp = self.parents[0]->value;
        beta[static_cast<size_t>(idx(t_len - 1, s_len - 1))] = 0.0;
        if (s_len > 1) beta[static_cast<size_t>(idx(t_len - 1, s_len - 2))] = 0.0;
        for (int64_t t = t_len - 2; t >= 0; --t) {
          for (int64_t s = 0; s < s_len; ++s) {
            double b = beta[static_cast<size_t>(idx(t + 1, s))] +
                       lp.at(t + 1, ext[static_cast<size_t>(s)]);
            if (s + 1 < s_len)
              b = detail::LogAdd(
                  b, beta[static_cast<size_t>(idx(t + 1, s + 1))] +
                         lp.at(t + 1, ext[static_cast<size_t>(s + 1)]));
            if (s + 2 < s_len && ext[static_cast<size_t>(s + 2)] != blank &&
                ext[static_cast<size_t>(s + 2)] != ext[static_cast<size_t>(s)])
              b = detail::LogAdd(
                  b, beta[static_cast<size_t>(idx(t + 1, s + 2))] +
                         lp.at(t + 1, ext[static_cast<size_t>(s + 2)]));
            beta[static_cast<size_t>(idx(t, s))] = b;
          }
        }
        Tensor& g = self.parents[0]->EnsureGrad();
        const double gy = self.grad[0];
        for (int64_t t = 0; t < t_len; ++t) {
          for (int64_t s = 0; s < s_len; ++s) {
            const double occ = alpha[static_cast<size_t>(idx(t, s))] +
                               beta[static_cast<size_t>(idx(t, s))] - total;
            if (occ == ninf2) continue;
            g.at(t, ext[static_cast<size_t>(s)]) -= gy * std::exp(occ);
          }
        }
      });
}

// Incremental CTC prefix scoring for joint decoding. A state carries, for a
// fixed prefix g, the per-frame log probabilities of emitting exactly g and
// ending in a non-blank (r_n) or blank (r_b), plus the prefix log probability
// psi = log P(output starts with g). Extending by one token costs O(T).
class CtcPrefixScorer {
 public:
  CtcPrefixScorer(Tensor logp, int64_t blank)
      : logp_(std::move(logp)), blank_(blank) {
    Require(logp_.ndim() == 2 && logp_.rows() >= 1, "shape-mismatch",
            "prefix scorer expects [T x V] log probs");
    Require(blank_ >= 0 && blank_ < logp_.cols(), "parse-error",
            "blank id outside the vocabulary");
  }

  struct State {
    std::vector<double> r_n;  // per frame, prefix emitted, last symbol live
    std::vector<double> r_b;  // per frame, prefix emitted, then blanks
    double psi = 0.0;
    int64_t last = -1;  // -1 marks the empty prefix
  };

  State Initial() const {
    State s;
    const int64_t t_len = logp_.rows();
    s.r_n.assign(static_cast<size_t>(t_len), detail::kNegInf);
    s.r_b.resize(static_cast<size_t>(t_len));
    double acc = 0.0;
    for (int64_t t = 0; t < t_len; ++t) {
      acc += logp_.at(t, blank_);
      s.r_b[static_cast<size_t>(t)] = acc;
    }
    s.psi = 0.0;
    s.last = -1;
    return s;
  }

  // extend the prefix by token c; the incremental decode score is
  // result.psi - g.psi
  State Extend(const State& g, int64_t c) const {
    Require(c >= 0 && c < logp_.cols() && c != blank_, "parse-error",
            "prefix token outside the vocabulary");
    const int64_t t_len = logp_.rows();
    State h;
    h.r_n.assign(static_cast<size_t>(t_len), detail::kNegInf);
    h.r_b.assign(static_cast<size_t>(t_len), detail::kNegInf);
    h.last = c;
    h.r_n[0] = (g.last == -1) ? logp_.at(0, c) : detail::kNegInf;
    double psi = h.r_n[0];
    for (int64_t t = 1; t < t_len; ++t) {
      // paths that may append c at frame t: prefix ended in blank, or in a
      // different symbol (equal symbols need a separating blank)
      double phi = g.r_b[static_cast<size_t>(t - 1)];
      if (c != g.last)
        phi = detail::LogAdd(phi, g.r_n[static_cast<size_t>(t - 1)]);
      h.r_n[static_cast<size_t>(t)] =
          detail::LogAdd(h.r_n[static_cast<size_t>(t - 1)], phi) +
          logp_.at(t, c);
      h.r_b[static_cast<size_t>(t)] =
          detail::LogAdd(h.r_b[static_cast<size_t>(t - 1)],
                         h.r_n[static_cast<size_t>(t - 1)]) +
          logp_.at(t, blank_);
      psi = detail::LogAdd(psi, phi + logp_.at(t, c));
    }
    h.psi = psi;
    return h;
  }

  // log P(output == prefix), the score used when a hypothesis finishes
  double CompleteLogProb(const State& g) const {
    const size_t last = static_cast<size_t>(logp_.rows() - 1);
    return detail::LogAdd(g.r_n[last], g.r_b[last]);
  }

  int64_t frames() const { return logp_.rows(); }
  int64_t vocab() const { return logp_.cols(); }
  int64_t blank() const { return blank_; }

 private:
  Tensor logp_;
  int64_t blank_;
};

}  // namespace avsr

#endif  // AVSR_CTC_HPP_
