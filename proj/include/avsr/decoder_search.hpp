// avsr/decoder_search.hpp

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

// Label-synchronous beam search over a joint score that mixes an attention
// decoder with CTC prefix scores. Greedy decoding is beam width one: a
// hypothesis that ends in eos must win a beam slot to survive, so width one
// reduces to the per-step argmax walk.

#ifndef AVSR_DECODER_SEARCH_HPP_
#define AVSR_DECODER_SEARCH_HPP_

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "avsr/ctc.hpp"
#include "avsr/error.hpp"

namespace avsr {

// Next-token distribution source. Implementations receive the emitted prefix
// (no sos, no eos) and return log-probabilities over the full vocabulary,
// handling the sos convention internally.
class AttentionScorer {
 public:
  virtual ~AttentionScorer() = default;
  virtual std::vector<double> NextLogProbs(
      const std::vector<int64_t>& prefix) = 0;
};

struct Hypothesis {
  std::vector<int64_t> tokens;  // emitted tokens, no sos or eos
  double attention = 0.0;       // accumulated attention log prob, eos included
  double ctc = 0.0;             // accumulated ctc prefix score, ending included
  double joint = 0.0;           // ctc_weight * ctc + (1 - ctc_weight) * attention
};

// endpoint weights bypass the mix so an impossible (-inf) component on the
// unweighted side cannot poison the score with NaN
inline double JointScore(double ctc_weight, double ctc, double attention) {
  if (ctc_weight == 0.0) return attention;
  if (ctc_weight == 1.0) return ctc;
  return ctc_weight * ctc + (1.0 - ctc_weight) * attention;
}

struct DecodeConfig {
  int64_t beam_size = 40;
  double ctc_weight = 0.1;
  int64_t eos = 3;
  std::vector<int64_t> candidates;  // emittable tokens, eos excluded
  int64_t max_len = 0;              // hard cap on emitted tokens
};

namespace detail {

struct LiveHyp {
  std::vector<int64_t> tokens;
  double attention = 0.0;
  double ctc = 0.0;
  double joint = 0.0;
  bool finished = false;
  CtcPrefixScorer::State state;
};

// ranking: higher joint first, then shorter, then lexicographic tokens
inline bool BetterHyp(const LiveHyp& a, const LiveHyp& b) {
  if (a.joint != b.joint) return a.joint > b.joint;
  if (a.tokens.size() != b.tokens.size())
    return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

}  // namespace detail

inline Hypothesis BeamSearchDecode(AttentionScorer& scorer,
                                   const CtcPrefixScorer& ctc,
                                   const DecodeConfig& cfg) {
  Require(cfg.beam_size >= 1, "parse-error", "beam size must be at least 1");
  Require(cfg.ctc_weight >= 0.0 && cfg.ctc_weight <= 1.0, "parse-error",
          "ctc weight must lie in [0, 1]");
  Require(cfg.max_len >= 0, "parse-error", "max decode length must be >= 0");
  Require(!cfg.candidates.empty(), "parse-error",
          "candidate token set is empty");
  for (int64_t c : cfg.candidates)
    Require(c != cfg.eos && c != ctc.blank(), "parse-error",
            "candidates may not contain eos or blank");

  std::vector<detail::LiveHyp> live(1);
  live[0].state = ctc.Initial();
  std::vector<detail::LiveHyp> finished;

  for (int64_t step = 0; step <= cfg.max_len && !live.empty(); ++step) {
    std::vector<detail::LiveHyp> expansions;
    for (const detail::LiveHyp& h : live) {
      const std::vector<double> logps = scorer.NextLogProbs(h.tokens);
      Require(static_cast<int64_t>(logps.size()) > cfg.eos, "length-mismatch",
              "attention scorer vocabulary misses the eos id");
      // ending the hypothesis is one of the scored moves and must win a
      // beam slot like any other

      detail::LiveHyp done = h;
      done.attention += logps[static_cast<size_t>(cfg.eos)];
      // a live hypothesis carries ctc = psi(prefix), so switching to the
      // complete-output probability is the telescoped eos increment
      done.ctc = ctc.CompleteLogProb(h.state);
      done.joint = JointScore(cfg.ctc_weight, done.ctc, done.attention);
      done.finished = true;
      expansions.push_back(std::move(done));

      if (step < cfg.max_len) {
        for (int64_t c : cfg.candidates) {
          Require(c >= 0 && c < static_cast<int64_t>(logps.size()),
                  "length-mismatch",
                  "attention scorer vocabulary misses a candidate id");
          detail::LiveHyp next;
          next.tokens = h.tokens;
          next.tokens.push_back(c);
          next.state = ctc.Extend(h.state, c);
          next.attention = h.attention + logps[static_cast<size_t>(c)];
          next.ctc = next.state.psi;
          next.joint = JointScore(cfg.ctc_weight, next.ctc, next.attention);
          expansions.push_back(std::move(next));
        }
      }
    }
    std::sort(expansions.begin(), expansions.end(), detail::BetterHyp);
    if (static_cast<int64_t>(expansions.size()) > cfg.beam_size)
      expansions.resize(static_cast<size_t>(cfg.beam_size));
    live.clear();
    for (detail::LiveHyp& e : expansions) {
      if (e.finished)
        finished.push_back(std::move(e));
      else
        live.push_back(std::move(e));
    }
    // per-token increments are log probabilities, so joint scores only
    // decrease along a path; once the best finished hypothesis beats every
    // live one no extension can overtake it
    if (!finished.empty() && !live.empty()) {
      double best_live = live[0].joint;
      for (const detail::LiveHyp& h : live)
        best_live = std::max(best_live, h.joint);
      double best_done = finished[0].joint;
      for (const detail::LiveHyp& h : finished)
        best_done = std::max(best_done, h.joint);
      if (best_done >= best_live) break;
    }
  }

  Require(!finished.empty(), "parse-error",
          "beam search ended with no finished hypothesis");
  std::sort(finished.begin(), finished.end(), detail::BetterHyp);
  Hypothesis out;
  out.tokens = finished[0].tokens;
  out.attention = finished[0].attention;
  out.ctc = finished[0].ctc;
  out.joint = JointScore(cfg.ctc_weight, out.ctc, out.attention);
  return out;
}

// beam width one; identical candidate scoring, so this is the argmax walk
inline Hypothesis GreedyDecode(AttentionScorer& scorer,
                               const CtcPrefixScorer& ctc,
                               const DecodeConfig& cfg) {
  DecodeConfig narrow = cfg;
  narrow.beam_size = 1;
  return BeamSearchDecode(scorer, ctc, narrow);
}

}  // namespace avsr

#endif  // AVSR_DECODER_SEARCH_HPP_
