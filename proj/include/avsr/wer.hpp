// avsr/wer.hpp

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

// Word error rate via Levenshtein alignment over whitespace-split words.
// Counts come from a traceback with a fixed tie order (match/substitute,
// then delete, then insert) so reports are deterministic.

#ifndef AVSR_WER_HPP_
#define AVSR_WER_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "avsr/error.hpp"

namespace avsr {

inline std::vector<std::string> SplitWords(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (c == ' ') {
      if (!cur.empty()) words.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

inline std::string JoinWords(const std::vector<std::string>& words,
                             size_t from, size_t to) {
  std::string out;
  for (size_t i = from; i < to; ++i) {
    if (i > from) out.push_back(' ');
    out += words[i];
  }
  return out;
}

struct EditCounts {
  int64_t substitutions = 0;
  int64_t insertions = 0;
  int64_t deletions = 0;
  int64_t total() const { return substitutions + insertions + deletions; }
};

// minimum-edit alignment of hyp against ref, with operation counts
inline EditCounts WordEditCounts(const std::vector<std::string>& ref,
                                 const std::vector<std::string>& hyp) {
  const size_t n = ref.size();
  const size_t m = hyp.size();
  std::vector<std::vector<int64_t>> d(n + 1, std::vector<int64_t>(m + 1, 0));
  for (size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int64_t>(i);
  for (size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      const int64_t sub = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const int64_t del = d[i - 1][j] + 1;
      const int64_t ins = d[i][j - 1] + 1;
      d[i][j] = std::min(sub, std::min(del, ins));
    }
  }
  EditCounts counts;
  size_t i = n;
  size_t j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++counts.substitutions;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++counts.deletions;
      --i;
    } else {
      ++counts.insertions;
      --j;
    }
  }
  return counts;
}

inline double Wer(const std::string& reference, const std::string& hypothesis) {
  const std::vector<std::string> ref = SplitWords(reference);
  Require(!ref.empty(), "empty-reference",
          "reference transcript has no words");
  const std::vector<std::string> hyp = SplitWords(hypothesis);
  const EditCounts counts = WordEditCounts(ref, hyp);
  return static_cast<double>(counts.total()) / static_cast<double>(ref.size());
}

struct UtteranceScore {
  std::string id;
  std::string reference;
  std::string hypothesis;
  EditCounts counts;
  int64_t ref_words = 0;
  double wer = 0.0;
};

struct EvalReport {
  std::vector<UtteranceScore> utterances;
  EditCounts counts;
  int64_t total_ref_words = 0;
  double corpus_wer = 0.0;
  // decode settings used to produce the hypotheses
  int64_t beam_size = 0;
  double ctc_weight = 0.0;
  bool greedy = false;
};

// corpus WER pools edits over all utterances, it is not a mean of per
// utterance rates
inline EvalReport ScoreTranscripts(const std::vector<std::string>& ids,
                                   const std::vector<std::string>& refs,
                                   const std::vector<std::string>& hyps) {
  Require(ids.size() == refs.size() && refs.size() == hyps.size(),
          "length-mismatch", "ids, references and hypotheses must align");
  EvalReport report;
  for (size_t k = 0; k < refs.size(); ++k) {
    const std::vector<std::string> ref = SplitWords(refs[k]);
    Require(!ref.empty(), "empty-reference",
            "reference transcript has no words: " + ids[k]);
    UtteranceScore u;
    u.id = ids[k];
    u.reference = refs[k];
    u.hypothesis = hyps[k];
    u.counts = WordEditCounts(ref, SplitWords(hyps[k]));
    u.ref_words = static_cast<int64_t>(ref.size());
    u.wer = static_cast<double>(u.counts.total()) /
            static_cast<double>(u.ref_words);
    report.counts.substitutions += u.counts.substitutions;
    report.counts.insertions += u.counts.insertions;
    report.counts.deletions += u.counts.deletions;
    report.total_ref_words += u.ref_words;
    report.utterances.push_back(std::move(u));
  }
  Require(report.total_ref_words > 0, "empty-reference",
          "no reference words in the evaluation set");
  report.corpus_wer = static_cast<double>(report.counts.total()) /
                      static_cast<double>(report.total_ref_words);
  return report;
}

}  // namespace avsr

#endif  // AVSR_WER_HPP_
