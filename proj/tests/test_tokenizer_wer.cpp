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

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <string>
#include <vector>

#include "avsr/tokenizer.hpp"
#include "avsr/wer.hpp"

using Catch::Approx;

namespace {

// reference edit distance by plain recursion, no shared state with the
// implementation under test
int64_t RecursiveEdits(const std::vector<std::string>& ref,
                       const std::vector<std::string>& hyp, size_t i,
                       size_t j) {
  if (i == ref.size()) return static_cast<int64_t>(hyp.size() - j);
  if (j == hyp.size()) return static_cast<int64_t>(ref.size() - i);
  const int64_t sub =
      RecursiveEdits(ref, hyp, i + 1, j + 1) + (ref[i] == hyp[j] ? 0 : 1);
  const int64_t del = RecursiveEdits(ref, hyp, i + 1, j) + 1;
  const int64_t ins = RecursiveEdits(ref, hyp, i, j + 1) + 1;
  return std::min(sub, std::min(del, ins));
}

std::vector<std::vector<std::string>> SequencesUpTo(
    const std::vector<std::string>& vocab, size_t max_len) {
  std::vector<std::vector<std::string>> out = {{}};
  std::vector<std::vector<std::string>> frontier = {{}};
  for (size_t len = 1; len <= max_len; ++len) {
    std::vector<std::vector<std::string>> next;
    for (const auto& seq : frontier) {
      for (const auto& w : vocab) {
        auto grown = seq;
        grown.push_back(w);
        next.push_back(grown);
        out.push_back(std::move(grown));
      }
    }
    frontier = std::move(next);
  }
  return out;
}

std::string JoinWords(const std::vector<std::string>& words) {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i > 0) out += ' ';
    out += words[i];
  }
  return out;
}

}  // namespace

TEST_CASE("tokenizer assigns reserved ids and sorted character ids") {
  avsr::Tokenizer tk = avsr::Tokenizer::FromTranscripts({"cab", "bad"});
  REQUIRE(tk.inventory() == "abcd");
  REQUIRE(tk.vocab_size() == 8);
  // a=4 b=5 c=6 d=7
  const std::vector<int64_t> ids = tk.Encode("cab");
  REQUIRE(ids == std::vector<int64_t>{6, 4, 5});
  REQUIRE(avsr::Tokenizer::kBlank == 0);
  REQUIRE(avsr::Tokenizer::kPad == 1);
  REQUIRE(avsr::Tokenizer::kSos == 2);
  REQUIRE(avsr::Tokenizer::kEos == 3);
}

TEST_CASE("tokenizer round trips every transcript and never emits blank") {
  const std::vector<std::string> texts = {"the cat", "a dog ate",
                                          "zebra quiz", "   spaced   out "};
  avsr::Tokenizer tk = avsr::Tokenizer::FromTranscripts(texts);
  for (const std::string& t : texts) {
    const std::vector<int64_t> ids = tk.Encode(t);
    for (int64_t id : ids) {
      REQUIRE(id >= avsr::Tokenizer::kFirstChar);
      REQUIRE(id < tk.vocab_size());
    }
    REQUIRE(tk.Decode(ids) == t);
  }
}

TEST_CASE("tokenizer decode skips reserved ids") {
  avsr::Tokenizer tk = avsr::Tokenizer::FromInventory("ab");
  const std::vector<int64_t> ids = {avsr::Tokenizer::kSos, 4,
                                    avsr::Tokenizer::kBlank, 5,
                                    avsr::Tokenizer::kEos};
  REQUIRE(tk.Decode(ids) == "ab");
}

TEST_CASE("tokenizer rejects characters outside the inventory") {
  avsr::Tokenizer tk = avsr::Tokenizer::FromInventory("ab");
  REQUIRE_THROWS_AS(tk.Encode("abc"), avsr::Error);
  try {
    tk.Encode("abc");
  } catch (const avsr::Error& e) {
    REQUIRE(e.kind() == "parse-error");
  }
  REQUIRE_THROWS_AS(tk.Decode({99}), avsr::Error);
}

TEST_CASE("tokenizer inventory round trips through a string") {
  avsr::Tokenizer a = avsr::Tokenizer::FromTranscripts({"hello world"});
  avsr::Tokenizer b = avsr::Tokenizer::FromInventory(a.inventory());
  REQUIRE(a.inventory() == b.inventory());
  REQUIRE(a.Encode("hello world") == b.Encode("hello world"));
}

TEST_CASE("wer matches hand examples") {
  REQUIRE(avsr::Wer("a", "") == Approx(1.0));
  REQUIRE(avsr::Wer("a b c", "a b c") == Approx(0.0));
  REQUIRE(avsr::Wer("a b c", "a x c") == Approx(1.0 / 3.0));
  REQUIRE(avsr::Wer("a b", "a b c") == Approx(0.5));
  // insertions can push the rate above one
  REQUIRE(avsr::Wer("a", "b c d") == Approx(3.0));
}

TEST_CASE("wer rejects empty references") {
  REQUIRE_THROWS_AS(avsr::Wer("", "a"), avsr::Error);
  try {
    avsr::Wer("   ", "a");
  } catch (const avsr::Error& e) {
    REQUIRE(e.kind() == "empty-reference");
  }
}

TEST_CASE("wer equals recursive oracle on all pairs up to length three") {
  const std::vector<std::string> vocab = {"go", "stop"};
  const auto seqs = SequencesUpTo(vocab, 3);
  REQUIRE(seqs.size() == 15);  // 1 + 2 + 4 + 8
  for (const auto& ref : seqs) {
    for (const auto& hyp : seqs) {
      const int64_t want = RecursiveEdits(ref, hyp, 0, 0);
      const avsr::EditCounts got = avsr::WordEditCounts(ref, hyp);
      INFO("ref=" << JoinWords(ref) << " hyp=" << JoinWords(hyp));
      REQUIRE(got.total() == want);
      if (!ref.empty()) {
        REQUIRE(avsr::Wer(JoinWords(ref), JoinWords(hyp)) ==
                Approx(static_cast<double>(want) /
                       static_cast<double>(ref.size())));
      }
    }
  }
}

TEST_CASE("wer identity and triangle consistency over the grid") {
  const std::vector<std::string> vocab = {"go", "stop"};
  const auto seqs = SequencesUpTo(vocab, 3);
  for (const auto& a : seqs) {
    REQUIRE(avsr::WordEditCounts(a, a).total() == 0);
  }
  for (const auto& a : seqs) {
    for (const auto& b : seqs) {
      const int64_t ab = avsr::WordEditCounts(a, b).total();
      REQUIRE(ab == avsr::WordEditCounts(b, a).total());
      for (const auto& c : seqs) {
        const int64_t ac = avsr::WordEditCounts(a, c).total();
        const int64_t cb = avsr::WordEditCounts(c, b).total();
        REQUIRE(ab <= ac + cb);
      }
    }
  }
}

TEST_CASE("edit counts decompose into substitutions insertions deletions") {
  const avsr::EditCounts c1 = avsr::WordEditCounts({"a", "b", "c"}, {"a", "x", "c"});
  REQUIRE(c1.substitutions == 1);
  REQUIRE(c1.insertions == 0);
  REQUIRE(c1.deletions == 0);
  const avsr::EditCounts c2 = avsr::WordEditCounts({"a", "b"}, {"a"});
  REQUIRE(c2.deletions == 1);
  REQUIRE(c2.total() == 1);
  const avsr::EditCounts c3 = avsr::WordEditCounts({"a"}, {"a", "b", "b"});
  REQUIRE(c3.insertions == 2);
  REQUIRE(c3.total() == 2);
}

TEST_CASE("eval report pools edits across utterances") {
  const std::vector<std::string> ids = {"u1", "u2", "u3"};
  const std::vector<std::string> refs = {"a b", "c", "d e f"};
  const std::vector<std::string> hyps = {"a b", "x", "d f"};
  const avsr::EvalReport report = avsr::ScoreTranscripts(ids, refs, hyps);
  REQUIRE(report.utterances.size() == 3);
  REQUIRE(report.utterances[0].wer == Approx(0.0));
  REQUIRE(report.utterances[1].wer == Approx(1.0));
  REQUIRE(report.utterances[2].wer == Approx(1.0 / 3.0));
  REQUIRE(report.total_ref_words == 6);
  REQUIRE(report.counts.total() == 2);
  REQUIRE(report.corpus_wer ==
          Approx(static_cast<double>(report.counts.total()) /
                 static_cast<double>(report.total_ref_words)));
  // pooled corpus rate differs from the mean of per utterance rates
  REQUIRE(report.corpus_wer == Approx(2.0 / 6.0));
}

TEST_CASE("eval report rejects empty references and misaligned inputs") {
  REQUIRE_THROWS_AS(avsr::ScoreTranscripts({"u1"}, {""}, {"a"}), avsr::Error);
  REQUIRE_THROWS_AS(avsr::ScoreTranscripts({"u1"}, {"a", "b"}, {"a"}),
                    avsr::Error);
}
