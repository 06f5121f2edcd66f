// avsr/ablate.hpp

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

// Cumulative ablation over the four design changes that separate the plain
// recipe from the improved one: averaged-block targets, the shallower video
// predictor, stronger audio masking, and the within-audio loss weighting.
// Each row runs the ordinary pipeline entry points, so a single row is
// bit-identical to running pretraining and fine-tuning by hand.

#ifndef AVSR_ABLATE_HPP_
#define AVSR_ABLATE_HPP_

#include <cstdint>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "avsr/config.hpp"
#include "avsr/error.hpp"
#include "avsr/finetune.hpp"
#include "avsr/pretrain.hpp"

namespace avsr {

struct AblationToggle {
  std::string average_blocks = "all";  // all | last | last6
  int64_t video_predictor_blocks = 1;  // 1 | 2
  double audio_mask_prob = 0.4;        // 0.2 | 0.4 | 0.6
  double loss_weight_a2v = 1.0;        // fixed at 1
  double loss_weight_a2a = 2.0;        // 1 | 2

  bool operator==(const AblationToggle&) const = default;
};

inline void ValidateToggle(const AblationToggle& t) {
  Require(t.average_blocks == "all" || t.average_blocks == "last" ||
              t.average_blocks == "last6",
          "parse-error", "average_blocks must be all, last or last6");
  Require(t.video_predictor_blocks == 1 || t.video_predictor_blocks == 2,
          "parse-error", "video_predictor_blocks must be 1 or 2");
  Require(t.audio_mask_prob == 0.2 || t.audio_mask_prob == 0.4 ||
              t.audio_mask_prob == 0.6,
          "parse-error", "audio_mask_prob must be 0.2, 0.4 or 0.6");
  Require(t.loss_weight_a2v == 1.0 &&
              (t.loss_weight_a2a == 1.0 || t.loss_weight_a2a == 2.0),
          "parse-error", "loss weights must be (1,1) or (1,2)");
}

inline ExperimentConfig ApplyToggle(const ExperimentConfig& base,
                                    const AblationToggle& t) {
  ValidateToggle(t);
  ExperimentConfig c = base;
  c.pretrain.target_blocks = t.average_blocks;
  c.model.video_predictor_blocks = t.video_predictor_blocks;
  c.pretrain.mask_start_prob_audio = t.audio_mask_prob;
  c.pretrain.loss_weight_a2v = t.loss_weight_a2v;
  c.pretrain.loss_weight_a2a = t.loss_weight_a2a;
  const std::vector<std::string> bad = Validate(c);
  Require(bad.empty(), "parse-error",
          "toggle produced an invalid config: " + (bad.empty() ? "" : bad[0]));
  return c;
}

// cumulative rows from the plain recipe to the full one, one change each
inline std::vector<std::pair<std::string, AblationToggle>> CumulativeGrid() {
  std::vector<std::pair<std::string, AblationToggle>> rows;
  AblationToggle t;
  t.average_blocks = "last";
  t.video_predictor_blocks = 2;
  t.audio_mask_prob = 0.2;
  t.loss_weight_a2v = 1.0;
  t.loss_weight_a2a = 1.0;
  rows.push_back({"baseline", t});
  t.average_blocks = "all";
  rows.push_back({"+average_blocks", t});
  t.video_predictor_blocks = 1;
  rows.push_back({"+shallow_video_predictor", t});
  t.audio_mask_prob = 0.4;
  rows.push_back({"+stronger_audio_masking", t});
  t.loss_weight_a2a = 2.0;
  rows.push_back({"+loss_weights", t});
  return rows;
}

struct AblationRow {
  std::string name;
  AblationToggle toggle;
  std::string config_hash;
  LossReport first_step;  // step-one losses, a wiring probe
  double final_total = 0.0;
  double final_v2a = 0.0;
  double heldout_wer = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  int64_t pretrain_steps = 0;
  int64_t finetune_steps = 0;
};

// one complete pipeline pass under the toggled config: pretraining from
// scratch, audio fine-tuning from the resulting checkpoint, beam WER on the
// held-out set
inline AblationRow RunAblationRow(const std::string& name,
                                  const AblationToggle& toggle,
                                  const ExperimentConfig& base,
                                  const std::vector<AVSample>& pretrain_data,
                                  const std::vector<AVSample>& train,
                                  const std::vector<AVSample>& heldout,
                                  std::ostream* log) {
  AblationRow row;
  row.name = name;
  row.toggle = toggle;
  const ExperimentConfig cfg = ApplyToggle(base, toggle);
  row.config_hash = ConfigHashHex(cfg);
  if (log != nullptr) *log << "ablation row " << name << " start\n";

  PretrainModel pm = PretrainModel::Build(cfg);
  const PretrainResult pre = RunPretraining(pm, pretrain_data, log);
  row.first_step = pre.history.front();
  row.final_total = pre.history.back().total;
  row.final_v2a = pre.history.back().v2a;
  const Checkpoint ck =
      MakePretrainCheckpoint(pm, pre.total_steps, pre.history.back().mu);

  // the inventory must cover held-out transcripts too: the fine-tune loop
  // encodes them for its validation loss probe
  std::vector<std::string> texts;
  for (const AVSample& s : train) texts.push_back(s.transcript);
  for (const AVSample& s : heldout) texts.push_back(s.transcript);
  FinetuneModel fm = FinetuneModel::Build(
      cfg, "audio", Tokenizer::FromTranscripts(texts), &ck);
  const FinetuneResult ft = RunFinetune(fm, train, heldout, log);
  row.heldout_wer = ft.final_eval.corpus_wer;
  if (log != nullptr)
    *log << "ablation row " << name << " total " << row.final_total << " wer "
         << row.heldout_wer << "\n";
  return row;
}

inline AblationReport RunAblation(const ExperimentConfig& base,
                                  const std::vector<AVSample>& pretrain_data,
                                  const std::vector<AVSample>& train,
                                  const std::vector<AVSample>& heldout,
                                  std::ostream* log) {
  AblationReport report;
  for (const auto& [name, toggle] : CumulativeGrid())
    report.rows.push_back(RunAblationRow(name, toggle, base, pretrain_data,
                                         train, heldout, log));
  return report;
}

inline std::string RenderAblationText(const AblationReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(26) << "row" << std::setw(10) << "targets"
      << std::setw(8) << "v_pred" << std::setw(8) << "a_mask" << std::setw(8)
      << "w_a2a" << std::setw(12) << "step1_total" << std::setw(12)
      << "final_total" << std::setw(10) << "wer" << "hash\n";
  for (const AblationRow& r : report.rows) {
    out << std::left << std::setw(26) << r.name << std::setw(10)
        << r.toggle.average_blocks << std::setw(8)
        << r.toggle.video_predictor_blocks << std::setw(8)
        << r.toggle.audio_mask_prob << std::setw(8) << r.toggle.loss_weight_a2a
        << std::setw(12) << std::setprecision(5) << r.first_step.total
        << std::setw(12) << std::setprecision(5) << r.final_total
        << std::setw(10) << std::setprecision(4) << r.heldout_wer
        << r.config_hash << "\n";
  }
  return out.str();
}

inline nlohmann::json AblationJson(const AblationReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const AblationRow& r : report.rows) {
    rows.push_back({{"name", r.name},
                    {"average_blocks", r.toggle.average_blocks},
                    {"video_predictor_blocks", r.toggle.video_predictor_blocks},
                    {"audio_mask_prob", r.toggle.audio_mask_prob},
                    {"loss_weight_a2v", r.toggle.loss_weight_a2v},
                    {"loss_weight_a2a", r.toggle.loss_weight_a2a},
                    {"config_hash", r.config_hash},
                    {"step1_total", r.first_step.total},
                    {"step1_v2a", r.first_step.v2a},
                    {"final_total", r.final_total},
                    {"final_v2a", r.final_v2a},
                    {"heldout_wer", r.heldout_wer}});
  }
  return nlohmann::json{{"rows", rows}};
}

}  // namespace avsr

#endif  // AVSR_ABLATE_HPP_
