// avsr/finetune.hpp

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

// Supervised speech recognition on top of the encoders: a CTC projection
// and an attention decoder trained with a joint loss, beam decoding, WER
// evaluation, and pseudo-label self-training. Single-modality fine-tuning
// updates the whole network; late fusion trains only the fusion MLP, the
// decoder and the CTC head while both encoders stay frozen.

#ifndef AVSR_FINETUNE_HPP_
#define AVSR_FINETUNE_HPP_

#include <algorithm>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "avsr/checkpoint.hpp"
#include "avsr/config.hpp"
#include "avsr/ctc.hpp"
#include "avsr/data.hpp"
#include "avsr/decoder_search.hpp"
#include "avsr/error.hpp"
#include "avsr/nets.hpp"
#include "avsr/optim.hpp"
#include "avsr/pretrain.hpp"
#include "avsr/tokenizer.hpp"
#include "avsr/wer.hpp"

namespace avsr {

// mean cross entropy over the label positions; decoder input is the labels
// shifted right behind sos, the target row for each position is the next
// label and finally eos
inline Var AttentionLoss(const DecoderNet& decoder, const Var& enc,
                         const std::vector<int64_t>& labels) {
  std::vector<int64_t> inputs = {Tokenizer::kSos};
  inputs.insert(inputs.end(), labels.begin(), labels.end());
  std::vector<int64_t> targets = labels;
  targets.push_back(Tokenizer::kEos);
  Var logp = LogSoftmaxRows(decoder.ForwardLogits(inputs, enc));
  return PickNegLogLik(logp, targets);
}

inline double JointLoss(double ctc_loss, double attention_loss,
                        double ctc_weight) {
  Require(ctc_weight >= 0.0 && ctc_weight <= 1.0, "parse-error",
          "ctc weight must lie in [0, 1]");
  return ctc_weight * ctc_loss + (1.0 - ctc_weight) * attention_loss;
}

inline Var JointLossVar(const Var& ctc_loss, const Var& attention_loss,
                        double ctc_weight) {
  Require(ctc_weight >= 0.0 && ctc_weight <= 1.0, "parse-error",
          "ctc weight must lie in [0, 1]");
  return Add(Scale(ctc_loss, ctc_weight),
             Scale(attention_loss, 1.0 - ctc_weight));
}

struct FinetuneModel {
  ExperimentConfig cfg;
  std::string modality;  // video | audio | fusion
  Tokenizer tokenizer;
  ParamStore store;

  VideoFrontendTiny video_frontend;
  EncoderNet video_encoder;
  AudioFrontendTiny audio_frontend;
  EncoderNet audio_encoder;
  ParamPtr fusion_w1, fusion_b1, fusion_w2, fusion_b2;
  DecoderNet decoder;
  ParamPtr ctc_w, ctc_b;

  bool has_video() const { return modality != "audio"; }
  bool has_audio() const { return modality != "video"; }

  // pretrained == nullptr leaves the encoders at their random init
  static FinetuneModel Build(const ExperimentConfig& cfg,
                             const std::string& modality, Tokenizer tokenizer,
                             const Checkpoint* pretrained) {
    Require(modality == "video" || modality == "audio" || modality == "fusion",
            "parse-error", "modality must be video, audio or fusion");
    Require(cfg.model.frontend == "tiny", "config-mismatch",
            "only the tiny frontend family is runnable");
    Require(!tokenizer.inventory().empty(), "parse-error",
            "tokenizer inventory is empty");
    FinetuneModel m;
    m.cfg = cfg;
    m.modality = modality;
    m.tokenizer = std::move(tokenizer);
    RngStream root(cfg.finetune.seed);
    RngStream init = root.Child("init");
    const int64_t d = cfg.model.attn_dim;
    const int64_t vocab = m.tokenizer.vocab_size();
    if (m.has_video()) {
      m.video_frontend =
          VideoFrontendTiny::Build(m.store, "video.frontend", d, init);
      m.video_encoder =
          EncoderNet::Build(m.store, "video.encoder", cfg.model, init);
    }
    if (m.has_audio()) {
      m.audio_frontend =
          AudioFrontendTiny::Build(m.store, "audio.frontend", d, init);
      m.audio_encoder =
          EncoderNet::Build(m.store, "audio.encoder", cfg.model, init);
    }
    if (modality == "fusion") {
      const int64_t h = cfg.finetune.fusion_hidden;
      m.fusion_w1 = m.store.Create("fusion.w1", init::Linear(h, 2 * d, init));
      m.fusion_b1 = m.store.Create("fusion.b1", Tensor::Zeros({h}));
      m.fusion_w2 = m.store.Create("fusion.w2", init::Linear(d, h, init));
      m.fusion_b2 = m.store.Create("fusion.b2", Tensor::Zeros({d}));
    }
    m.decoder =
        DecoderNet::Build(m.store, "decoder", cfg.finetune, d, vocab, init);
    m.ctc_w = m.store.Create("ctc.w", init::Linear(vocab, d, init));
    m.ctc_b = m.store.Create("ctc.b", Tensor::Zeros({vocab}));
    if (pretrained != nullptr) {
      for (const std::string mod : {std::string("video"), std::string("audio")}) {
        if ((mod == "video" && !m.has_video()) ||
            (mod == "audio" && !m.has_audio()))
          continue;
        const int64_t loaded = LoadPretrainedEncoder(*pretrained, m.store,
                                                     mod, mod);
        const int64_t want =
            static_cast<int64_t>(m.store.WithPrefix(mod + ".").size());
        Require(loaded == want, "config-mismatch",
                "checkpoint covers " + std::to_string(loaded) + " of " +
                    std::to_string(want) + " " + mod + " encoder arrays");
      }
    }
    return m;
  }

  // concatenated per-frame features through the two-layer MLP; output width
  // matches the decoder input width
  Var FusionForward(const Var& video_feats, const Var& audio_feats) const {
    Require(modality == "fusion", "config-mismatch",
            "fusion forward on a non-fusion model");
    Require(video_feats->value.rows() == audio_feats->value.rows(),
            "length-mismatch", "fusion needs aligned feature lengths");
    Var cat = ConcatCols({video_feats, audio_feats});
    Var hidden =
        Gelu(LinearFwd(cat, FromParam(fusion_w1), FromParam(fusion_b1)));
    return LinearFwd(hidden, FromParam(fusion_w2), FromParam(fusion_b2));
  }

  // full feature pipeline for one sample; fusion detaches the encoder
  // outputs so frozen parameters never see gradients
  Var EncodeSample(const AVSample& sample, bool training,
                   RngStream& rng) const {
    Var video_feats, audio_feats;
    if (has_video()) {
      RngStream aug_rng = rng.Child("augment");
      const Tensor view = training ? AugmentVideo(sample.video, aug_rng)
                                   : AugmentVideoWith(sample.video, false, 4, 4);
      RngStream drop_rng = rng.Child("video-drop");
      video_feats = video_encoder
                        .Forward(video_frontend.Forward(view), training,
                                 drop_rng, false)
                        .final;
    }
    if (has_audio()) {
      RngStream drop_rng = rng.Child("audio-drop");
      audio_feats = audio_encoder
                        .Forward(audio_frontend.Forward(sample.audio),
                                 training, drop_rng, false)
                        .final;
    }
    if (modality == "video") return video_feats;
    if (modality == "audio") return audio_feats;
    return FusionForward(Detach(video_feats), Detach(audio_feats));
  }

  Var CtcLogProbs(const Var& enc) const {
    return LogSoftmaxRows(LinearFwd(enc, FromParam(ctc_w), FromParam(ctc_b)));
  }

  // fusion freezes both encoders; everything else trains
  std::vector<ParamPtr> TrainableParams() const {
    if (modality != "fusion") return store.params();
    std::vector<ParamPtr> out;
    for (const ParamPtr& p : store.params()) {
      if (p->name.rfind("video.", 0) == 0 || p->name.rfind("audio.", 0) == 0)
        continue;
      out.push_back(p);
    }
    return out;
  }

  std::vector<int64_t> CandidateTokens() const {
    std::vector<int64_t> out;
    for (int64_t id = Tokenizer::kFirstChar; id < tokenizer.vocab_size(); ++id)
      out.push_back(id);
    return out;
  }
};

// joint loss of one sample under the current parameters
inline Var SampleJointLoss(const FinetuneModel& m, const AVSample& sample,
                           bool training, RngStream& rng) {
  Var enc = m.EncodeSample(sample, training, rng);
  const std::vector<int64_t> labels = m.tokenizer.Encode(sample.transcript);
  Var ctc = CtcLoss(m.CtcLogProbs(enc), labels, Tokenizer::kBlank);
  Var att = AttentionLoss(m.decoder, enc, labels);
  return JointLossVar(ctc, att, m.cfg.finetune.ctc_weight);
}

// ---------------------------------------------------------------------------
// decoding

struct DecodeSettings {
  int64_t beam = 8;
  double ctc_weight = 0.1;
  bool greedy = false;
};

namespace detail {

// attention scores from the trained decoder; the encoder output is fixed
// for the whole search
class ModelScorer : public AttentionScorer {
 public:
  ModelScorer(const DecoderNet& decoder, Var enc)
      : decoder_(decoder), enc_(std::move(enc)) {}

  std::vector<double> NextLogProbs(
      const std::vector<int64_t>& prefix) override {
    std::vector<int64_t> inputs = {Tokenizer::kSos};
    inputs.insert(inputs.end(), prefix.begin(), prefix.end());
    const Var logp = LogSoftmaxRows(decoder_.ForwardLogits(inputs, enc_));
    const Tensor& lp = logp->value;
    const int64_t last = lp.rows() - 1;
    std::vector<double> out(static_cast<size_t>(lp.cols()));
    for (int64_t v = 0; v < lp.cols(); ++v)
      out[static_cast<size_t>(v)] = lp.at(last, v);
    return out;
  }

 private:
  const DecoderNet& decoder_;
  Var enc_;
};

}  // namespace detail

inline Hypothesis DecodeSample(const FinetuneModel& m, const AVSample& sample,
                               const DecodeSettings& settings) {
  RngStream null_rng(0);
  Var enc = m.EncodeSample(sample, false, null_rng);
  // decoding never backpropagates
  Var frozen = MakeConst(enc->value);
  CtcPrefixScorer ctc(m.CtcLogProbs(frozen)->value, Tokenizer::kBlank);
  detail::ModelScorer scorer(m.decoder, frozen);
  DecodeConfig dc;
  dc.beam_size = settings.greedy ? 1 : settings.beam;
  dc.ctc_weight = settings.ctc_weight;
  dc.eos = Tokenizer::kEos;
  dc.candidates = m.CandidateTokens();
  dc.max_len = 2 * frozen->value.rows();
  return BeamSearchDecode(scorer, ctc, dc);
}

inline std::string DecodeSampleText(const FinetuneModel& m,
                                    const AVSample& sample,
                                    const DecodeSettings& settings) {
  return m.tokenizer.Decode(DecodeSample(m, sample, settings).tokens);
}

inline EvalReport EvalDataset(const FinetuneModel& m,
                              const std::vector<AVSample>& samples,
                              const DecodeSettings& settings) {
  Require(!samples.empty(), "bad-length", "evaluation set is empty");
  std::vector<std::string> ids, refs, hyps;
  for (const AVSample& s : samples) {
    ids.push_back(s.sample_id);
    refs.push_back(s.transcript);
    hyps.push_back(DecodeSampleText(m, s, settings));
  }
  EvalReport report = ScoreTranscripts(ids, refs, hyps);
  report.beam_size = settings.greedy ? 1 : settings.beam;
  report.ctc_weight = settings.ctc_weight;
  report.greedy = settings.greedy;
  return report;
}

// ---------------------------------------------------------------------------
// training

struct FinetuneEpochLog {
  int64_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_wer = 0.0;
};

struct FinetuneResult {
  std::vector<FinetuneEpochLog> epochs;
  EvalReport final_eval;
  int64_t total_steps = 0;
};

inline double DatasetJointLoss(const FinetuneModel& m,
                               const std::vector<AVSample>& samples) {
  double total = 0.0;
  RngStream null_rng(0);
  for (const AVSample& s : samples)
    total += SampleJointLoss(m, s, false, null_rng)->value[0];
  return total / static_cast<double>(samples.size());
}

inline FinetuneResult RunFinetune(FinetuneModel& m,
                                  const std::vector<AVSample>& train,
                                  const std::vector<AVSample>& val,
                                  std::ostream* log) {
  Require(!train.empty() && !val.empty(), "bad-length",
          "fine-tuning needs nonempty train and validation sets");
  const FinetuneConfig& fc = m.cfg.finetune;
  std::vector<AVSample> segments;
  for (const AVSample& s : train) {
    std::vector<AVSample> parts = SplitLong(s);
    segments.insert(segments.end(), parts.begin(), parts.end());
  }
  const std::vector<Batch> batches =
      MakeBatches(segments, m.cfg.pretrain.max_frames_per_batch);
  const int64_t per_epoch = static_cast<int64_t>(batches.size());
  const int64_t total = fc.epochs * per_epoch;
  const int64_t warmup = fc.warmup_epochs * per_epoch;

  AdamW opt(m.TrainableParams(), fc.weight_decay);
  RngStream root(fc.seed);
  RngStream order_root = root.Child("order");

  FinetuneResult result;
  result.total_steps = total;
  int64_t step = 0;
  const DecodeSettings epoch_probe{1, fc.ctc_weight, true};
  for (int64_t epoch = 0; epoch < fc.epochs; ++epoch) {
    std::vector<int64_t> order(batches.size());
    for (size_t i = 0; i < order.size(); ++i)
      order[i] = static_cast<int64_t>(i);
    RngStream epoch_rng = order_root.Child("epoch", epoch);
    for (size_t i = order.size(); i > 1; --i) {
      const int64_t j = epoch_rng.UniformInt(static_cast<int64_t>(i));
      std::swap(order[i - 1], order[static_cast<size_t>(j)]);
    }
    double epoch_loss = 0.0;
    for (int64_t b : order) {
      const Batch& batch = batches[static_cast<size_t>(b)];
      const double lr = LrAt(step, total, warmup, fc.peak_lr);
      RngStream step_rng = root.Child("finetune-step", step);
      std::vector<Var> parts;
      for (int64_t n = 0; n < batch.size(); ++n) {
        AVSample s;
        s.video = batch.VideoOf(n);
        s.audio = batch.AudioOf(n);
        s.transcript = batch.transcripts[static_cast<size_t>(n)];
        s.sample_id = batch.sample_ids[static_cast<size_t>(n)];
        RngStream sample_rng = step_rng.Child("sample", n);
        parts.push_back(SampleJointLoss(m, s, true, sample_rng));
      }
      Var sum = parts[0];
      for (size_t i = 1; i < parts.size(); ++i) sum = Add(sum, parts[i]);
      Var loss = Scale(sum, 1.0 / static_cast<double>(parts.size()));
      m.store.ZeroGrads();
      Backward(loss);
      opt.Step(lr);
      epoch_loss += loss->value[0];
      if (log != nullptr)
        *log << "ft step " << (step + 1) << "/" << total << " lr " << lr
             << " loss " << loss->value[0] << "\n";
      ++step;
    }
    FinetuneEpochLog el;
    el.epoch = epoch;
    el.train_loss = epoch_loss / static_cast<double>(per_epoch);
    el.val_loss = DatasetJointLoss(m, val);
    el.val_wer = EvalDataset(m, val, epoch_probe).corpus_wer;
    if (log != nullptr)
      *log << "ft epoch " << epoch << " train " << el.train_loss << " val "
           << el.val_loss << " wer " << el.val_wer << "\n";
    result.epochs.push_back(el);
  }
  const DecodeSettings final_settings{fc.beam_size, fc.ctc_weight, false};
  result.final_eval = EvalDataset(m, val, final_settings);
  if (log != nullptr)
    *log << "ft final beam " << fc.beam_size << " wer "
         << result.final_eval.corpus_wer << "\n";
  return result;
}

// ---------------------------------------------------------------------------
// checkpointing

inline Checkpoint MakeFinetuneCheckpoint(const FinetuneModel& m,
                                         int64_t step) {
  Checkpoint ck;
  ck.meta["kind"] = "finetune";
  ck.meta["step"] = step;
  ck.meta["modality"] = m.modality;
  ck.meta["tokenizer"] = m.tokenizer.inventory();
  ck.meta["config"] = nlohmann::json::parse(RenderConfig(m.cfg));
  ck.meta["config_hash"] = ConfigHashHex(m.cfg);
  StoreParams(ck, m.store);
  return ck;
}

inline FinetuneModel LoadFinetuneModel(const Checkpoint& ck) {
  Require(ck.meta.is_object() && ck.meta.value("kind", "") == "finetune",
          "config-mismatch", "checkpoint is not a fine-tuned model");
  Require(ck.meta.contains("config") && ck.meta.contains("modality") &&
              ck.meta.contains("tokenizer"),
          "malformed-container", "fine-tune checkpoint misses metadata");
  const ExperimentConfig cfg = LoadConfig(ck.meta["config"].dump());
  FinetuneModel m = FinetuneModel::Build(
      cfg, ck.meta["modality"].get<std::string>(),
      Tokenizer::FromInventory(ck.meta["tokenizer"].get<std::string>()),
      nullptr);
  const int64_t loaded = LoadParams(ck, m.store);
  Require(loaded == static_cast<int64_t>(m.store.params().size()),
          "config-mismatch", "checkpoint does not cover the whole model");
  return m;
}

// ---------------------------------------------------------------------------
// self-training

struct SelfTrainOutcome {
  std::vector<AVSample> pseudo;  // unlabelled samples with predicted text
  int64_t dropped = 0;           // pseudo labels too long for their frames
  FinetuneResult result;
};

// decodes every unlabelled sample with the labeller, fine-tunes a fresh
// model on labelled plus pseudo-labelled data. pseudo_dir, when nonempty,
// receives the pseudo dataset in container format with the given provenance.
inline SelfTrainOutcome SelfTrain(
    const FinetuneModel& labeller, const Checkpoint* pretrained,
    const std::vector<AVSample>& labelled,
    const std::vector<AVSample>& unlabelled,
    const std::vector<AVSample>& val, const std::string& modality,
    const DecodeSettings& settings, const std::string& pseudo_dir,
    const std::map<std::string, std::string>& provenance, FinetuneModel* out,
    std::ostream* log) {
  SelfTrainOutcome outcome;
  for (const AVSample& s : unlabelled) {
    const std::string text = DecodeSampleText(labeller, s, settings);
    const std::vector<int64_t> tokens = labeller.tokenizer.Encode(text);
    if (CtcMinFrames(tokens) > s.frames()) {
      // degenerate pseudo label, cannot be aligned during training
      ++outcome.dropped;
      if (log != nullptr)
        *log << "st drop " << s.sample_id << " label too long\n";
      continue;
    }
    AVSample p = s;
    p.transcript = text;
    outcome.pseudo.push_back(std::move(p));
    if (log != nullptr)
      *log << "st label " << s.sample_id << " -> \"" << text << "\"\n";
  }
  if (!pseudo_dir.empty())
    WriteDataset(pseudo_dir, outcome.pseudo, provenance);

  std::vector<AVSample> combined = labelled;
  combined.insert(combined.end(), outcome.pseudo.begin(),
                  outcome.pseudo.end());
  std::vector<std::string> texts;
  for (const AVSample& s : combined) texts.push_back(s.transcript);
  FinetuneModel fresh = FinetuneModel::Build(
      labeller.cfg, modality, Tokenizer::FromTranscripts(texts), pretrained);
  outcome.result = RunFinetune(fresh, combined, val, log);
  if (out != nullptr) *out = std::move(fresh);
  return outcome;
}

}  // namespace avsr

#endif  // AVSR_FINETUNE_HPP_
