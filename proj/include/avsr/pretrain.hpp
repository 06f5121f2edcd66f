// avsr/pretrain.hpp

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

// Masked self-supervised pre-training. Each modality has a student
// (masked input, trained by gradient) and a teacher (unmasked input,
// updated only by an exponential moving average of the student).
// Students predict teacher targets at masked positions through shallow
// predictors: video predicts audio targets; audio predicts both video
// targets and its own modality's targets.

#ifndef AVSR_PRETRAIN_HPP_
#define AVSR_PRETRAIN_HPP_

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "avsr/checkpoint.hpp"
#include "avsr/config.hpp"
#include "avsr/data.hpp"
#include "avsr/masking.hpp"
#include "avsr/nets.hpp"
#include "avsr/optim.hpp"
#include "avsr/rng.hpp"

namespace avsr {

// ---------------------------------------------------------------------------
// teacher momentum schedule: cosine ramp from mu_start at step 0 to mu_end
// at total_steps, with the endpoints pinned exactly

inline double MuAt(int64_t step, int64_t total_steps, double mu_start,
                   double mu_end) {
  Require(total_steps >= 1, "step-out-of-range", "schedule needs >= 1 step");
  Require(step >= 0 && step <= total_steps, "step-out-of-range",
          "momentum step outside the schedule");
  if (step == 0) return mu_start;
  if (step == total_steps) return mu_end;
  double ramp = (std::cos(M_PI * static_cast<double>(step) /
                          static_cast<double>(total_steps)) +
                 1.0) /
                2.0;
  return mu_end - (mu_end - mu_start) * ramp;
}

inline void EmaUpdate(
    const std::vector<std::pair<ParamPtr, ParamPtr>>& student_teacher,
    double mu) {
  Require(mu >= 0.0 && mu <= 1.0, "parse-error", "ema momentum outside [0,1]");
  for (const auto& pair : student_teacher) {
    const Tensor& s = pair.first->value;
    Tensor& t = pair.second->value;
    CheckSameShape(s, t, "ema-update");
    for (int64_t i = 0; i < t.numel(); ++i)
      t[i] = mu * t[i] + (1.0 - mu) * s[i];
  }
}

// ---------------------------------------------------------------------------
// targets

// per-channel normalization over time with population variance; eps only
// guards degenerate channels and must stay far below typical variances so
// normalized channels keep unit variance to well under 1e-3
inline Tensor InstanceNormalize(const Tensor& x, double eps = 1e-8) {
  Require(x.ndim() == 2 && x.rows() >= 1, "shape-mismatch",
          "instance norm expects [T, D]");
  int64_t t = x.rows(), d = x.cols();
  Tensor out(x.shape);
  for (int64_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (int64_t i = 0; i < t; ++i) mean += x.at(i, j);
    mean /= static_cast<double>(t);
    double var = 0.0;
    for (int64_t i = 0; i < t; ++i) {
      double c = x.at(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(t);
    double inv = 1.0 / std::sqrt(var + eps);
    for (int64_t i = 0; i < t; ++i) out.at(i, j) = (x.at(i, j) - mean) * inv;
  }
  return out;
}

// modes: "all" averages every block's residual stream and normalizes;
// "last6" averages the last six (or fewer) blocks and normalizes; "last"
// takes the final layer-normed output without further normalization
inline Tensor ComputeTargets(const EncoderNet::Out& teacher_out,
                             const std::string& mode) {
  if (mode == "last") return teacher_out.final->value;
  Require(!teacher_out.per_block.empty(), "shape-mismatch",
          "target computation needs captured block outputs");
  size_t n = teacher_out.per_block.size();
  size_t take = n;
  if (mode == "last6") take = n < 6 ? n : 6;
  else Require(mode == "all", "parse-error", "unknown target mode " + mode);
  const Tensor& first = teacher_out.per_block[n - take]->value;
  Tensor avg = Tensor::Zeros(first.shape);
  for (size_t b = n - take; b < n; ++b) {
    const Tensor& t = teacher_out.per_block[b]->value;
    for (int64_t i = 0; i < avg.numel(); ++i) avg[i] += t[i];
  }
  for (int64_t i = 0; i < avg.numel(); ++i)
    avg[i] /= static_cast<double>(take);
  return InstanceNormalize(avg);
}

inline Tensor GatherRowsTensor(const Tensor& x, const std::vector<int64_t>& rows) {
  Require(x.ndim() == 2, "shape-mismatch", "row gather expects a matrix");
  Tensor out({static_cast<int64_t>(rows.size()), x.cols()});
  for (size_t r = 0; r < rows.size(); ++r) {
    Require(rows[r] >= 0 && rows[r] < x.rows(), "shape-mismatch",
            "row index out of range");
    for (int64_t j = 0; j < x.cols(); ++j)
      out.at(static_cast<int64_t>(r), j) = x.at(rows[r], j);
  }
  return out;
}

// cosine distance between predictions and detached targets, restricted to
// the masked positions
inline Var CosinePredLoss(const Var& pred, const Tensor& targets,
                          const MaskSpec& mask) {
  Require(mask.any(), "no-masked-positions",
          "prediction loss needs at least one masked frame");
  Require(pred->value.rows() == mask.length() &&
              targets.rows() == mask.length(),
          "length-mismatch", "prediction, targets, and mask disagree");
  std::vector<int64_t> idx = mask.MaskedIndices();
  return CosineDistanceLoss(GatherRows(pred, idx),
                            GatherRowsTensor(targets, idx));
}

// ---------------------------------------------------------------------------
// model

struct PretrainModel {
  ExperimentConfig cfg;
  ParamStore store;
  VideoFrontendTiny sv_fe;
  AudioFrontendTiny sa_fe;
  EncoderNet sv_enc, sa_enc;
  PredictorNet v_pred;         // video student toward audio targets
  PredictorNet a_pred_cross;   // audio student toward video targets
  PredictorNet a_pred_within;  // audio student toward audio targets
  VideoFrontendTiny tv_fe;
  AudioFrontendTiny ta_fe;
  EncoderNet tv_enc, ta_enc;

  static PretrainModel Build(const ExperimentConfig& cfg) {
    Require(cfg.model.frontend == "tiny", "config-mismatch",
            "only the tiny frontend is instantiable; resnet18 is count-only");
    PretrainModel m;
    m.cfg = cfg;
    RngStream rng = RngStream(static_cast<uint64_t>(cfg.pretrain.seed))
                        .Child("init");
    m.sv_fe = VideoFrontendTiny::Build(m.store, "student.video.frontend",
                                       cfg.model.attn_dim, rng);
    m.sv_enc = EncoderNet::Build(m.store, "student.video.encoder", cfg.model, rng);
    m.sa_fe = AudioFrontendTiny::Build(m.store, "student.audio.frontend",
                                       cfg.model.attn_dim, rng);
    m.sa_enc = EncoderNet::Build(m.store, "student.audio.encoder", cfg.model, rng);
    m.v_pred = PredictorNet::Build(m.store, "student.video.predictor", cfg.model,
                                   cfg.model.video_predictor_blocks, rng);
    m.a_pred_cross =
        PredictorNet::Build(m.store, "student.audio.predictor_cross", cfg.model,
                            cfg.model.audio_predictor_blocks, rng);
    m.a_pred_within =
        PredictorNet::Build(m.store, "student.audio.predictor_within",
                            cfg.model, cfg.model.audio_predictor_blocks, rng);
    m.tv_fe = VideoFrontendTiny::Build(m.store, "teacher.video.frontend",
                                       cfg.model.attn_dim, rng);
    m.tv_enc = EncoderNet::Build(m.store, "teacher.video.encoder", cfg.model, rng);
    m.ta_fe = AudioFrontendTiny::Build(m.store, "teacher.audio.frontend",
                                       cfg.model.attn_dim, rng);
    m.ta_enc = EncoderNet::Build(m.store, "teacher.audio.encoder", cfg.model, rng);
    // teachers start as exact copies of their students
    for (const auto& pair : m.EmaPairs()) pair.second->value = pair.first->value;
    return m;
  }

  std::vector<ParamPtr> StudentParams() const {
    return store.WithPrefix("student.");
  }
  std::vector<ParamPtr> TeacherParams() const {
    return store.WithPrefix("teacher.");
  }

  // (student, teacher) pairs; predictors have no teacher counterpart
  std::vector<std::pair<ParamPtr, ParamPtr>> EmaPairs() const {
    std::vector<std::pair<ParamPtr, ParamPtr>> pairs;
    for (const ParamPtr& t : store.WithPrefix("teacher.")) {
      std::string sname = "student." + t->name.substr(std::string("teacher.").size());
      pairs.emplace_back(store.Get(sname), t);
    }
    return pairs;
  }
};

// ---------------------------------------------------------------------------
// diagnostics

struct ChannelStats {
  double max_abs_mean = 0.0;
  double max_abs_var_err = 0.0;  // |variance - 1|
};

inline ChannelStats TargetChannelStats(const Tensor& targets) {
  Require(targets.ndim() == 2 && targets.rows() >= 1, "shape-mismatch",
          "channel stats expect [T, D]");
  ChannelStats st;
  int64_t t = targets.rows(), d = targets.cols();
  for (int64_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (int64_t i = 0; i < t; ++i) mean += targets.at(i, j);
    mean /= static_cast<double>(t);
    double var = 0.0;
    for (int64_t i = 0; i < t; ++i) {
      double c = targets.at(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(t);
    st.max_abs_mean = std::max(st.max_abs_mean, std::abs(mean));
    st.max_abs_var_err = std::max(st.max_abs_var_err, std::abs(var - 1.0));
  }
  return st;
}

// mean cosine similarity over distinct row pairs; near 1 signals collapse
inline double MeanPairwiseCosine(const Tensor& rows) {
  Require(rows.ndim() == 2, "shape-mismatch", "expects [N, D]");
  int64_t n = rows.rows(), d = rows.cols();
  if (n < 2) return 0.0;
  const double eps = 1e-12;
  std::vector<double> norms(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < d; ++j) s += rows.at(i, j) * rows.at(i, j);
    norms[static_cast<size_t>(i)] = std::sqrt(s + eps);
  }
  double acc = 0.0;
  int64_t pairs = 0;
  for (int64_t a = 0; a < n; ++a)
    for (int64_t b = a + 1; b < n; ++b) {
      double dot = 0.0;
      for (int64_t j = 0; j < d; ++j) dot += rows.at(a, j) * rows.at(b, j);
      acc += dot / (norms[static_cast<size_t>(a)] * norms[static_cast<size_t>(b)]);
      ++pairs;
    }
  return acc / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// one optimization step

struct LossReport {
  double v2a = 0.0, a2v = 0.0, a2a = 0.0;
  double video_loss = 0.0, audio_loss = 0.0, total = 0.0;
  int64_t masked_video = 0, masked_audio = 0;
  double lr = 0.0, mu = 0.0;
  double target_mean_abs = 0.0;    // worst |channel mean| among step targets
  double target_var_err = 0.0;     // worst |channel variance - 1|
  double pred_pairwise_cos = 0.0;  // diversity of video-side predictions
};

inline Var CombineLossVars(const Var& v2a, const Var& a2v, const Var& a2a,
                           double w_a2v, double w_a2a) {
  return Add(v2a, Add(Scale(a2v, w_a2v), Scale(a2a, w_a2a)));
}

inline void FillCombined(LossReport& r, const PretrainConfig& cfg) {
  r.video_loss = r.v2a;
  r.audio_loss = cfg.loss_weight_a2v * r.a2v + cfg.loss_weight_a2a * r.a2a;
  r.total = r.video_loss + r.audio_loss;
}

struct StepContext {
  int64_t step = 0;          // 0-based global step
  int64_t total_steps = 1;   // schedule length
  int64_t warmup_steps = 0;  // linear warmup portion of the schedule
  bool training = true;      // augmentation, drop path
  bool update = true;        // backward, optimizer, ema
};

namespace detail {

// guarantee a non-empty mask so every sample contributes to the loss
inline void ForceNonEmpty(MaskSpec& mask, int64_t span, RngStream& rng) {
  if (mask.any()) return;
  int64_t t = mask.length();
  int64_t start = rng.UniformInt(t);
  for (int64_t i = start; i < t && i < start + span; ++i)
    mask.frame_mask[static_cast<size_t>(i)] = 1;
}

inline Tensor ZeroMaskedVideo(const Tensor& frames, const MaskSpec& mask) {
  Tensor out = frames;
  int64_t plane = frames.dim(1) * frames.dim(2);
  for (int64_t i = 0; i < frames.dim(0); ++i)
    if (mask.frame_mask[static_cast<size_t>(i)])
      for (int64_t p = 0; p < plane; ++p) out[i * plane + p] = 0.0;
  return out;
}

inline Tensor ZeroMaskedAudio(const Tensor& wave, const MaskSpec& mask) {
  Tensor out = wave;
  for (int64_t i = 0; i < mask.length(); ++i)
    if (mask.frame_mask[static_cast<size_t>(i)])
      for (int64_t s = i * kSamplesPerFrame; s < (i + 1) * kSamplesPerFrame; ++s)
        out[s] = 0.0;
  return out;
}

}  // namespace detail

// runs students on masked augmented inputs, teachers on the unmasked view,
// forms targets, applies the combined loss, and (when updating) steps the
// optimizer and then the teacher EMA
inline LossReport PretrainStep(PretrainModel& m, AdamW& opt, const Batch& batch,
                               const StepContext& ctx) {
  const PretrainConfig& pc = m.cfg.pretrain;
  Require(batch.size() >= 1, "bad-length", "empty batch");
  RngStream step_rng = RngStream(static_cast<uint64_t>(pc.seed))
                           .Child("pretrain-step", ctx.step);

  Var sum_v2a, sum_a2v, sum_a2a;
  LossReport report;
  std::vector<std::vector<double>> pred_rows;  // for the diversity metric

  for (int64_t n = 0; n < batch.size(); ++n) {
    RngStream sample_rng = step_rng.Child("sample", n);
    Tensor video = batch.VideoOf(n);
    Tensor audio = batch.AudioOf(n);
    int64_t t = video.dim(0);

    RngStream vmask_rng = sample_rng.Child("video-mask");
    RngStream amask_rng = sample_rng.Child("audio-mask");
    MaskSpec vmask = SampleMask(t, pc.mask_start_prob_video,
                                pc.mask_span_frames, vmask_rng);
    MaskSpec amask = SampleMask(t, pc.mask_start_prob_audio,
                                pc.mask_span_frames, amask_rng);
    RngStream force_rng = sample_rng.Child("force");
    detail::ForceNonEmpty(vmask, pc.mask_span_frames, force_rng);
    detail::ForceNonEmpty(amask, pc.mask_span_frames, force_rng);
    report.masked_video += static_cast<int64_t>(vmask.MaskedIndices().size());
    report.masked_audio += static_cast<int64_t>(amask.MaskedIndices().size());

    RngStream aug_rng = sample_rng.Child("augment");
    Tensor view = ctx.training ? AugmentVideo(video, aug_rng)
                               : AugmentVideoWith(video, false, 4, 4);

    // teachers observe the same view, unmasked, without drop path
    RngStream null_rng(0);
    auto tv = m.tv_enc.Forward(m.tv_fe.Forward(view), false, null_rng, true);
    auto ta = m.ta_enc.Forward(m.ta_fe.Forward(audio), false, null_rng, true);
    Tensor video_targets = ComputeTargets(tv, pc.target_blocks);
    Tensor audio_targets = ComputeTargets(ta, pc.target_blocks);
    ChannelStats vs = TargetChannelStats(video_targets);
    ChannelStats as = TargetChannelStats(audio_targets);
    report.target_mean_abs = std::max(
        report.target_mean_abs, std::max(vs.max_abs_mean, as.max_abs_mean));
    report.target_var_err = std::max(
        report.target_var_err, std::max(vs.max_abs_var_err, as.max_abs_var_err));

    RngStream drop_rng = sample_rng.Child("drop");
    Var sv = m.sv_enc
                 .Forward(m.sv_fe.Forward(detail::ZeroMaskedVideo(view, vmask)),
                          ctx.training, drop_rng, false)
                 .final;
    Var sa = m.sa_enc
                 .Forward(m.sa_fe.Forward(detail::ZeroMaskedAudio(audio, amask)),
                          ctx.training, drop_rng, false)
                 .final;

    Var v_pred_out = m.v_pred.Forward(sv, vmask);
    Var v2a = CosinePredLoss(v_pred_out, audio_targets, vmask);
    Var a2v = CosinePredLoss(m.a_pred_cross.Forward(sa, amask), video_targets,
                             amask);
    Var a2a = CosinePredLoss(m.a_pred_within.Forward(sa, amask), audio_targets,
                             amask);

    for (int64_t i : vmask.MaskedIndices()) {
      std::vector<double> row(static_cast<size_t>(v_pred_out->value.cols()));
      for (int64_t j = 0; j < v_pred_out->value.cols(); ++j)
        row[static_cast<size_t>(j)] = v_pred_out->value.at(i, j);
      pred_rows.push_back(std::move(row));
    }

    sum_v2a = sum_v2a ? Add(sum_v2a, v2a) : v2a;
    sum_a2v = sum_a2v ? Add(sum_a2v, a2v) : a2v;
    sum_a2a = sum_a2a ? Add(sum_a2a, a2a) : a2a;
  }

  double inv_n = 1.0 / static_cast<double>(batch.size());
  Var v2a = Scale(sum_v2a, inv_n);
  Var a2v = Scale(sum_a2v, inv_n);
  Var a2a = Scale(sum_a2a, inv_n);
  Var total = CombineLossVars(v2a, a2v, a2a, pc.loss_weight_a2v,
                              pc.loss_weight_a2a);

  report.v2a = v2a->value[0];
  report.a2v = a2v->value[0];
  report.a2a = a2a->value[0];
  FillCombined(report, pc);

  if (!pred_rows.empty()) {
    Tensor rows({static_cast<int64_t>(pred_rows.size()),
                 static_cast<int64_t>(pred_rows[0].size())});
    for (size_t r = 0; r < pred_rows.size(); ++r)
      for (size_t j = 0; j < pred_rows[r].size(); ++j)
        rows.at(static_cast<int64_t>(r), static_cast<int64_t>(j)) =
            pred_rows[r][j];
    report.pred_pairwise_cos = MeanPairwiseCosine(rows);
  }

  report.lr = LrAt(ctx.step, ctx.total_steps, ctx.warmup_steps, pc.peak_lr);
  report.mu = MuAt(ctx.step, ctx.total_steps, pc.ema_start, pc.ema_end);

  if (ctx.update) {
    m.store.ZeroGrads();
    Backward(total);
    opt.Step(report.lr);
    EmaUpdate(m.EmaPairs(), report.mu);
  }
  return report;
}

// ---------------------------------------------------------------------------
// training loop

struct PretrainResult {
  std::vector<LossReport> history;
  int64_t total_steps = 0;
};

inline PretrainResult RunPretraining(PretrainModel& m,
                                     const std::vector<AVSample>& train,
                                     std::ostream* log = nullptr) {
  const PretrainConfig& pc = m.cfg.pretrain;
  Require(!train.empty(), "bad-length", "no training samples");
  std::vector<AVSample> pieces;
  for (const AVSample& s : train)
    for (AVSample& piece : SplitLong(s)) pieces.push_back(std::move(piece));
  std::vector<Batch> batches = MakeBatches(pieces, pc.max_frames_per_batch);
  int64_t per_epoch = static_cast<int64_t>(batches.size());
  int64_t total = pc.epochs * per_epoch;
  int64_t warmup = pc.warmup_epochs * per_epoch;

  AdamW opt(m.StudentParams(), pc.weight_decay);
  RngStream order_rng = RngStream(static_cast<uint64_t>(pc.seed)).Child("order");

  PretrainResult result;
  result.total_steps = total;
  for (int64_t epoch = 0; epoch < pc.epochs; ++epoch) {
    std::vector<int64_t> order(static_cast<size_t>(per_epoch));
    for (int64_t i = 0; i < per_epoch; ++i) order[static_cast<size_t>(i)] = i;
    RngStream erng = order_rng.Child("epoch", epoch);
    for (int64_t i = per_epoch - 1; i > 0; --i) {
      int64_t j = erng.UniformInt(i + 1);
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    for (int64_t b = 0; b < per_epoch; ++b) {
      StepContext ctx;
      ctx.step = epoch * per_epoch + b;
      ctx.total_steps = total;
      ctx.warmup_steps = warmup;
      LossReport r = PretrainStep(
          m, opt, batches[static_cast<size_t>(order[static_cast<size_t>(b)])],
          ctx);
      result.history.push_back(r);
      if (log)
        *log << "step " << ctx.step + 1 << "/" << total << " lr " << r.lr
             << " mu " << r.mu << " v2a " << r.v2a << " a2v " << r.a2v
             << " a2a " << r.a2a << " total " << r.total << "\n";
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// checkpointing

inline Checkpoint MakePretrainCheckpoint(const PretrainModel& m, int64_t step,
                                         double mu) {
  Checkpoint ck;
  ck.meta = {{"kind", "pretrain"},
             {"step", step},
             {"mu", mu},
             {"config", nlohmann::json::parse(RenderConfig(m.cfg))},
             {"config_hash", ConfigHashHex(m.cfg)}};
  StoreParams(ck, m.store);
  return ck;
}

// copies a pretrained student's frontend and encoder into another store
// under dst_prefix; modality is "video" or "audio"
inline int64_t LoadPretrainedEncoder(const Checkpoint& ck, ParamStore& dst,
                                     const std::string& modality,
                                     const std::string& dst_prefix) {
  Require(modality == "video" || modality == "audio", "parse-error",
          "modality must be video or audio");
  int64_t n = 0;
  n += LoadParams(ck, dst, "student." + modality + ".frontend",
                  dst_prefix + ".frontend");
  n += LoadParams(ck, dst, "student." + modality + ".encoder",
                  dst_prefix + ".encoder");
  Require(n > 0, "config-mismatch",
          "checkpoint holds no student parameters for " + modality);
  return n;
}

}  // namespace avsr

#endif  // AVSR_PRETRAIN_HPP_
