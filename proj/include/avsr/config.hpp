// avsr/config.hpp

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

// Typed experiment configuration with named model-size presets, strict
// JSON loading (unknown keys fail fast so ablation configs cannot carry
// silent typos), and invariant validation.

#ifndef AVSR_CONFIG_HPP_
#define AVSR_CONFIG_HPP_

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "avsr/error.hpp"
#include "avsr/rng.hpp"

namespace avsr {

struct ModelConfig {
  int64_t num_blocks = 2;
  int64_t attn_dim = 32;
  int64_t num_heads = 4;
  int64_t mlp_dim = 64;
  double drop_path_rate = 0.05;
  int64_t video_predictor_blocks = 1;
  int64_t audio_predictor_blocks = 2;
  int64_t predictor_dim = 32;
  std::string frontend = "tiny";  // tiny | resnet18

  bool operator==(const ModelConfig&) const = default;
};

struct PretrainConfig {
  int64_t epochs = 4;
  int64_t warmup_epochs = 1;
  double peak_lr = 1e-3;
  double weight_decay = 0.04;
  double mask_start_prob_video = 0.2;
  double mask_start_prob_audio = 0.4;
  int64_t mask_span_frames = 3;
  double ema_start = 0.999;
  double ema_end = 1.0;
  double loss_weight_a2v = 1.0;
  double loss_weight_a2a = 2.0;
  int64_t max_frames_per_batch = 2400;
  int64_t seed = 0;
  std::string target_blocks = "all";  // all | last | last6

  bool operator==(const PretrainConfig&) const = default;
};

struct FinetuneConfig {
  double ctc_weight = 0.1;
  int64_t beam_size = 40;
  int64_t decoder_blocks = 2;
  int64_t decoder_dim = 32;
  int64_t decoder_heads = 4;
  int64_t decoder_mlp_dim = 64;
  int64_t fusion_hidden = 64;
  int64_t epochs = 4;
  int64_t warmup_epochs = 1;
  double peak_lr = 1e-3;
  double weight_decay = 0.01;
  int64_t seed = 0;

  bool operator==(const FinetuneConfig&) const = default;
};

// synthetic data generator parameters; section "data" in config files
struct SyntheticSpec {
  int64_t vocab_size = 8;
  double tokens_per_second = 5.0;
  double min_duration = 0.6;
  double max_duration = 2.0;
  double video_noise_std = 0.05;
  double audio_noise_std = 0.05;
  int64_t seed = 0;

  bool operator==(const SyntheticSpec&) const = default;
};

struct ExperimentConfig {
  ModelConfig model;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  SyntheticSpec data;

  bool operator==(const ExperimentConfig&) const = default;
};

inline ModelConfig Preset(const std::string& name) {
  ModelConfig m;
  if (name == "tiny") {
    m.num_blocks = 2;
    m.attn_dim = 32;
    m.num_heads = 4;
    m.mlp_dim = 64;
    m.predictor_dim = 32;
    m.frontend = "tiny";
  } else if (name == "base") {
    m.num_blocks = 12;
    m.attn_dim = 512;
    m.num_heads = 8;
    m.mlp_dim = 2048;
    m.predictor_dim = 512;
    m.frontend = "resnet18";
  } else if (name == "base_plus") {
    m.num_blocks = 12;
    m.attn_dim = 768;
    m.num_heads = 12;
    m.mlp_dim = 3072;
    m.predictor_dim = 512;
    m.frontend = "resnet18";
  } else if (name == "large") {
    m.num_blocks = 24;
    m.attn_dim = 1024;
    m.num_heads = 16;
    m.mlp_dim = 4096;
    m.predictor_dim = 512;
    m.frontend = "resnet18";
  } else {
    Fail("unknown-preset", "no model preset named '" + name + "'");
  }
  return m;
}

// full experiment defaults for a preset; decoder and fusion widths scale
// with the encoder family
inline ExperimentConfig ExperimentPreset(const std::string& name) {
  ExperimentConfig c;
  c.model = Preset(name);
  if (name == "tiny") {
    c.finetune.decoder_blocks = 2;
    c.finetune.decoder_dim = 32;
    c.finetune.decoder_heads = 4;
    c.finetune.decoder_mlp_dim = 64;
    c.finetune.fusion_hidden = 64;
  } else {
    c.finetune.decoder_blocks = 6;
    c.finetune.decoder_dim = 256;
    c.finetune.decoder_heads = 4;
    c.finetune.decoder_mlp_dim = 2048;
    c.finetune.fusion_hidden = 1024;
  }
  return c;
}

inline std::vector<std::string> Validate(const ExperimentConfig& c) {
  std::vector<std::string> r;
  auto bad = [&](const std::string& msg) { r.push_back(msg); };
  const ModelConfig& m = c.model;
  if (m.num_blocks < 1) bad("model.num_blocks must be >= 1");
  if (m.attn_dim < 1) bad("model.attn_dim must be >= 1");
  if (m.num_heads < 1) bad("model.num_heads must be >= 1");
  if (m.mlp_dim < 1) bad("model.mlp_dim must be >= 1");
  if (m.num_heads >= 1 && m.attn_dim % m.num_heads != 0)
    bad("model.attn_dim must be divisible by model.num_heads");
  if (!(m.drop_path_rate >= 0.0 && m.drop_path_rate < 1.0))
    bad("model.drop_path_rate must lie in [0,1)");
  if (m.video_predictor_blocks < 1)
    bad("model.video_predictor_blocks must be >= 1");
  if (m.audio_predictor_blocks < 1)
    bad("model.audio_predictor_blocks must be >= 1");
  if (m.predictor_dim < 1) bad("model.predictor_dim must be >= 1");
  if (m.frontend != "tiny" && m.frontend != "resnet18")
    bad("model.frontend must be 'tiny' or 'resnet18'");

  const PretrainConfig& p = c.pretrain;
  if (p.epochs < 1) bad("pretrain.epochs must be >= 1");
  if (p.warmup_epochs < 0) bad("pretrain.warmup_epochs must be >= 0");
  if (p.warmup_epochs >= p.epochs)
    bad("pretrain.warmup_epochs must be < pretrain.epochs");
  if (!(p.peak_lr > 0.0)) bad("pretrain.peak_lr must be > 0");
  if (p.weight_decay < 0.0) bad("pretrain.weight_decay must be >= 0");
  if (!(p.mask_start_prob_video >= 0.0 && p.mask_start_prob_video <= 1.0))
    bad("pretrain.mask_start_prob_video must lie in [0,1]");
  if (!(p.mask_start_prob_audio >= 0.0 && p.mask_start_prob_audio <= 1.0))
    bad("pretrain.mask_start_prob_audio must lie in [0,1]");
  if (p.mask_span_frames < 1) bad("pretrain.mask_span_frames must be >= 1");
  if (!(p.ema_start <= p.ema_end && p.ema_end <= 1.0))
    bad("pretrain.ema_start <= pretrain.ema_end <= 1 must hold");
  if (p.ema_start < 0.0) bad("pretrain.ema_start must be >= 0");
  if (p.loss_weight_a2v < 0.0) bad("pretrain.loss_weight_a2v must be >= 0");
  if (p.loss_weight_a2a < 0.0) bad("pretrain.loss_weight_a2a must be >= 0");
  if (p.max_frames_per_batch < 1)
    bad("pretrain.max_frames_per_batch must be >= 1");
  if (p.target_blocks != "all" && p.target_blocks != "last" &&
      p.target_blocks != "last6")
    bad("pretrain.target_blocks must be 'all', 'last' or 'last6'");

  const FinetuneConfig& f = c.finetune;
  if (!(f.ctc_weight >= 0.0 && f.ctc_weight <= 1.0))
    bad("finetune.ctc_weight must lie in [0,1]");
  if (f.beam_size < 1) bad("finetune.beam_size must be >= 1");
  if (f.decoder_blocks < 1) bad("finetune.decoder_blocks must be >= 1");
  if (f.decoder_dim < 1) bad("finetune.decoder_dim must be >= 1");
  if (f.decoder_heads < 1) bad("finetune.decoder_heads must be >= 1");
  if (f.decoder_heads >= 1 && f.decoder_dim % f.decoder_heads != 0)
    bad("finetune.decoder_dim must be divisible by finetune.decoder_heads");
  if (f.decoder_mlp_dim < 1) bad("finetune.decoder_mlp_dim must be >= 1");
  if (f.fusion_hidden < 1) bad("finetune.fusion_hidden must be >= 1");
  if (f.epochs < 1) bad("finetune.epochs must be >= 1");
  if (f.warmup_epochs < 0 || f.warmup_epochs >= f.epochs)
    bad("finetune.warmup_epochs must lie in [0, finetune.epochs)");
  if (!(f.peak_lr > 0.0)) bad("finetune.peak_lr must be > 0");
  if (f.weight_decay < 0.0) bad("finetune.weight_decay must be >= 0");

  const SyntheticSpec& d = c.data;
  if (d.vocab_size < 2) bad("data.vocab_size must be >= 2");
  if (!(d.tokens_per_second > 0.0)) bad("data.tokens_per_second must be > 0");
  if (!(d.min_duration > 0.0)) bad("data.min_duration must be > 0");
  if (!(d.max_duration > 0.0)) bad("data.max_duration must be > 0");
  if (d.min_duration > d.max_duration)
    bad("data.min_duration must be <= data.max_duration");
  if (d.video_noise_std < 0.0) bad("data.video_noise_std must be >= 0");
  if (d.audio_noise_std < 0.0) bad("data.audio_noise_std must be >= 0");
  return r;
}

namespace detail {

inline double AsDouble(const nlohmann::json& v, const std::string& path) {
  Require(v.is_number(), "parse-error", path + " must be a number");
  return v.get<double>();
}

inline int64_t AsCount(const nlohmann::json& v, const std::string& path) {
  Require(v.is_number_integer(), "parse-error", path + " must be an integer");
  return v.get<int64_t>();
}

inline std::string AsString(const nlohmann::json& v, const std::string& path) {
  Require(v.is_string(), "parse-error", path + " must be a string");
  return v.get<std::string>();
}

inline void LoadModel(const nlohmann::json& j, ModelConfig& m) {
  for (const auto& [key, v] : j.items()) {
    const std::string path = "model." + key;
    if (key == "preset") continue;  // applied in a pre-pass
    if (key == "num_blocks") m.num_blocks = AsCount(v, path);
    else if (key == "attn_dim") m.attn_dim = AsCount(v, path);
    else if (key == "num_heads") m.num_heads = AsCount(v, path);
    else if (key == "mlp_dim") m.mlp_dim = AsCount(v, path);
    else if (key == "drop_path_rate") m.drop_path_rate = AsDouble(v, path);
    else if (key == "video_predictor_blocks")
      m.video_predictor_blocks = AsCount(v, path);
    else if (key == "audio_predictor_blocks")
      m.audio_predictor_blocks = AsCount(v, path);
    else if (key == "predictor_dim") m.predictor_dim = AsCount(v, path);
    else if (key == "frontend") m.frontend = AsString(v, path);
    else Fail("unknown-key", "unknown config key '" + path + "'");
  }
}

inline void LoadPretrain(const nlohmann::json& j, PretrainConfig& p) {
  for (const auto& [key, v] : j.items()) {
    const std::string path = "pretrain." + key;
    if (key == "epochs") p.epochs = AsCount(v, path);
    else if (key == "warmup_epochs") p.warmup_epochs = AsCount(v, path);
    else if (key == "peak_lr") p.peak_lr = AsDouble(v, path);
    else if (key == "weight_decay") p.weight_decay = AsDouble(v, path);
    else if (key == "mask_start_prob_video")
      p.mask_start_prob_video = AsDouble(v, path);
    else if (key == "mask_start_prob_audio")
      p.mask_start_prob_audio = AsDouble(v, path);
    else if (key == "mask_span_frames") p.mask_span_frames = AsCount(v, path);
    else if (key == "ema_start") p.ema_start = AsDouble(v, path);
    else if (key == "ema_end") p.ema_end = AsDouble(v, path);
    else if (key == "loss_weight_a2v") p.loss_weight_a2v = AsDouble(v, path);
    else if (key == "loss_weight_a2a") p.loss_weight_a2a = AsDouble(v, path);
    else if (key == "max_frames_per_batch")
      p.max_frames_per_batch = AsCount(v, path);
    else if (key == "seed") p.seed = AsCount(v, path);
    else if (key == "target_blocks") p.target_blocks = AsString(v, path);
    else Fail("unknown-key", "unknown config key '" + path + "'");
  }
}

inline void LoadFinetune(const nlohmann::json& j, FinetuneConfig& f) {
  for (const auto& [key, v] : j.items()) {
    const std::string path = "finetune." + key;
    if (key == "ctc_weight") f.ctc_weight = AsDouble(v, path);
    else if (key == "beam_size") f.beam_size = AsCount(v, path);
    else if (key == "decoder_blocks") f.decoder_blocks = AsCount(v, path);
    else if (key == "decoder_dim") f.decoder_dim = AsCount(v, path);
    else if (key == "decoder_heads") f.decoder_heads = AsCount(v, path);
    else if (key == "decoder_mlp_dim") f.decoder_mlp_dim = AsCount(v, path);
    else if (key == "fusion_hidden") f.fusion_hidden = AsCount(v, path);
    else if (key == "epochs") f.epochs = AsCount(v, path);
    else if (key == "warmup_epochs") f.warmup_epochs = AsCount(v, path);
    else if (key == "peak_lr") f.peak_lr = AsDouble(v, path);
    else if (key == "weight_decay") f.weight_decay = AsDouble(v, path);
    else if (key == "seed") f.seed = AsCount(v, path);
    else Fail("unknown-key", "unknown config key '" + path + "'");
  }
}

inline void LoadData(const nlohmann::json& j, SyntheticSpec& d) {
  for (const auto& [key, v] : j.items()) {
    const std::string path = "data." + key;
    if (key == "vocab_size") d.vocab_size = AsCount(v, path);
    else if (key == "tokens_per_second") d.tokens_per_second = AsDouble(v, path);
    else if (key == "min_duration") d.min_duration = AsDouble(v, path);
    else if (key == "max_duration") d.max_duration = AsDouble(v, path);
    else if (key == "video_noise_std") d.video_noise_std = AsDouble(v, path);
    else if (key == "audio_noise_std") d.audio_noise_std = AsDouble(v, path);
    else if (key == "seed") d.seed = AsCount(v, path);
    else Fail("unknown-key", "unknown config key '" + path + "'");
  }
}

}  // namespace detail

// strict load: absent keys default (tiny preset family), unknown keys fail.
// model.preset is applied before any explicit key so overrides win.
inline ExperimentConfig LoadConfig(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    Fail("parse-error", std::string("config is not valid JSON: ") + e.what());
  }
  Require(j.is_object(), "parse-error", "config root must be an object");
  ExperimentConfig c;
  if (j.contains("model") && j["model"].is_object() &&
      j["model"].contains("preset"))
    c = ExperimentPreset(detail::AsString(j["model"]["preset"], "model.preset"));
  for (const auto& [key, v] : j.items()) {
    if (key == "model") {
      Require(v.is_object(), "parse-error", "model must be an object");
      detail::LoadModel(v, c.model);
    } else if (key == "pretrain") {
      Require(v.is_object(), "parse-error", "pretrain must be an object");
      detail::LoadPretrain(v, c.pretrain);
    } else if (key == "finetune") {
      Require(v.is_object(), "parse-error", "finetune must be an object");
      detail::LoadFinetune(v, c.finetune);
    } else if (key == "data") {
      Require(v.is_object(), "parse-error", "data must be an object");
      detail::LoadData(v, c.data);
    } else {
      Fail("unknown-key", "unknown config key '" + key + "'");
    }
  }
  return c;
}

inline std::string RenderConfig(const ExperimentConfig& c) {
  nlohmann::json j;
  j["model"] = {{"num_blocks", c.model.num_blocks},
                {"attn_dim", c.model.attn_dim},
                {"num_heads", c.model.num_heads},
                {"mlp_dim", c.model.mlp_dim},
                {"drop_path_rate", c.model.drop_path_rate},
                {"video_predictor_blocks", c.model.video_predictor_blocks},
                {"audio_predictor_blocks", c.model.audio_predictor_blocks},
                {"predictor_dim", c.model.predictor_dim},
                {"frontend", c.model.frontend}};
  j["pretrain"] = {{"epochs", c.pretrain.epochs},
                   {"warmup_epochs", c.pretrain.warmup_epochs},
                   {"peak_lr", c.pretrain.peak_lr},
                   {"weight_decay", c.pretrain.weight_decay},
                   {"mask_start_prob_video", c.pretrain.mask_start_prob_video},
                   {"mask_start_prob_audio", c.pretrain.mask_start_prob_audio},
                   {"mask_span_frames", c.pretrain.mask_span_frames},
                   {"ema_start", c.pretrain.ema_start},
                   {"ema_end", c.pretrain.ema_end},
                   {"loss_weight_a2v", c.pretrain.loss_weight_a2v},
                   {"loss_weight_a2a", c.pretrain.loss_weight_a2a},
                   {"max_frames_per_batch", c.pretrain.max_frames_per_batch},
                   {"seed", c.pretrain.seed},
                   {"target_blocks", c.pretrain.target_blocks}};
  j["finetune"] = {{"ctc_weight", c.finetune.ctc_weight},
                   {"beam_size", c.finetune.beam_size},
                   {"decoder_blocks", c.finetune.decoder_blocks},
                   {"decoder_dim", c.finetune.decoder_dim},
                   {"decoder_heads", c.finetune.decoder_heads},
                   {"decoder_mlp_dim", c.finetune.decoder_mlp_dim},
                   {"fusion_hidden", c.finetune.fusion_hidden},
                   {"epochs", c.finetune.epochs},
                   {"warmup_epochs", c.finetune.warmup_epochs},
                   {"peak_lr", c.finetune.peak_lr},
                   {"weight_decay", c.finetune.weight_decay},
                   {"seed", c.finetune.seed}};
  j["data"] = {{"vocab_size", c.data.vocab_size},
               {"tokens_per_second", c.data.tokens_per_second},
               {"min_duration", c.data.min_duration},
               {"max_duration", c.data.max_duration},
               {"video_noise_std", c.data.video_noise_std},
               {"audio_noise_std", c.data.audio_noise_std},
               {"seed", c.data.seed}};
  return j.dump(2);
}

inline std::string ConfigHashHex(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(HashString(RenderConfig(c))));
  return std::string(buf);
}

}  // namespace avsr

#endif  // AVSR_CONFIG_HPP_
