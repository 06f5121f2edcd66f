// avsr/nets.hpp

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

// Model building blocks: convolutional frontends (tiny scale, executable),
// pre-norm Transformer encoder with per-block residual-stream capture,
// shallow predictors with mask-token substitution, a causal attention
// decoder with cross-attention, drop path, and analytic parameter counts
// (including the ResNet-18 scale frontends, which are counted but not
// instantiated).

#ifndef AVSR_NETS_HPP_
#define AVSR_NETS_HPP_

#include <cmath>
#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "avsr/autodiff.hpp"
#include "avsr/config.hpp"
#include "avsr/conv.hpp"
#include "avsr/masking.hpp"
#include "avsr/rng.hpp"

namespace avsr {

// ---------------------------------------------------------------------------
// parameter registry

class ParamStore {
 public:
  ParamPtr Create(const std::string& name, Tensor init) {
    Require(!by_name_.count(name), "shape-mismatch",
            "duplicate parameter name " + name);
    auto p = std::make_shared<Param>(name, std::move(init));
    by_name_[name] = p;
    list_.push_back(p);
    return p;
  }
  ParamPtr Get(const std::string& name) const {
    auto it = by_name_.find(name);
    Require(it != by_name_.end(), "config-mismatch",
            "no parameter named " + name);
    return it->second;
  }
  bool Has(const std::string& name) const { return by_name_.count(name) > 0; }
  const std::vector<ParamPtr>& params() const { return list_; }
  std::vector<ParamPtr> WithPrefix(const std::string& prefix) const {
    std::vector<ParamPtr> out;
    for (const ParamPtr& p : list_)
      if (p->name.rfind(prefix, 0) == 0) out.push_back(p);
    return out;
  }
  void ZeroGrads() {
    for (const ParamPtr& p : list_) p->ZeroGrad();
  }
  int64_t TotalParams() const {
    int64_t n = 0;
    for (const ParamPtr& p : list_) n += p->value.numel();
    return n;
  }

 private:
  std::vector<ParamPtr> list_;
  std::unordered_map<std::string, ParamPtr> by_name_;
};

// ---------------------------------------------------------------------------
// shared pieces

inline Tensor SinusoidalPositionEncoding(int64_t t, int64_t d) {
  Tensor pe({t, d});
  for (int64_t pos = 0; pos < t; ++pos)
    for (int64_t i = 0; i < d; ++i) {
      double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(d);
      double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      pe.at(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

inline Tensor CausalAttentionBias(int64_t t) {
  Tensor bias({t, t});
  for (int64_t i = 0; i < t; ++i)
    for (int64_t j = i + 1; j < t; ++j) bias.at(i, j) = -1e30;
  return bias;
}

// training: 0 with probability rate, else 1/(1-rate); eval: 1
inline double DropPathGate(double rate, bool training, RngStream& rng) {
  Require(rate >= 0.0 && rate < 1.0, "parse-error",
          "drop path rate must lie in [0,1)");
  if (!training || rate == 0.0) return 1.0;
  return rng.Bernoulli(rate) ? 0.0 : 1.0 / (1.0 - rate);
}

inline Var DropPath(const Var& branch, double rate, bool training,
                    RngStream& rng) {
  double gate = DropPathGate(rate, training, rng);
  return gate == 1.0 ? branch : Scale(branch, gate);
}

namespace init {

inline Tensor Linear(int64_t dout, int64_t din, RngStream& rng) {
  return Tensor::Gaussian({dout, din}, rng, 0.0, 1.0 / std::sqrt(static_cast<double>(din)));
}

inline Tensor Conv(std::vector<int64_t> shape, RngStream& rng) {
  int64_t fan_in = 1;
  for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  return Tensor::Gaussian(shape, rng, 0.0,
                          std::sqrt(2.0 / static_cast<double>(fan_in)));
}

}  // namespace init

// q from one sequence, k/v from another (equal for self-attention)
struct AttentionNet {
  int64_t dim = 0;     // width of q_in and of the output
  int64_t kv_dim = 0;  // width of kv_in
  int64_t heads = 1;
  ParamPtr wq, bq, wk, bk, wv, bv, wo, bo;

  static AttentionNet Build(ParamStore& store, const std::string& prefix,
                            int64_t dim, int64_t kv_dim, int64_t heads,
                            RngStream& rng) {
    Require(dim % heads == 0, "shape-mismatch",
            "attention width must divide into heads");
    AttentionNet a;
    a.dim = dim;
    a.kv_dim = kv_dim;
    a.heads = heads;
    a.wq = store.Create(prefix + ".wq", init::Linear(dim, dim, rng));
    a.bq = store.Create(prefix + ".bq", Tensor::Zeros({dim}));
    a.wk = store.Create(prefix + ".wk", init::Linear(dim, kv_dim, rng));
    a.bk = store.Create(prefix + ".bk", Tensor::Zeros({dim}));
    a.wv = store.Create(prefix + ".wv", init::Linear(dim, kv_dim, rng));
    a.bv = store.Create(prefix + ".bv", Tensor::Zeros({dim}));
    a.wo = store.Create(prefix + ".wo", init::Linear(dim, dim, rng));
    a.bo = store.Create(prefix + ".bo", Tensor::Zeros({dim}));
    return a;
  }

  Var Forward(const Var& q_in, const Var& kv_in, const Tensor* bias) const {
    Var q = LinearFwd(q_in, FromParam(wq), FromParam(bq));
    Var k = LinearFwd(kv_in, FromParam(wk), FromParam(bk));
    Var v = LinearFwd(kv_in, FromParam(wv), FromParam(bv));
    int64_t dh = dim / heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> parts;
    parts.reserve(static_cast<size_t>(heads));
    for (int64_t h = 0; h < heads; ++h) {
      Var qh = SliceCols(q, h * dh, (h + 1) * dh);
      Var kh = SliceCols(k, h * dh, (h + 1) * dh);
      Var vh = SliceCols(v, h * dh, (h + 1) * dh);
      Var scores = Scale(Matmul(qh, Transpose2D(kh)), scale);
      if (bias) scores = AddConst(scores, *bias);
      parts.push_back(Matmul(SoftmaxRows(scores), vh));
    }
    return LinearFwd(ConcatCols(parts), FromParam(wo), FromParam(bo));
  }
};

// pre-norm block: x + drop(attn(LN(x))), then x + drop(MLP(LN(x)))
struct TransformerBlockNet {
  int64_t dim = 0, mlp = 0;
  AttentionNet attn;
  ParamPtr ln1_g, ln1_b, ln2_g, ln2_b, w1, b1, w2, b2;

  static TransformerBlockNet Build(ParamStore& store, const std::string& prefix,
                                   int64_t dim, int64_t mlp, int64_t heads,
                                   RngStream& rng) {
    TransformerBlockNet t;
    t.dim = dim;
    t.mlp = mlp;
    t.ln1_g = store.Create(prefix + ".ln1.g", Tensor::Full({dim}, 1.0));
    t.ln1_b = store.Create(prefix + ".ln1.b", Tensor::Zeros({dim}));
    t.attn = AttentionNet::Build(store, prefix + ".attn", dim, dim, heads, rng);
    t.ln2_g = store.Create(prefix + ".ln2.g", Tensor::Full({dim}, 1.0));
    t.ln2_b = store.Create(prefix + ".ln2.b", Tensor::Zeros({dim}));
    t.w1 = store.Create(prefix + ".mlp.w1", init::Linear(mlp, dim, rng));
    t.b1 = store.Create(prefix + ".mlp.b1", Tensor::Zeros({mlp}));
    t.w2 = store.Create(prefix + ".mlp.w2", init::Linear(dim, mlp, rng));
    t.b2 = store.Create(prefix + ".mlp.b2", Tensor::Zeros({dim}));
    return t;
  }

  Var Forward(const Var& x, const Tensor* bias, double gate_attn,
              double gate_mlp) const {
    Var h = LayerNormRows(x, FromParam(ln1_g), FromParam(ln1_b));
    Var a = attn.Forward(h, h, bias);
    if (gate_attn != 1.0) a = Scale(a, gate_attn);
    Var y = Add(x, a);
    Var h2 = LayerNormRows(y, FromParam(ln2_g), FromParam(ln2_b));
    Var m = LinearFwd(
        Gelu(LinearFwd(h2, FromParam(w1), FromParam(b1))), FromParam(w2),
        FromParam(b2));
    if (gate_mlp != 1.0) m = Scale(m, gate_mlp);
    return Add(y, m);
  }
};

// ---------------------------------------------------------------------------
// encoder

struct EncoderNet {
  int64_t dim = 0;
  double drop_path_rate = 0.0;
  std::vector<TransformerBlockNet> blocks;
  ParamPtr ln_f_g, ln_f_b;

  static EncoderNet Build(ParamStore& store, const std::string& prefix,
                          const ModelConfig& cfg, RngStream& rng) {
    EncoderNet e;
    e.dim = cfg.attn_dim;
    e.drop_path_rate = cfg.drop_path_rate;
    for (int64_t i = 0; i < cfg.num_blocks; ++i)
      e.blocks.push_back(TransformerBlockNet::Build(
          store, prefix + ".block" + std::to_string(i), cfg.attn_dim,
          cfg.mlp_dim, cfg.num_heads, rng));
    e.ln_f_g = store.Create(prefix + ".ln_f.g", Tensor::Full({cfg.attn_dim}, 1.0));
    e.ln_f_b = store.Create(prefix + ".ln_f.b", Tensor::Zeros({cfg.attn_dim}));
    return e;
  }

  struct Out {
    Var final;
    std::vector<Var> per_block;  // residual stream after each block
  };

  // adds absolute position encoding at the input; per_block entries are
  // taken before the final layer normalization
  Out Forward(const Var& feats, bool training, RngStream& rng,
              bool capture) const {
    Require(feats->value.ndim() == 2 && feats->value.cols() == dim,
            "shape-mismatch", "encoder expects [T, attn_dim] features");
    Out out;
    Var x = AddConst(feats, SinusoidalPositionEncoding(feats->value.rows(), dim));
    for (const TransformerBlockNet& b : blocks) {
      double ga = DropPathGate(drop_path_rate, training, rng);
      double gm = DropPathGate(drop_path_rate, training, rng);
      x = b.Forward(x, nullptr, ga, gm);
      if (capture) out.per_block.push_back(x);
    }
    out.final = LayerNormRows(x, FromParam(ln_f_g), FromParam(ln_f_b));
    return out;
  }
};

// ---------------------------------------------------------------------------
// tiny frontends (the executable scale; ResNet-18 scale is count-only)

struct VideoFrontendTiny {
  ParamPtr stem_w, stem_b, c1_w, c1_b, c2_w, c2_b, sc_w, sc_b, proj_w, proj_b;
  int64_t out_dim = 0;

  static VideoFrontendTiny Build(ParamStore& store, const std::string& prefix,
                                 int64_t attn_dim, RngStream& rng) {
    VideoFrontendTiny f;
    f.out_dim = attn_dim;
    f.stem_w = store.Create(prefix + ".stem.w", init::Conv({8, 1, 3, 5, 5}, rng));
    f.stem_b = store.Create(prefix + ".stem.b", Tensor::Zeros({8}));
    f.c1_w = store.Create(prefix + ".stage.c1.w", init::Conv({16, 8, 3, 3}, rng));
    f.c1_b = store.Create(prefix + ".stage.c1.b", Tensor::Zeros({16}));
    f.c2_w = store.Create(prefix + ".stage.c2.w", init::Conv({16, 16, 3, 3}, rng));
    f.c2_b = store.Create(prefix + ".stage.c2.b", Tensor::Zeros({16}));
    f.sc_w = store.Create(prefix + ".stage.sc.w", init::Conv({16, 8, 1, 1}, rng));
    f.sc_b = store.Create(prefix + ".stage.sc.b", Tensor::Zeros({16}));
    f.proj_w = store.Create(prefix + ".proj.w", init::Linear(attn_dim, 16, rng));
    f.proj_b = store.Create(prefix + ".proj.b", Tensor::Zeros({attn_dim}));
    return f;
  }

  // frames: [T, H, W] with H == W in {88, 96} -> [T, attn_dim]
  Var Forward(const Tensor& frames) const {
    Require(frames.ndim() == 3, "bad-spatial-size", "video must be [T,H,W]");
    int64_t h = frames.dim(1), w = frames.dim(2);
    Require((h == 88 || h == 96) && w == h, "bad-spatial-size",
            "video frontend expects square 88 or 96 pixel frames");
    Tensor as4d({1, frames.dim(0), h, w});
    as4d.data = frames.data;
    Var x = MakeConst(std::move(as4d));
    // 3D stem: temporal context 3, spatial stride 4
    Var stem = Relu(Conv3D(x, FromParam(stem_w), FromParam(stem_b), 1, 4, 4,
                           1, 2, 2));
    Var frames2d = PermuteCTtoTC(stem);  // [T, 8, h/4, w/4]
    // one residual stage, spatial stride 2
    Var main = Conv2D(Relu(Conv2D(frames2d, FromParam(c1_w), FromParam(c1_b),
                                  2, 1)),
                      FromParam(c2_w), FromParam(c2_b), 1, 1);
    Var shortcut = Conv2D(frames2d, FromParam(sc_w), FromParam(sc_b), 2, 0);
    Var stage = Relu(Add(main, shortcut));
    Var pooled = SpatialMeanPool(stage);  // [T, 16]
    return LinearFwd(pooled, FromParam(proj_w), FromParam(proj_b));
  }
};

struct AudioFrontendTiny {
  ParamPtr c1_w, c1_b, c2_w, c2_b, c3_w, c3_b, c4_w, c4_b, proj_w, proj_b;
  int64_t out_dim = 0;

  static AudioFrontendTiny Build(ParamStore& store, const std::string& prefix,
                                 int64_t attn_dim, RngStream& rng) {
    AudioFrontendTiny f;
    f.out_dim = attn_dim;
    f.c1_w = store.Create(prefix + ".c1.w", init::Conv({8, 1, 11}, rng));
    f.c1_b = store.Create(prefix + ".c1.b", Tensor::Zeros({8}));
    f.c2_w = store.Create(prefix + ".c2.w", init::Conv({8, 8, 9}, rng));
    f.c2_b = store.Create(prefix + ".c2.b", Tensor::Zeros({8}));
    f.c3_w = store.Create(prefix + ".c3.w", init::Conv({16, 8, 9}, rng));
    f.c3_b = store.Create(prefix + ".c3.b", Tensor::Zeros({16}));
    f.c4_w = store.Create(prefix + ".c4.w", init::Conv({16, 16, 17}, rng));
    f.c4_b = store.Create(prefix + ".c4.b", Tensor::Zeros({16}));
    f.proj_w = store.Create(prefix + ".proj.w", init::Linear(attn_dim, 16, rng));
    f.proj_b = store.Create(prefix + ".proj.b", Tensor::Zeros({attn_dim}));
    return f;
  }

  // wave: [T_a] with T_a divisible by 640 -> [T_a/640, attn_dim].
  // strides 5*4*4*8 = 640; kernels 2s+1 with padding s keep lengths exact.
  Var Forward(const Tensor& wave) const {
    Require(wave.ndim() == 1, "bad-length", "audio must be a 1-D waveform");
    Require(wave.numel() % kSamplesPerFrame == 0, "bad-length",
            "audio length must be divisible by 640");
    Tensor as2d({1, wave.numel()});
    as2d.data = wave.data;
    Var x = MakeConst(std::move(as2d));
    x = Relu(Conv1D(x, FromParam(c1_w), FromParam(c1_b), 5, 5));
    x = Relu(Conv1D(x, FromParam(c2_w), FromParam(c2_b), 4, 4));
    x = Relu(Conv1D(x, FromParam(c3_w), FromParam(c3_b), 4, 4));
    x = Relu(Conv1D(x, FromParam(c4_w), FromParam(c4_b), 8, 8));
    Var feats = Transpose2D(x);  // [T, 16]
    return LinearFwd(feats, FromParam(proj_w), FromParam(proj_b));
  }
};

// ---------------------------------------------------------------------------
// predictor: mask-token substitution at attn_dim, projections around
// predictor-width blocks

struct PredictorNet {
  int64_t attn_dim = 0, pdim = 0;
  ParamPtr mask_token, in_w, in_b, out_w, out_b, ln_f_g, ln_f_b;
  std::vector<TransformerBlockNet> blocks;

  static int64_t MlpWidth(const ModelConfig& cfg) {
    int64_t w = cfg.predictor_dim * cfg.mlp_dim / cfg.attn_dim;
    return w >= 1 ? w : 1;
  }

  static PredictorNet Build(ParamStore& store, const std::string& prefix,
                            const ModelConfig& cfg, int64_t num_blocks,
                            RngStream& rng) {
    PredictorNet p;
    p.attn_dim = cfg.attn_dim;
    p.pdim = cfg.predictor_dim;
    p.mask_token = store.Create(prefix + ".mask_token",
                                Tensor::Gaussian({cfg.attn_dim}, rng, 0.0, 0.02));
    p.in_w = store.Create(prefix + ".in.w",
                          init::Linear(cfg.predictor_dim, cfg.attn_dim, rng));
    p.in_b = store.Create(prefix + ".in.b", Tensor::Zeros({cfg.predictor_dim}));
    for (int64_t i = 0; i < num_blocks; ++i)
      p.blocks.push_back(TransformerBlockNet::Build(
          store, prefix + ".block" + std::to_string(i), cfg.predictor_dim,
          MlpWidth(cfg), cfg.num_heads, rng));
    p.ln_f_g = store.Create(prefix + ".ln_f.g",
                            Tensor::Full({cfg.predictor_dim}, 1.0));
    p.ln_f_b = store.Create(prefix + ".ln_f.b",
                            Tensor::Zeros({cfg.predictor_dim}));
    p.out_w = store.Create(prefix + ".out.w",
                           init::Linear(cfg.attn_dim, cfg.predictor_dim, rng));
    p.out_b = store.Create(prefix + ".out.b", Tensor::Zeros({cfg.attn_dim}));
    return p;
  }

  // masked positions are replaced by the learned token before position
  // encoding; full-sequence self-attention; output back at attn_dim
  Var Forward(const Var& enc_out, const MaskSpec& mask) const {
    Require(mask.length() == enc_out->value.rows(), "length-mismatch",
            "mask length must equal the encoded sequence length");
    Var x = ReplaceMaskedRows(enc_out, mask.frame_mask, FromParam(mask_token));
    x = AddConst(x, SinusoidalPositionEncoding(x->value.rows(), attn_dim));
    x = LinearFwd(x, FromParam(in_w), FromParam(in_b));
    for (const TransformerBlockNet& b : blocks)
      x = b.Forward(x, nullptr, 1.0, 1.0);
    x = LayerNormRows(x, FromParam(ln_f_g), FromParam(ln_f_b));
    return LinearFwd(x, FromParam(out_w), FromParam(out_b));
  }
};

// ---------------------------------------------------------------------------
// attention decoder

struct DecoderBlockNet {
  AttentionNet self_attn, cross_attn;
  ParamPtr ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b, w1, b1, w2, b2;

  static DecoderBlockNet Build(ParamStore& store, const std::string& prefix,
                               int64_t dim, int64_t enc_dim, int64_t mlp,
                               int64_t heads, RngStream& rng) {
    DecoderBlockNet d;
    d.ln1_g = store.Create(prefix + ".ln1.g", Tensor::Full({dim}, 1.0));
    d.ln1_b = store.Create(prefix + ".ln1.b", Tensor::Zeros({dim}));
    d.self_attn = AttentionNet::Build(store, prefix + ".self", dim, dim, heads, rng);
    d.ln2_g = store.Create(prefix + ".ln2.g", Tensor::Full({dim}, 1.0));
    d.ln2_b = store.Create(prefix + ".ln2.b", Tensor::Zeros({dim}));
    d.cross_attn =
        AttentionNet::Build(store, prefix + ".cross", dim, enc_dim, heads, rng);
    d.ln3_g = store.Create(prefix + ".ln3.g", Tensor::Full({dim}, 1.0));
    d.ln3_b = store.Create(prefix + ".ln3.b", Tensor::Zeros({dim}));
    d.w1 = store.Create(prefix + ".mlp.w1", init::Linear(mlp, dim, rng));
    d.b1 = store.Create(prefix + ".mlp.b1", Tensor::Zeros({mlp}));
    d.w2 = store.Create(prefix + ".mlp.w2", init::Linear(dim, mlp, rng));
    d.b2 = store.Create(prefix + ".mlp.b2", Tensor::Zeros({dim}));
    return d;
  }

  Var Forward(const Var& x, const Var& enc, const Tensor& causal_bias) const {
    Var h = LayerNormRows(x, FromParam(ln1_g), FromParam(ln1_b));
    Var y = Add(x, self_attn.Forward(h, h, &causal_bias));
    Var h2 = LayerNormRows(y, FromParam(ln2_g), FromParam(ln2_b));
    y = Add(y, cross_attn.Forward(h2, enc, nullptr));
    Var h3 = LayerNormRows(y, FromParam(ln3_g), FromParam(ln3_b));
    Var m = LinearFwd(Gelu(LinearFwd(h3, FromParam(w1), FromParam(b1))),
                      FromParam(w2), FromParam(b2));
    return Add(y, m);
  }
};

struct DecoderNet {
  int64_t dim = 0, vocab = 0;
  ParamPtr embed, ln_f_g, ln_f_b, out_w, out_b;
  std::vector<DecoderBlockNet> blocks;

  static DecoderNet Build(ParamStore& store, const std::string& prefix,
                          const FinetuneConfig& cfg, int64_t enc_dim,
                          int64_t vocab, RngStream& rng) {
    DecoderNet d;
    d.dim = cfg.decoder_dim;
    d.vocab = vocab;
    d.embed = store.Create(prefix + ".embed",
                           Tensor::Gaussian({vocab, cfg.decoder_dim}, rng, 0.0,
                                            0.02));
    for (int64_t i = 0; i < cfg.decoder_blocks; ++i)
      d.blocks.push_back(DecoderBlockNet::Build(
          store, prefix + ".block" + std::to_string(i), cfg.decoder_dim,
          enc_dim, cfg.decoder_mlp_dim, cfg.decoder_heads, rng));
    d.ln_f_g = store.Create(prefix + ".ln_f.g",
                            Tensor::Full({cfg.decoder_dim}, 1.0));
    d.ln_f_b = store.Create(prefix + ".ln_f.b",
                            Tensor::Zeros({cfg.decoder_dim}));
    d.out_w = store.Create(prefix + ".out.w",
                           init::Linear(vocab, cfg.decoder_dim, rng));
    d.out_b = store.Create(prefix + ".out.b", Tensor::Zeros({vocab}));
    return d;
  }

  // teacher-forced logits over the next token at every input position
  Var ForwardLogits(const std::vector<int64_t>& tokens_in, const Var& enc) const {
    Require(!tokens_in.empty(), "bad-length", "decoder needs at least one token");
    Var x = EmbeddingLookup(FromParam(embed), tokens_in);
    x = AddConst(x,
                 SinusoidalPositionEncoding(static_cast<int64_t>(tokens_in.size()),
                                            dim));
    Tensor bias = CausalAttentionBias(static_cast<int64_t>(tokens_in.size()));
    for (const DecoderBlockNet& b : blocks) x = b.Forward(x, enc, bias);
    x = LayerNormRows(x, FromParam(ln_f_g), FromParam(ln_f_b));
    return LinearFwd(x, FromParam(out_w), FromParam(out_b));
  }
};

// ---------------------------------------------------------------------------
// analytic parameter counts

namespace counts {

inline int64_t EncoderBlock(int64_t d, int64_t m) {
  // two layer norms, qkvo projections with biases, two-layer MLP
  return 4 * d * d + 2 * d * m + 9 * d + m;
}

inline int64_t Encoder(const ModelConfig& cfg) {
  return cfg.num_blocks * EncoderBlock(cfg.attn_dim, cfg.mlp_dim) +
         2 * cfg.attn_dim;
}

inline int64_t TinyVideoFrontend(int64_t attn_dim) {
  int64_t stem = 8 * 1 * 3 * 5 * 5 + 8;
  int64_t c1 = 16 * 8 * 3 * 3 + 16;
  int64_t c2 = 16 * 16 * 3 * 3 + 16;
  int64_t sc = 16 * 8 * 1 * 1 + 16;
  int64_t proj = attn_dim * 16 + attn_dim;
  return stem + c1 + c2 + sc + proj;
}

inline int64_t TinyAudioFrontend(int64_t attn_dim) {
  int64_t c1 = 8 * 1 * 11 + 8;
  int64_t c2 = 8 * 8 * 9 + 8;
  int64_t c3 = 16 * 8 * 9 + 16;
  int64_t c4 = 16 * 16 * 17 + 16;
  int64_t proj = attn_dim * 16 + attn_dim;
  return c1 + c2 + c3 + c4 + proj;
}

// standard 2D ResNet-18 basic-block trunk (batch norm affine included,
// classifier head excluded)
inline int64_t Resnet18Trunk2D() {
  auto block = [](int64_t cin, int64_t cout, bool down) {
    int64_t n = cin * cout * 9 + 2 * cout + cout * cout * 9 + 2 * cout;
    if (down) n += cin * cout + 2 * cout;
    return n;
  };
  int64_t n = 0;
  n += 2 * block(64, 64, false);
  n += block(64, 128, true) + block(128, 128, false);
  n += block(128, 256, true) + block(256, 256, false);
  n += block(256, 512, true) + block(512, 512, false);
  return n;
}

// 1D variant with kernel size 3
inline int64_t Resnet18Trunk1D() {
  auto block = [](int64_t cin, int64_t cout, bool down) {
    int64_t n = cin * cout * 3 + 2 * cout + cout * cout * 3 + 2 * cout;
    if (down) n += cin * cout + 2 * cout;
    return n;
  };
  int64_t n = 0;
  n += 2 * block(64, 64, false);
  n += block(64, 128, true) + block(128, 128, false);
  n += block(128, 256, true) + block(256, 256, false);
  n += block(256, 512, true) + block(512, 512, false);
  return n;
}

inline int64_t ResnetVideoFrontend(int64_t attn_dim) {
  int64_t stem3d = 64 * 1 * 5 * 7 * 7 + 2 * 64;  // conv without bias + BN
  int64_t proj = 512 * attn_dim + attn_dim;
  return stem3d + Resnet18Trunk2D() + proj;
}

inline int64_t ResnetAudioFrontend(int64_t attn_dim) {
  int64_t stem1d = 64 * 1 * 80 + 2 * 64;
  int64_t proj = 512 * attn_dim + attn_dim;
  return stem1d + Resnet18Trunk1D() + proj;
}

inline int64_t VideoFrontend(const ModelConfig& cfg) {
  return cfg.frontend == "tiny" ? TinyVideoFrontend(cfg.attn_dim)
                                : ResnetVideoFrontend(cfg.attn_dim);
}

inline int64_t AudioFrontend(const ModelConfig& cfg) {
  return cfg.frontend == "tiny" ? TinyAudioFrontend(cfg.attn_dim)
                                : ResnetAudioFrontend(cfg.attn_dim);
}

inline int64_t Predictor(const ModelConfig& cfg, int64_t num_blocks) {
  int64_t d = cfg.attn_dim, p = cfg.predictor_dim;
  int64_t mp = PredictorNet::MlpWidth(cfg);
  int64_t token = d;
  int64_t proj_in = d * p + p;
  int64_t proj_out = p * d + d;
  return token + proj_in + num_blocks * EncoderBlock(p, mp) + 2 * p + proj_out;
}

inline int64_t Decoder(const FinetuneConfig& cfg, int64_t enc_dim,
                       int64_t vocab) {
  int64_t d = cfg.decoder_dim, m = cfg.decoder_mlp_dim;
  int64_t block = 6 * d                      // three layer norms
                  + 4 * d * d + 4 * d        // causal self-attention
                  + 2 * d * d + 2 * d * enc_dim + 4 * d  // cross-attention
                  + 2 * d * m + m + d;       // MLP
  return vocab * d + cfg.decoder_blocks * block + 2 * d + d * vocab + vocab;
}

inline int64_t CtcHead(int64_t enc_dim, int64_t vocab) {
  return enc_dim * vocab + vocab;
}

inline int64_t Fusion(const FinetuneConfig& cfg, int64_t enc_dim) {
  int64_t h = cfg.fusion_hidden;
  return 2 * enc_dim * h + h + h * enc_dim + enc_dim;
}

}  // namespace counts

// component names: video_frontend, audio_frontend, encoder, video_predictor,
// audio_predictor_cross, audio_predictor_within, decoder, ctc_head, fusion.
// "encoder" counts one encoder; students hold one per modality.
inline int64_t CountParams(const ExperimentConfig& cfg,
                           const std::set<std::string>& components,
                           int64_t vocab = 0) {
  int64_t n = 0;
  for (const std::string& c : components) {
    if (c == "video_frontend") n += counts::VideoFrontend(cfg.model);
    else if (c == "audio_frontend") n += counts::AudioFrontend(cfg.model);
    else if (c == "encoder") n += counts::Encoder(cfg.model);
    else if (c == "video_predictor")
      n += counts::Predictor(cfg.model, cfg.model.video_predictor_blocks);
    else if (c == "audio_predictor_cross" || c == "audio_predictor_within")
      n += counts::Predictor(cfg.model, cfg.model.audio_predictor_blocks);
    else if (c == "decoder")
      n += counts::Decoder(cfg.finetune, cfg.model.attn_dim, vocab);
    else if (c == "ctc_head") n += counts::CtcHead(cfg.model.attn_dim, vocab);
    else if (c == "fusion") n += counts::Fusion(cfg.finetune, cfg.model.attn_dim);
    else Fail("unknown-preset", "no countable component named '" + c + "'");
  }
  return n;
}

}  // namespace avsr

#endif  // AVSR_NETS_HPP_
