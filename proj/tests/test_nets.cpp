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

#include <cmath>
#include <set>
#include <vector>

#include "avsr/autodiff.hpp"
#include "avsr/config.hpp"
#include "avsr/nets.hpp"
#include "avsr/rng.hpp"
#include "avsr/tensor.hpp"

using Catch::Approx;

namespace {

using namespace avsr;

// central-difference check of d(loss)/d(param[idx]) against the analytic
// gradient accumulated by Backward
double ParamFiniteDiff(const std::function<Var()>& loss_fn, const ParamPtr& p,
                       size_t idx, double eps = 1e-5) {
  double keep = p->value[static_cast<int64_t>(idx)];
  p->value[static_cast<int64_t>(idx)] = keep + eps;
  double up = loss_fn()->value[0];
  p->value[static_cast<int64_t>(idx)] = keep - eps;
  double dn = loss_fn()->value[0];
  p->value[static_cast<int64_t>(idx)] = keep;
  return (up - dn) / (2.0 * eps);
}

Tensor RandTensor(std::vector<int64_t> shape, RngStream& rng, double std = 1.0) {
  return Tensor::Gaussian(std::move(shape), rng, 0.0, std);
}

}  // namespace

TEST_CASE("param store registers, fetches, and orders parameters") {
  ParamStore store;
  auto a = store.Create("x.a", Tensor::Zeros({2, 3}));
  auto b = store.Create("x.b", Tensor::Zeros({4}));
  auto c = store.Create("y.a", Tensor::Zeros({5}));
  REQUIRE(store.TotalParams() == 15);
  REQUIRE(store.Get("x.b") == b);
  REQUIRE(store.Has("y.a"));
  REQUIRE_FALSE(store.Has("y.b"));
  auto xs = store.WithPrefix("x.");
  REQUIRE(xs.size() == 2);
  REQUIRE(xs[0] == a);
  REQUIRE(xs[1] == b);
  REQUIRE(store.params().size() == 3);
  REQUIRE(store.params()[2] == c);
  REQUIRE_THROWS_AS(store.Create("x.a", Tensor::Zeros({1})), avsr::Error);
  REQUIRE_THROWS_AS(store.Get("missing"), avsr::Error);

  a->grad = Tensor::Full({2, 3}, 7.0);
  store.ZeroGrads();
  for (double g : a->grad.data) REQUIRE(g == 0.0);
}

TEST_CASE("sinusoidal position encoding matches the reference formula") {
  Tensor pe = SinusoidalPositionEncoding(5, 8);
  REQUIRE(pe.at(0, 0) == 0.0);
  REQUIRE(pe.at(0, 1) == 1.0);
  // position 3, pair index 1: angle = 3 / 10000^(2/8)
  double angle = 3.0 / std::pow(10000.0, 2.0 / 8.0);
  REQUIRE(pe.at(3, 2) == Approx(std::sin(angle)).margin(1e-12));
  REQUIRE(pe.at(3, 3) == Approx(std::cos(angle)).margin(1e-12));
  // values bounded by 1
  for (double v : pe.data) REQUIRE(std::abs(v) <= 1.0);
}

TEST_CASE("drop path gate statistics and eval behaviour") {
  RngStream rng(99);
  REQUIRE(DropPathGate(0.0, true, rng) == 1.0);
  REQUIRE(DropPathGate(0.3, false, rng) == 1.0);
  int zeros = 0;
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double g = DropPathGate(0.3, true, rng);
    REQUIRE((g == 0.0 || g == Approx(1.0 / 0.7)));
    if (g == 0.0) ++zeros;
    sum += g;
  }
  double zero_frac = static_cast<double>(zeros) / n;
  REQUIRE(zero_frac == Approx(0.3).margin(0.02));
  // expectation-preserving scaling
  REQUIRE(sum / n == Approx(1.0).margin(0.03));
  REQUIRE_THROWS_AS(DropPathGate(1.0, true, rng), avsr::Error);
}

TEST_CASE("attention with zero queries averages values uniformly") {
  ParamStore store;
  RngStream rng(3);
  auto att = AttentionNet::Build(store, "att", 2, 2, 1, rng);
  // zero q path -> uniform softmax; k irrelevant; wo = identity, wv = identity
  for (auto& p : store.params()) p->value = Tensor::Zeros(p->value.shape);
  att.wv->value.at(0, 0) = 1.0;
  att.wv->value.at(1, 1) = 1.0;
  att.wo->value.at(0, 0) = 1.0;
  att.wo->value.at(1, 1) = 1.0;

  Tensor x({3, 2});
  x.data = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  Var out = att.Forward(MakeConst(x), MakeConst(x), nullptr);
  REQUIRE(out->value.at(0, 0) == Approx(3.0).margin(1e-12));
  REQUIRE(out->value.at(0, 1) == Approx(4.0).margin(1e-12));
  REQUIRE(out->value.at(2, 0) == Approx(3.0).margin(1e-12));

  // causal bias restricts row 0 to position 0 only
  Tensor bias = CausalAttentionBias(3);
  Var causal = att.Forward(MakeConst(x), MakeConst(x), &bias);
  REQUIRE(causal->value.at(0, 0) == Approx(1.0).margin(1e-12));
  REQUIRE(causal->value.at(0, 1) == Approx(2.0).margin(1e-12));
  // row 1 averages positions 0 and 1
  REQUIRE(causal->value.at(1, 0) == Approx(2.0).margin(1e-12));
}

TEST_CASE("multi-head attention is permutation of head slices, gradcheck") {
  ParamStore store;
  RngStream rng(11);
  auto att = AttentionNet::Build(store, "att", 4, 4, 2, rng);
  Tensor x = RandTensor({3, 4}, rng, 0.7);

  auto loss_fn = [&]() {
    Var out = att.Forward(MakeConst(x), MakeConst(x), nullptr);
    return MeanAll(Mul(out, out));
  };
  Var loss = loss_fn();
  Backward(loss);
  for (const ParamPtr& p : {att.wq, att.wk, att.wv, att.wo, att.bq, att.bo}) {
    size_t idx = p->value.numel() > 3 ? 3 : 0;
    double num = ParamFiniteDiff(loss_fn, p, idx);
    double ana = p->grad[static_cast<int64_t>(idx)];
    REQUIRE(ana == Approx(num).margin(1e-6 + 1e-4 * std::abs(num)));
  }
}

TEST_CASE("tiny video frontend maps frames to attn_dim features") {
  ParamStore store;
  RngStream rng(5);
  auto fe = VideoFrontendTiny::Build(store, "vf", 32, rng);
  REQUIRE(store.TotalParams() == 4784);
  REQUIRE(store.TotalParams() == counts::TinyVideoFrontend(32));

  Tensor frames96 = RandTensor({2, 96, 96}, rng, 0.5);
  Var out96 = fe.Forward(frames96);
  REQUIRE(out96->value.shape == std::vector<int64_t>({2, 32}));

  Tensor frames88 = RandTensor({3, 88, 88}, rng, 0.5);
  Var out88 = fe.Forward(frames88);
  REQUIRE(out88->value.shape == std::vector<int64_t>({3, 32}));

  Tensor bad = RandTensor({2, 90, 90}, rng, 0.5);
  REQUIRE_THROWS_AS(fe.Forward(bad), avsr::Error);
  try {
    fe.Forward(bad);
  } catch (const avsr::Error& e) {
    REQUIRE(e.kind() == "bad-spatial-size");
  }
}

TEST_CASE("tiny audio frontend downsamples by exactly 640") {
  ParamStore store;
  RngStream rng(6);
  auto fe = AudioFrontendTiny::Build(store, "af", 32, rng);
  REQUIRE(store.TotalParams() == 6760);
  REQUIRE(store.TotalParams() == counts::TinyAudioFrontend(32));

  Tensor wave = RandTensor({640 * 4}, rng, 0.3);
  Var out = fe.Forward(wave);
  REQUIRE(out->value.shape == std::vector<int64_t>({4, 32}));

  Tensor bad = RandTensor({641}, rng, 0.3);
  REQUIRE_THROWS_AS(fe.Forward(bad), avsr::Error);
  try {
    fe.Forward(bad);
  } catch (const avsr::Error& e) {
    REQUIRE(e.kind() == "bad-length");
  }
}

TEST_CASE("encoder preserves length, captures every block, final is LN of last") {
  ParamStore store;
  RngStream rng(7);
  ModelConfig cfg = Preset("tiny");
  auto enc = EncoderNet::Build(store, "enc", cfg, rng);
  REQUIRE(store.TotalParams() == 17152);
  REQUIRE(store.TotalParams() == counts::Encoder(cfg));

  Tensor feats = RandTensor({5, 32}, rng, 1.0);
  RngStream fwd(1);
  auto out = enc.Forward(MakeConst(feats), false, fwd, true);
  REQUIRE(out.final->value.shape == std::vector<int64_t>({5, 32}));
  REQUIRE(out.per_block.size() == 2);
  for (const Var& b : out.per_block)
    REQUIRE(b->value.shape == std::vector<int64_t>({5, 32}));

  // final output equals layer norm applied to the last captured block
  Var relns = LayerNormRows(MakeConst(out.per_block.back()->value),
                            FromParam(enc.ln_f_g), FromParam(enc.ln_f_b));
  for (int64_t i = 0; i < relns->value.numel(); ++i)
    REQUIRE(relns->value[i] == Approx(out.final->value[i]).margin(1e-12));

  RngStream fwd2(1);
  auto nocap = enc.Forward(MakeConst(feats), false, fwd2, false);
  REQUIRE(nocap.per_block.empty());
  for (int64_t i = 0; i < nocap.final->value.numel(); ++i)
    REQUIRE(nocap.final->value[i] == out.final->value[i]);
}

TEST_CASE("encoder drop path zeroes whole residual branches in training") {
  ParamStore store;
  RngStream rng(8);
  ModelConfig cfg = Preset("tiny");
  cfg.drop_path_rate = 0.999999;  // every branch drops almost surely
  auto enc = EncoderNet::Build(store, "enc", cfg, rng);
  Tensor feats = RandTensor({4, 32}, rng, 1.0);

  RngStream fwd(2);
  auto dropped = enc.Forward(MakeConst(feats), true, fwd, false);
  // with all branches dropped the pre-LN stream is just input + positions
  Tensor expect = feats;
  Tensor pe = SinusoidalPositionEncoding(4, 32);
  for (int64_t i = 0; i < expect.numel(); ++i) expect[i] += pe[i];
  Var ln = LayerNormRows(MakeConst(expect), FromParam(enc.ln_f_g),
                         FromParam(enc.ln_f_b));
  for (int64_t i = 0; i < ln->value.numel(); ++i)
    REQUIRE(ln->value[i] == Approx(dropped.final->value[i]).margin(1e-9));

  // eval mode ignores the rate entirely
  RngStream fwd2(3);
  auto eval1 = enc.Forward(MakeConst(feats), false, fwd2, false);
  RngStream fwd3(4);
  cfg.drop_path_rate = 0.0;
  ParamStore store2;
  RngStream rng2(8);
  auto enc2 = EncoderNet::Build(store2, "enc", cfg, rng2);
  auto eval2 = enc2.Forward(MakeConst(feats), true, fwd3, false);
  for (int64_t i = 0; i < eval1.final->value.numel(); ++i)
    REQUIRE(eval1.final->value[i] == Approx(eval2.final->value[i]).margin(1e-12));
}

TEST_CASE("predictor substitutes the learned token at masked positions") {
  ParamStore store;
  RngStream rng(9);
  ModelConfig cfg = Preset("tiny");
  auto pred = PredictorNet::Build(store, "pred", cfg, 1, rng);
  REQUIRE(store.TotalParams() == counts::Predictor(cfg, 1));

  Tensor enc_a = RandTensor({4, 32}, rng, 1.0);
  Tensor enc_b = RandTensor({4, 32}, rng, 1.0);
  MaskSpec all_masked;
  all_masked.frame_mask = {1, 1, 1, 1};
  // fully masked input erases all dependence on the encoder output
  Var out_a = pred.Forward(MakeConst(enc_a), all_masked);
  Var out_b = pred.Forward(MakeConst(enc_b), all_masked);
  REQUIRE(out_a->value.shape == std::vector<int64_t>({4, 32}));
  for (int64_t i = 0; i < out_a->value.numel(); ++i)
    REQUIRE(out_a->value[i] == out_b->value[i]);

  MaskSpec none;
  none.frame_mask = {0, 0, 0, 0};
  Var clean_a = pred.Forward(MakeConst(enc_a), none);
  Var clean_b = pred.Forward(MakeConst(enc_b), none);
  bool differ = false;
  for (int64_t i = 0; i < clean_a->value.numel(); ++i)
    if (clean_a->value[i] != clean_b->value[i]) differ = true;
  REQUIRE(differ);

  MaskSpec wrong;
  wrong.frame_mask = {1, 0};
  REQUIRE_THROWS_AS(pred.Forward(MakeConst(enc_a), wrong), avsr::Error);
}

TEST_CASE("predictor block counts follow the configured asymmetry") {
  ParamStore store;
  RngStream rng(10);
  ModelConfig cfg = Preset("tiny");
  auto video_pred = PredictorNet::Build(store, "vp", cfg,
                                        cfg.video_predictor_blocks, rng);
  auto audio_pred = PredictorNet::Build(store, "ap", cfg,
                                        cfg.audio_predictor_blocks, rng);
  REQUIRE(video_pred.blocks.size() == 1);
  REQUIRE(audio_pred.blocks.size() == 2);
  int64_t vp = CountParams(ExperimentPreset("tiny"), {"video_predictor"});
  int64_t ap = CountParams(ExperimentPreset("tiny"), {"audio_predictor_cross"});
  REQUIRE(store.WithPrefix("vp.").size() +
              store.WithPrefix("ap.").size() ==
          store.params().size());
  int64_t vp_inst = 0, ap_inst = 0;
  for (auto& p : store.WithPrefix("vp.")) vp_inst += p->value.numel();
  for (auto& p : store.WithPrefix("ap.")) ap_inst += p->value.numel();
  REQUIRE(vp == vp_inst);
  REQUIRE(ap == ap_inst);
  REQUIRE(ap > vp);
}

TEST_CASE("decoder logits are causal in the token sequence") {
  ParamStore store;
  RngStream rng(12);
  FinetuneConfig fcfg;  // tiny decoder defaults
  auto dec = DecoderNet::Build(store, "dec", fcfg, 32, 7, rng);
  REQUIRE(store.TotalParams() == counts::Decoder(fcfg, 32, 7));

  RngStream drng(13);
  Tensor enc = RandTensor({5, 32}, drng, 1.0);
  std::vector<int64_t> toks1 = {2, 4, 5, 6};
  std::vector<int64_t> toks2 = {2, 4, 5, 3};  // differs only at the last slot
  Var l1 = dec.ForwardLogits(toks1, MakeConst(enc));
  Var l2 = dec.ForwardLogits(toks2, MakeConst(enc));
  REQUIRE(l1->value.shape == std::vector<int64_t>({4, 7}));
  for (int64_t t = 0; t < 3; ++t)
    for (int64_t v = 0; v < 7; ++v)
      REQUIRE(l1->value.at(t, v) == Approx(l2->value.at(t, v)).margin(1e-12));
  bool last_differs = false;
  for (int64_t v = 0; v < 7; ++v)
    if (std::abs(l1->value.at(3, v) - l2->value.at(3, v)) > 1e-9)
      last_differs = true;
  REQUIRE(last_differs);

  // cross-attention reads the encoder sequence
  Tensor enc2 = RandTensor({5, 32}, drng, 1.0);
  Var l3 = dec.ForwardLogits(toks1, MakeConst(enc2));
  bool enc_matters = false;
  for (int64_t i = 0; i < l3->value.numel(); ++i)
    if (std::abs(l3->value[i] - l1->value[i]) > 1e-9) enc_matters = true;
  REQUIRE(enc_matters);

  REQUIRE_THROWS_AS(dec.ForwardLogits({}, MakeConst(enc)), avsr::Error);
}

TEST_CASE("analytic trunk count matches the published ResNet-18 size") {
  // torchvision resnet18 has 11,689,512 trainable parameters; removing the
  // 513,000-parameter classifier and the 9,536-parameter 2D stem leaves the
  // basic-block trunk
  int64_t trunk = counts::Resnet18Trunk2D();
  REQUIRE(trunk + 9536 + 513000 == 11689512);
  // video frontend swaps in a 3D stem and a projection to the encoder width
  REQUIRE(counts::ResnetVideoFrontend(512) ==
          trunk + (64 * 5 * 7 * 7 + 128) + (512 * 512 + 512));
}

TEST_CASE("full preset frontend plus encoder sizes land near published totals") {
  struct Case {
    const char* preset;
    int64_t reference;
  };
  const Case cases[] = {{"base", 41000000},
                        {"base_plus", 93000000},
                        {"large", 328000000}};
  for (const Case& c : cases) {
    ExperimentConfig cfg = ExperimentPreset(c.preset);
    int64_t audio_side = CountParams(cfg, {"audio_frontend", "encoder"});
    REQUIRE(audio_side >
            static_cast<int64_t>(0.85 * static_cast<double>(c.reference)));
    REQUIRE(audio_side <
            static_cast<int64_t>(1.15 * static_cast<double>(c.reference)));
  }
  // spot values for the closed-form pieces
  ExperimentConfig base = ExperimentPreset("base");
  REQUIRE(counts::Encoder(base.model) == 37829632);
  REQUIRE(counts::ResnetAudioFrontend(512) == 4111232);
  REQUIRE(CountParams(base, {"audio_frontend", "encoder"}) == 41940864);
}

TEST_CASE("count components reject unknown names and compose additively") {
  ExperimentConfig cfg = ExperimentPreset("tiny");
  int64_t fe = CountParams(cfg, {"video_frontend"});
  int64_t enc = CountParams(cfg, {"encoder"});
  REQUIRE(CountParams(cfg, {"video_frontend", "encoder"}) == fe + enc);
  REQUIRE_THROWS_AS(CountParams(cfg, {"flux_capacitor"}), avsr::Error);
  // both audio predictors share one shape
  REQUIRE(CountParams(cfg, {"audio_predictor_cross"}) ==
          CountParams(cfg, {"audio_predictor_within"}));
}

TEST_CASE("gradients flow end to end through frontend, encoder, predictor") {
  ParamStore store;
  RngStream rng(21);
  ModelConfig cfg = Preset("tiny");
  auto fe = VideoFrontendTiny::Build(store, "fe", cfg.attn_dim, rng);
  auto enc = EncoderNet::Build(store, "enc", cfg, rng);
  auto pred = PredictorNet::Build(store, "pred", cfg, 1, rng);

  RngStream drng(22);
  Tensor frames = RandTensor({3, 88, 88}, drng, 0.5);
  Tensor target = RandTensor({2, 32}, drng, 1.0);
  MaskSpec mask;
  mask.frame_mask = {1, 0, 1};

  auto loss_fn = [&]() {
    RngStream fwd(0);
    Var feats = fe.Forward(frames);
    auto eo = enc.Forward(feats, false, fwd, false);
    Var p = pred.Forward(eo.final, mask);
    Var picked = GatherRows(p, mask.MaskedIndices());
    return CosineDistanceLoss(picked, target);
  };

  store.ZeroGrads();
  Var loss = loss_fn();
  Backward(loss);

  // probe parameters from every depth of the stack
  struct Probe {
    ParamPtr p;
    size_t idx;
  };
  std::vector<Probe> probes = {
      {fe.stem_w, 17},      {fe.proj_w, 40},      {enc.blocks[0].attn.wq, 100},
      {enc.blocks[1].w1, 7}, {enc.ln_f_g, 3},     {pred.mask_token, 5},
      {pred.in_w, 33},       {pred.out_b, 11},
  };
  for (const Probe& pr : probes) {
    double num = ParamFiniteDiff(loss_fn, pr.p, pr.idx);
    double ana = pr.p->grad.numel() > 0
                     ? pr.p->grad[static_cast<int64_t>(pr.idx)]
                     : 0.0;
    REQUIRE(ana == Approx(num).margin(1e-6 + 1e-4 * std::abs(num)));
  }
}
