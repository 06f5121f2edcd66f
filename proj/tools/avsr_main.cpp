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

// command line driver for the audio-visual speech pipeline: synthetic data
// generation, masked pretraining, fine-tuning, decoding, evaluation,
// self-training, the ablation harness, and analytic parameter counts

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "avsr/ablate.hpp"
#include "avsr/finetune.hpp"
#include "avsr/pretrain.hpp"

namespace {

std::string ReadTextFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  avsr::Require(static_cast<bool>(in), "io-error", "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void WriteTextFile(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  avsr::Require(static_cast<bool>(out), "io-error", "cannot write " + path);
  out << text;
}

avsr::ExperimentConfig LoadCfg(const std::string& config_path,
                               const std::string& preset) {
  avsr::ExperimentConfig cfg = config_path.empty()
                                   ? avsr::ExperimentPreset(preset)
                                   : avsr::LoadConfig(ReadTextFile(config_path));
  const std::vector<std::string> bad = avsr::Validate(cfg);
  avsr::Require(bad.empty(), "parse-error",
                bad.empty() ? "" : "invalid config: " + bad[0]);
  return cfg;
}

// explicit path wins; otherwise fall back to $AVSR_DATA_ROOT/<subdir>
std::string ResolveData(const std::string& given, const std::string& subdir) {
  if (!given.empty()) return given;
  const char* root = std::getenv("AVSR_DATA_ROOT");
  avsr::Require(root != nullptr && root[0] != '\0', "parse-error",
                "no path given and AVSR_DATA_ROOT is unset");
  return std::string(root) + "/" + subdir;
}

std::vector<avsr::AVSample> LoadSamples(const std::string& dir) {
  std::vector<avsr::AVSample> samples = avsr::ReadDataset(dir);
  avsr::Require(!samples.empty(), "bad-length", "no samples in " + dir);
  return samples;
}

avsr::Tokenizer TokenizerFor(const std::vector<avsr::AVSample>& a,
                             const std::vector<avsr::AVSample>& b) {
  std::vector<std::string> texts;
  for (const auto& s : a) texts.push_back(s.transcript);
  for (const auto& s : b) texts.push_back(s.transcript);
  return avsr::Tokenizer::FromTranscripts(texts);
}

avsr::FinetuneModel LoadModel(const std::string& path) {
  return avsr::LoadFinetuneModel(avsr::LoadCheckpoint(path));
}

nlohmann::json ReportJson(const avsr::EvalReport& report) {
  nlohmann::json utts = nlohmann::json::array();
  for (const auto& u : report.utterances)
    utts.push_back({{"id", u.id},
                    {"reference", u.reference},
                    {"hypothesis", u.hypothesis},
                    {"ref_words", u.ref_words},
                    {"substitutions", u.counts.substitutions},
                    {"insertions", u.counts.insertions},
                    {"deletions", u.counts.deletions},
                    {"wer", u.wer}});
  return nlohmann::json{{"corpus_wer", report.corpus_wer},
                        {"total_ref_words", report.total_ref_words},
                        {"beam_size", report.beam_size},
                        {"ctc_weight", report.ctc_weight},
                        {"greedy", report.greedy},
                        {"utterances", utts}};
}

struct CommonFlags {
  std::string config;
  std::string preset = "tiny";
  int64_t seed = -1;  // negative leaves the config untouched
};

void AddCommon(CLI::App* cmd, CommonFlags& c) {
  cmd->add_option("--config", c.config, "JSON config file");
  cmd->add_option("--preset", c.preset,
                  "model preset when no config file is given")
      ->check(CLI::IsMember({"tiny", "base", "base_plus", "large"}));
  cmd->add_option("--seed", c.seed, "override the stage seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale audio-visual speech recognition pipeline"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  CommonFlags gen_c;
  AddCommon(gen, gen_c);
  std::string gen_out;
  int64_t gen_count = 16, gen_from = 0, gen_vocab = 0;
  gen->add_option("--out", gen_out, "output dataset directory");
  gen->add_option("--count", gen_count, "number of samples")
      ->check(CLI::PositiveNumber);
  gen->add_option("--from", gen_from, "first sample index");
  gen->add_option("--vocab", gen_vocab, "character vocabulary size override");
  gen->callback([&] {
    avsr::ExperimentConfig cfg = LoadCfg(gen_c.config, gen_c.preset);
    if (gen_c.seed >= 0) cfg.data.seed = gen_c.seed;
    if (gen_vocab > 0) cfg.data.vocab_size = gen_vocab;
    const std::string dir = ResolveData(gen_out, "dataset");
    std::vector<avsr::AVSample> samples;
    for (int64_t i = gen_from; i < gen_from + gen_count; ++i)
      samples.push_back(avsr::GenerateSample(cfg.data, i));
    avsr::WriteDataset(dir, samples,
                       {{"tool", "gen-data"},
                        {"config_hash", avsr::ConfigHashHex(cfg)}});
    std::cout << "wrote " << samples.size() << " samples to " << dir << "\n";
  });

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "masked student-teacher run");
  CommonFlags pre_c;
  AddCommon(pre, pre_c);
  std::string pre_data, pre_out = "pretrain.ckpt";
  int64_t pre_epochs = 0;
  pre->add_option("--data", pre_data, "training dataset directory");
  pre->add_option("--out", pre_out, "checkpoint output path");
  pre->add_option("--epochs", pre_epochs, "override pretrain epochs");
  pre->callback([&] {
    avsr::ExperimentConfig cfg = LoadCfg(pre_c.config, pre_c.preset);
    if (pre_c.seed >= 0) cfg.pretrain.seed = pre_c.seed;
    if (pre_epochs > 0) cfg.pretrain.epochs = pre_epochs;
    const auto samples = LoadSamples(ResolveData(pre_data, "pretrain"));
    avsr::PretrainModel m = avsr::PretrainModel::Build(cfg);
    const avsr::PretrainResult res =
        avsr::RunPretraining(m, samples, &std::cout);
    const avsr::Checkpoint ck = avsr::MakePretrainCheckpoint(
        m, res.total_steps, res.history.back().mu);
    avsr::SaveCheckpoint(pre_out, ck);
    std::cout << "saved pretrain checkpoint to " << pre_out << " after "
              << res.total_steps << " steps\n";
  });

  // finetune
  auto* ft = app.add_subcommand("finetune", "supervised training and eval");
  CommonFlags ft_c;
  AddCommon(ft, ft_c);
  std::string ft_train, ft_val, ft_init, ft_out = "finetune.ckpt";
  std::string ft_modality = "audio";
  int64_t ft_epochs = 0, ft_beam = 0;
  double ft_ctcw = -1.0;
  ft->add_option("--train", ft_train, "labelled training dataset");
  ft->add_option("--val", ft_val, "validation dataset");
  ft->add_option("--init", ft_init, "pretrain checkpoint to start from");
  ft->add_option("--out", ft_out, "checkpoint output path");
  ft->add_option("--modality", ft_modality, "audio, video or fusion")
      ->check(CLI::IsMember({"audio", "video", "fusion"}));
  ft->add_option("--epochs", ft_epochs, "override fine-tune epochs");
  ft->add_option("--beam", ft_beam, "override final eval beam width");
  ft->add_option("--ctc-weight", ft_ctcw, "override the ctc mixing weight");
  ft->callback([&] {
    avsr::ExperimentConfig cfg = LoadCfg(ft_c.config, ft_c.preset);
    if (ft_c.seed >= 0) cfg.finetune.seed = ft_c.seed;
    if (ft_epochs > 0) cfg.finetune.epochs = ft_epochs;
    if (ft_beam > 0) cfg.finetune.beam_size = ft_beam;
    if (ft_ctcw >= 0.0) cfg.finetune.ctc_weight = ft_ctcw;
    const auto train = LoadSamples(ResolveData(ft_train, "train"));
    const auto val = LoadSamples(ResolveData(ft_val, "val"));
    avsr::Checkpoint init;
    const avsr::Checkpoint* init_ptr = nullptr;
    if (!ft_init.empty()) {
      init = avsr::LoadCheckpoint(ft_init);
      init_ptr = &init;
    }
    avsr::FinetuneModel m = avsr::FinetuneModel::Build(
        cfg, ft_modality, TokenizerFor(train, val), init_ptr);
    const avsr::FinetuneResult res =
        avsr::RunFinetune(m, train, val, &std::cout);
    avsr::SaveCheckpoint(ft_out,
                         avsr::MakeFinetuneCheckpoint(m, res.total_steps));
    std::cout << "saved finetune checkpoint to " << ft_out << ", final wer "
              << res.final_eval.corpus_wer << "\n";
  });

  // decode
  auto* dec = app.add_subcommand("decode", "transcribe a dataset");
  std::string dec_model, dec_data;
  int64_t dec_beam = 0, dec_limit = 0;
  double dec_ctcw = -1.0;
  bool dec_greedy = false;
  dec->add_option("--model", dec_model, "finetune checkpoint")->required();
  dec->add_option("--data", dec_data, "dataset directory");
  dec->add_option("--beam", dec_beam, "beam width, 0 keeps the checkpoint's");
  dec->add_option("--ctc-weight", dec_ctcw, "override the ctc mixing weight");
  dec->add_flag("--greedy", dec_greedy, "beam-free argmax decoding");
  dec->add_option("--limit", dec_limit, "stop after this many utterances");
  dec->callback([&] {
    const avsr::FinetuneModel m = LoadModel(dec_model);
    avsr::DecodeSettings settings;
    settings.beam =
        dec_beam > 0 ? dec_beam : m.cfg.finetune.beam_size;
    settings.ctc_weight =
        dec_ctcw >= 0.0 ? dec_ctcw : m.cfg.finetune.ctc_weight;
    settings.greedy = dec_greedy;
    auto samples = LoadSamples(ResolveData(dec_data, "eval"));
    if (dec_limit > 0 &&
        dec_limit < static_cast<int64_t>(samples.size()))
      samples.resize(static_cast<size_t>(dec_limit));
    for (const auto& s : samples)
      std::cout << s.sample_id << "\t"
                << avsr::DecodeSampleText(m, s, settings) << "\n";
  });

  // eval
  auto* ev = app.add_subcommand("eval", "score a dataset with WER");
  std::string ev_model, ev_data, ev_out;
  int64_t ev_beam = 0;
  double ev_ctcw = -1.0;
  bool ev_greedy = false;
  ev->add_option("--model", ev_model, "finetune checkpoint")->required();
  ev->add_option("--data", ev_data, "dataset directory");
  ev->add_option("--beam", ev_beam, "beam width, 0 keeps the checkpoint's");
  ev->add_option("--ctc-weight", ev_ctcw, "override the ctc mixing weight");
  ev->add_flag("--greedy", ev_greedy, "beam-free argmax decoding");
  ev->add_option("--out", ev_out, "write the report as JSON");
  ev->callback([&] {
    const avsr::FinetuneModel m = LoadModel(ev_model);
    avsr::DecodeSettings settings;
    settings.beam = ev_beam > 0 ? ev_beam : m.cfg.finetune.beam_size;
    settings.ctc_weight =
        ev_ctcw >= 0.0 ? ev_ctcw : m.cfg.finetune.ctc_weight;
    settings.greedy = ev_greedy;
    const auto samples = LoadSamples(ResolveData(ev_data, "eval"));
    const avsr::EvalReport report = avsr::EvalDataset(m, samples, settings);
    for (const auto& u : report.utterances)
      std::cout << u.id << "\twer " << u.wer << "\tref '" << u.reference
                << "'\thyp '" << u.hypothesis << "'\n";
    std::cout << "corpus wer " << report.corpus_wer << " over "
              << report.total_ref_words << " reference words (beam "
              << report.beam_size << ", ctc weight " << report.ctc_weight
              << (report.greedy ? ", greedy" : "") << ")\n";
    if (!ev_out.empty()) {
      WriteTextFile(ev_out, ReportJson(report).dump(2) + "\n");
      std::cout << "wrote report to " << ev_out << "\n";
    }
  });

  // self-train
  auto* st = app.add_subcommand(
      "self-train", "pseudo-label unlabelled data and retrain");
  std::string st_model, st_pretrained, st_labelled, st_unlabelled, st_val;
  std::string st_modality = "audio", st_pseudo, st_out;
  int64_t st_beam = 0;
  double st_ctcw = -1.0;
  bool st_greedy = false;
  st->add_option("--model", st_model, "labelling finetune checkpoint")
      ->required();
  st->add_option("--pretrained", st_pretrained,
                 "pretrain checkpoint for the fresh student");
  st->add_option("--labelled", st_labelled, "labelled dataset");
  st->add_option("--unlabelled", st_unlabelled, "unlabelled dataset");
  st->add_option("--val", st_val, "validation dataset");
  st->add_option("--modality", st_modality, "audio, video or fusion")
      ->check(CLI::IsMember({"audio", "video", "fusion"}));
  st->add_option("--pseudo-out", st_pseudo,
                 "directory for the pseudo-labelled dataset");
  st->add_option("--out", st_out, "checkpoint output for the new model");
  st->add_option("--beam", st_beam, "labelling beam width");
  st->add_option("--ctc-weight", st_ctcw, "labelling ctc mixing weight");
  st->add_flag("--greedy", st_greedy, "label with greedy decoding");
  st->callback([&] {
    const avsr::FinetuneModel labeller = LoadModel(st_model);
    avsr::DecodeSettings settings;
    settings.beam =
        st_beam > 0 ? st_beam : labeller.cfg.finetune.beam_size;
    settings.ctc_weight =
        st_ctcw >= 0.0 ? st_ctcw : labeller.cfg.finetune.ctc_weight;
    settings.greedy = st_greedy;
    const auto labelled = LoadSamples(ResolveData(st_labelled, "train"));
    const auto unlabelled =
        LoadSamples(ResolveData(st_unlabelled, "unlabelled"));
    const auto val = LoadSamples(ResolveData(st_val, "val"));
    avsr::Checkpoint pretrained;
    const avsr::Checkpoint* pre_ptr = nullptr;
    if (!st_pretrained.empty()) {
      pretrained = avsr::LoadCheckpoint(st_pretrained);
      pre_ptr = &pretrained;
    }
    avsr::FinetuneModel refreshed;
    const avsr::SelfTrainOutcome outcome = avsr::SelfTrain(
        labeller, pre_ptr, labelled, unlabelled, val, st_modality, settings,
        st_pseudo, {{"labelling_checkpoint", st_model}}, &refreshed,
        &std::cout);
    std::cout << "pseudo-labelled " << outcome.pseudo.size() << ", dropped "
              << outcome.dropped << ", final wer "
              << outcome.result.final_eval.corpus_wer << "\n";
    if (!st_out.empty()) {
      avsr::SaveCheckpoint(st_out, avsr::MakeFinetuneCheckpoint(
                                       refreshed, outcome.result.total_steps));
      std::cout << "saved self-trained checkpoint to " << st_out << "\n";
    }
  });

  // ablate
  auto* ab = app.add_subcommand("ablate", "cumulative five-row ablation");
  CommonFlags ab_c;
  AddCommon(ab, ab_c);
  std::string ab_pre, ab_train, ab_heldout, ab_out;
  ab->add_option("--pretrain-data", ab_pre, "pretraining dataset");
  ab->add_option("--train", ab_train, "fine-tune training dataset");
  ab->add_option("--heldout", ab_heldout, "held-out eval dataset");
  ab->add_option("--out", ab_out, "write the report as JSON");
  ab->callback([&] {
    avsr::ExperimentConfig cfg = LoadCfg(ab_c.config, ab_c.preset);
    if (ab_c.seed >= 0) cfg.pretrain.seed = ab_c.seed;
    const auto pre_data = LoadSamples(ResolveData(ab_pre, "pretrain"));
    const auto train = LoadSamples(ResolveData(ab_train, "train"));
    const auto heldout = LoadSamples(ResolveData(ab_heldout, "val"));
    const avsr::AblationReport report =
        avsr::RunAblation(cfg, pre_data, train, heldout, &std::cout);
    std::cout << avsr::RenderAblationText(report);
    if (!ab_out.empty()) {
      WriteTextFile(ab_out, avsr::AblationJson(report).dump(2) + "\n");
      std::cout << "wrote report to " << ab_out << "\n";
    }
  });

  // count-params
  auto* cp = app.add_subcommand("count-params", "analytic parameter counts");
  CommonFlags cp_c;
  AddCommon(cp, cp_c);
  int64_t cp_vocab = 0;
  cp->add_option("--vocab", cp_vocab,
                 "tokenizer vocabulary for decoder and ctc head counts");
  cp->callback([&] {
    const avsr::ExperimentConfig cfg = LoadCfg(cp_c.config, cp_c.preset);
    const auto one = [&](const std::string& name) {
      return avsr::CountParams(cfg, {name}, cp_vocab);
    };
    std::cout << "video_frontend          " << one("video_frontend") << "\n"
              << "audio_frontend          " << one("audio_frontend") << "\n"
              << "encoder                 " << one("encoder") << "\n"
              << "video_predictor         " << one("video_predictor") << "\n"
              << "audio_predictor_cross   " << one("audio_predictor_cross")
              << "\n"
              << "audio_predictor_within  " << one("audio_predictor_within")
              << "\n"
              << "fusion                  " << one("fusion") << "\n";
    if (cp_vocab > 0)
      std::cout << "decoder                 " << one("decoder") << "\n"
                << "ctc_head                " << one("ctc_head") << "\n";
    std::cout << "audio side (frontend + encoder) "
              << avsr::CountParams(cfg, {"audio_frontend", "encoder"}) << "\n"
              << "video side (frontend + encoder) "
              << avsr::CountParams(cfg, {"video_frontend", "encoder"}) << "\n";
    // published sizes for the resnet18 family, audio side
    const std::map<std::string, int64_t> reference = {
        {"base", 41000000}, {"base_plus", 93000000}, {"large", 328000000}};
    const auto it = reference.find(cp_c.preset);
    if (cp_c.config.empty() && it != reference.end()) {
      const int64_t got =
          avsr::CountParams(cfg, {"audio_frontend", "encoder"});
      std::cout << "reference audio-side size " << it->second << ", relative "
                << static_cast<double>(got - it->second) /
                       static_cast<double>(it->second)
                << "\n";
    }
    std::cout << "2d resnet18 trunk       " << avsr::counts::Resnet18Trunk2D()
              << " (torchvision resnet18 has 11689512 with stem 9536 and "
                 "classifier 513000)\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const avsr::Error& e) {
    std::cerr << "avsr: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
