// Copyright 2026 The orthosep Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// orthosep: command-line front end for corpus synthesis, training,
// separation, evaluation and embedding-covariance export.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "orthosep/commands.hpp"
#include "orthosep/error.hpp"

namespace fs = std::filesystem;
using namespace orthosep;

namespace {

// Exit codes: 0 success, 2 usage, then one per error category.
int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return 3;
    case ErrorKind::kIo: return 4;
    case ErrorKind::kFormat: return 5;
    case ErrorKind::kNumeric: return 6;
  }
  return 1;
}

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

ExperimentConfig effective_config(const Globals& g) {
  ExperimentConfig cfg;
  if (!g.config.empty()) cfg = load_config(g.config, cfg);
  if (g.seed) {
    cfg.corpus.seed = *g.seed;
    cfg.training.seed = *g.seed;
    cfg.clustering.seed = *g.seed;
  }
  if (g.threads) cfg.threads = *g.threads;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep-clustering source separation with an orthonormality penalty"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON config file; flags override its values")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed for corpus synthesis, training and clustering");
  app.add_option("--threads", g.threads, "Worker threads for per-utterance work")->check(CLI::PositiveNumber);

  auto* synth = app.add_subcommand("synth", "Render the synthetic corpus and its manifest");
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a model on the manifest's train split");
  std::string train_manifest, train_out;
  std::optional<double> lambda, lr;
  std::optional<int> epochs;
  train_cmd->add_option("--manifest", train_manifest, "Corpus manifest")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_out, "Output directory")->required();
  train_cmd->add_option("--lambda", lambda, "Penalty weight; 0 trains the plain deep-clustering baseline");
  train_cmd->add_option("--epochs", epochs, "Training epochs");
  train_cmd->add_option("--lr", lr, "Adam learning rate");
  bool quiet = false;
  train_cmd->add_flag("--quiet", quiet, "Do not print per-epoch losses");

  auto* sep = app.add_subcommand("separate", "Separate one mixture WAV");
  SeparateOptions sep_opts;
  std::string sep_ckpt, sep_in, sep_out;
  std::vector<std::string> sep_refs;
  sep->add_option("--checkpoint", sep_ckpt, "Model checkpoint")->check(CLI::ExistingFile);
  sep->add_option("--input", sep_in, "Mixture WAV (16-bit mono 16 kHz)")->required()->check(CLI::ExistingFile);
  sep->add_option("--out", sep_out, "Output directory")->required();
  sep->add_flag("--oracle-ibm", sep_opts.oracle, "Use ideal binary masks from --reference files instead of a model");
  sep->add_option("--reference", sep_refs, "Reference source WAV, once per source")->check(CLI::ExistingFile);
  sep->add_flag("--dump-masks", sep_opts.dump_masks, "Also write each mask as CSV");

  auto* eval = app.add_subcommand("evaluate", "Score checkpoints on the manifest's eval split");
  std::string eval_manifest, eval_out;
  std::vector<std::string> eval_ckpts;
  eval->add_option("--manifest", eval_manifest, "Corpus manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", eval_ckpts, "Checkpoint to score; repeat for baseline and proposed")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--out", eval_out, "Output directory")->required();

  auto* cov = app.add_subcommand("export-cov", "Write the pooled embedding covariance of a model");
  std::string cov_ckpt, cov_manifest, cov_out;
  cov->add_option("--checkpoint", cov_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  cov->add_option("--manifest", cov_manifest, "Corpus manifest")->required()->check(CLI::ExistingFile);
  cov->add_option("--out", cov_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ExperimentConfig cfg = effective_config(g);
    if (*synth) {
      const SynthOutput out = cmd_synth(cfg, synth_out);
      fmt::print("wrote {} mixtures; manifest {}\n", out.mixtures, out.manifest.string());
    } else if (*train_cmd) {
      if (lambda) cfg.training.lambda = *lambda;
      if (epochs) cfg.training.epochs = *epochs;
      if (lr) cfg.training.learning_rate = *lr;
      const TrainOutput out = cmd_train(cfg, train_manifest, train_out, [&](const EpochLog& e) {
        if (!quiet)
          fmt::print("epoch {:>4}  dc {:.6g}  penalty {:.6g}  total {:.6g}\n", e.epoch, e.mean_dc, e.mean_penalty,
                     e.mean_total);
      });
      fmt::print("checkpoint {}\n", out.checkpoint.string());
    } else if (*sep) {
      require(sep_opts.oracle || !sep_ckpt.empty(), "separate needs --checkpoint unless --oracle-ibm is given");
      require(!sep_opts.oracle || !sep_refs.empty(), "--oracle-ibm needs --reference files");
      sep_opts.checkpoint = sep_ckpt;
      sep_opts.mixture = sep_in;
      sep_opts.out_dir = sep_out;
      for (const auto& r : sep_refs) sep_opts.references.emplace_back(r);
      const SeparationResult r = cmd_separate(cfg, sep_opts);
      fmt::print("wrote {} streams to {}; target stream {}\n", r.streams.size(), sep_out, r.selection.target_index);
    } else if (*eval) {
      std::vector<fs::path> ckpts(eval_ckpts.begin(), eval_ckpts.end());
      const MetricsReport report = cmd_evaluate(cfg, eval_manifest, ckpts, eval_out);
      fmt::print("{}", format_tables(report));
    } else if (*cov) {
      const EmbeddingStats s = cmd_export_cov(cfg, cov_ckpt, cov_manifest, cov_out);
      fmt::print("off_diagonal_ratio {:.6f}\n", s.off_diagonal_ratio);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error[%s]: %s\n", std::string(to_string(e.kind())).c_str(), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error[internal]: %s\n", e.what());
    return 1;
  }
  return 0;
}
