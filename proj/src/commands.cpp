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

#include "orthosep/commands.hpp"

#include <fstream>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "orthosep/error.hpp"
#include "orthosep/wav.hpp"

namespace orthosep {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, fmt::format("cannot create directory '{}': {}", dir.string(), ec.message()));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, fmt::format("cannot open '{}' for writing", path.string()));
  out << text;
  if (!out) fail(ErrorKind::kIo, fmt::format("write to '{}' failed", path.string()));
}

void check_stft(const StftConfig& have, const StftConfig& want, const fs::path& ckpt) {
  if (have.fft_size != want.fft_size || have.hop != want.hop)
    fail(ErrorKind::kInvalidArgument,
         fmt::format("checkpoint '{}' was trained with fft_size {} / hop {}, config has {} / {}", ckpt.string(),
                     have.fft_size, have.hop, want.fft_size, want.hop));
}

fs::path manifest_base(const fs::path& manifest) { return manifest.parent_path(); }

std::vector<MixtureSpec> eval_mixtures(const fs::path& manifest) {
  const std::vector<MixtureSpec> all = read_manifest(manifest);
  std::vector<MixtureSpec> eval = filter_split(all, "eval");
  return eval.empty() ? all : eval;
}

}  // namespace

std::vector<std::string> missing_references(const std::vector<MixtureSpec>& mixtures, const fs::path& base_dir) {
  std::vector<std::string> out;
  for (const auto& m : mixtures) {
    for (const SourceRef* ref : {&m.target, &m.interferer}) {
      if (ref->path.empty()) continue;
      fs::path p(ref->path);
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      if (!fs::exists(p)) out.push_back(fmt::format("{}: {}", m.id, p.string()));
    }
  }
  return out;
}

SynthOutput cmd_synth(const ExperimentConfig& cfg, const fs::path& out_dir) {
  validate(cfg);
  std::vector<MixtureSpec> corpus = build_corpus(cfg.corpus);
  prepare_dir(out_dir / "sources");
  prepare_dir(out_dir / "mixtures");

  for (auto& spec : corpus) {
    spec.target.path = fmt::format("sources/{}.wav", spec.target.id);
    spec.interferer.path = fmt::format("sources/{}.wav", spec.interferer.id);
    spec.mixture_path = fmt::format("mixtures/{}.wav", spec.id);
  }
  // Sources are rendered from their seeds; the mixture is then built from
  // the 16-bit files so that training and evaluation see identical audio.
  parallel_for(corpus.size(), cfg.threads, [&](std::size_t i) {
    const MixtureSpec& spec = corpus[i];
    for (const SourceRef* ref : {&spec.target, &spec.interferer}) {
      SourceRef synth = *ref;
      synth.path.clear();
      write_wav(out_dir / ref->path, realize_source(synth, spec.duration_s));
    }
    write_wav(out_dir / spec.mixture_path, realize_mixture(spec, out_dir).mixture);
  });

  SynthOutput out;
  out.manifest = out_dir / kManifestName;
  out.mixtures = corpus.size();
  write_manifest(out.manifest, corpus);
  save_config(out_dir / kConfigEchoName, cfg);
  return out;
}

TrainOutput cmd_train(const ExperimentConfig& cfg, const fs::path& manifest, const fs::path& out_dir,
                      const EpochCallback& on_epoch) {
  validate(cfg);
  const std::vector<MixtureSpec> train_split = filter_split(read_manifest(manifest), "train");
  require(!train_split.empty(), fmt::format("manifest '{}' has no train mixtures", manifest.string()));
  const auto missing = missing_references(train_split, manifest_base(manifest));
  if (!missing.empty())
    fail(ErrorKind::kIo, fmt::format("{} source files are missing, first: {}", missing.size(), missing.front()));
  prepare_dir(out_dir);
  save_config(out_dir / kConfigEchoName, cfg);

  const std::vector<TrainingExample> examples = make_training_examples(train_split, cfg, manifest_base(manifest));
  TrainOutput out;
  out.result = train(examples, cfg.network, cfg.training, on_epoch);
  out.checkpoint = out_dir / kCheckpointName;

  Checkpoint ckpt;
  ckpt.network = cfg.network;
  ckpt.stft = cfg.stft;
  ckpt.lambda = cfg.training.lambda;
  ckpt.params = out.result.params;
  save_checkpoint(out.checkpoint, ckpt);
  write_training_log(out_dir / "training_log.csv", out.result.log);
  if (out.result.diverged)
    fail(ErrorKind::kNumeric, fmt::format("training diverged ({}); last good parameters saved to '{}'",
                                          out.result.divergence, out.checkpoint.string()));
  return out;
}

SeparationResult cmd_separate(const ExperimentConfig& cfg, const SeparateOptions& opts) {
  validate(cfg);
  const Waveform mixture = read_wav(opts.mixture);
  SeparationResult result;
  if (opts.oracle) {
    require(opts.references.size() >= 2, "--oracle-ibm needs at least two --reference files");
    std::vector<Waveform> refs;
    for (const auto& p : opts.references) refs.push_back(read_wav(p));
    result = separate_oracle(mixture, refs, cfg);
  } else {
    const Checkpoint ckpt = load_checkpoint(opts.checkpoint, cfg.network);
    check_stft(ckpt.stft, cfg.stft, opts.checkpoint);
    result = separate(Model{ckpt.network, ckpt.params}, mixture, cfg);
  }

  prepare_dir(opts.out_dir);
  save_config(opts.out_dir / kConfigEchoName, cfg);
  const std::vector<Waveform> streams = render_streams(result.mixture, result.masks, mixture.size());
  for (std::size_t c = 0; c < streams.size(); ++c) {
    write_wav(opts.out_dir / fmt::format("source_{}.wav", c), streams[c]);
    if (opts.dump_masks) write_matrix_csv(opts.out_dir / fmt::format("mask_{}.csv", c), result.masks[c].values);
  }
  json info;
  info["mode"] = opts.oracle ? "oracle-ibm" : "model";
  info["streams"] = streams.size();
  info["target_index"] = result.selection.target_index;
  info["ordering"] = result.selection.ordering;
  if (!opts.oracle) {
    info["inertia"] = result.clusters.inertia;
    info["iterations"] = result.clusters.iterations;
  }
  write_text(opts.out_dir / "separation.json", info.dump(2) + "\n");
  return result;
}

MetricsReport cmd_evaluate(const ExperimentConfig& cfg, const fs::path& manifest,
                           const std::vector<fs::path>& checkpoints, const fs::path& out_dir) {
  validate(cfg);
  require(!checkpoints.empty(), "evaluate needs at least one checkpoint");
  const std::vector<MixtureSpec> mixtures = eval_mixtures(manifest);
  require(!mixtures.empty(), fmt::format("manifest '{}' is empty", manifest.string()));
  const fs::path base = manifest_base(manifest);
  const auto missing = missing_references(mixtures, base);
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += "\n  " + m;
    fail(ErrorKind::kIo, fmt::format("missing references:{}", list));
  }

  std::vector<Checkpoint> models;
  std::set<std::pair<int, Method>> seen;
  for (const auto& p : checkpoints) {
    Checkpoint ck = load_checkpoint(p);
    check_stft(ck.stft, cfg.stft, p);
    if (!seen.insert({ck.network.embedding_dim, method_for_lambda(ck.lambda)}).second)
      fail(ErrorKind::kInvalidArgument,
           fmt::format("checkpoint '{}' repeats embedding_dim {} with method {}", p.string(), ck.network.embedding_dim,
                       to_string(method_for_lambda(ck.lambda))));
    models.push_back(std::move(ck));
  }
  prepare_dir(out_dir);
  save_config(out_dir / kConfigEchoName, cfg);

  std::vector<UtteranceRecord> records;
  for (const auto& ck : models) {
    const auto recs =
        evaluate_model(Model{ck.network, ck.params}, method_for_lambda(ck.lambda), mixtures, cfg, base);
    records.insert(records.end(), recs.begin(), recs.end());
  }
  MetricsReport report = aggregate(records);

  std::vector<double> oracle(mixtures.size());
  parallel_for(mixtures.size(), cfg.threads,
               [&](std::size_t i) { oracle[i] = oracle_target_sdr(realize_mixture(mixtures[i], base), cfg); });
  CellStats ceiling;
  for (double v : oracle) {
    ceiling.sum += v;
    ++ceiling.count;
  }
  report.oracle_sdr = ceiling;

  write_records_csv(out_dir / "records.csv", report.records);
  write_summary_csv(out_dir / "summary.csv", report);
  write_text(out_dir / "tables.txt", format_tables(report));
  return report;
}

EmbeddingStats cmd_export_cov(const ExperimentConfig& cfg, const fs::path& checkpoint, const fs::path& manifest,
                              const fs::path& out_dir) {
  validate(cfg);
  const Checkpoint ck = load_checkpoint(checkpoint, cfg.network);
  check_stft(ck.stft, cfg.stft, checkpoint);
  const std::vector<MixtureSpec> mixtures = eval_mixtures(manifest);
  require(!mixtures.empty(), fmt::format("manifest '{}' is empty", manifest.string()));
  prepare_dir(out_dir);
  save_config(out_dir / kConfigEchoName, cfg);

  const EmbeddingStats stats = embedding_stats(Model{ck.network, ck.params}, mixtures, cfg, manifest_base(manifest));
  write_matrix_csv(out_dir / "covariance.csv", stats.covariance);
  json info;
  info["mixtures"] = mixtures.size();
  info["off_diagonal_ratio"] = stats.off_diagonal_ratio;
  info["utterance_off_diagonal_ratio"] = stats.utterance_off_diagonal_ratio;
  info["mean_penalty"] = stats.mean_penalty;
  info["mean_dc"] = stats.mean_dc;
  info["lambda"] = ck.lambda;
  write_text(out_dir / "embedding_stats.json", info.dump(2) + "\n");
  return stats;
}

}  // namespace orthosep
