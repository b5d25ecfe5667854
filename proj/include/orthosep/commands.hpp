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

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "orthosep/network.hpp"
#include "orthosep/pipeline.hpp"

namespace orthosep {

// The bodies of the command-line subcommands. Each validates the config
// before touching the filesystem and writes the effective config as
// config.json into its output directory.

inline constexpr const char* kManifestName = "manifest.jsonl";
inline constexpr const char* kCheckpointName = "model.osep";
inline constexpr const char* kConfigEchoName = "config.json";

struct SynthOutput {
  std::filesystem::path manifest;
  std::size_t mixtures = 0;
};

// Renders every source and mixture of the configured corpus as 16-bit WAV
// under out_dir/{sources,mixtures} and writes a manifest pointing at them
// with paths relative to out_dir.
SynthOutput cmd_synth(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

struct TrainOutput {
  std::filesystem::path checkpoint;
  TrainResult result;
};

// Trains on the manifest's train split; writes the checkpoint and
// training_log.csv. On divergence the last good parameters are still saved
// and a kNumeric error is raised afterwards.
TrainOutput cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& manifest,
                      const std::filesystem::path& out_dir, const EpochCallback& on_epoch = {});

struct SeparateOptions {
  std::filesystem::path checkpoint;  // unused when oracle is set
  std::filesystem::path mixture;
  std::filesystem::path out_dir;
  std::vector<std::filesystem::path> references;  // required for oracle
  bool oracle = false;
  bool dump_masks = false;
};

// Writes source_<c>.wav for every stream (mixture length), separation.json
// and, on request, mask_<c>.csv.
SeparationResult cmd_separate(const ExperimentConfig& cfg, const SeparateOptions& opts);

// Scores each checkpoint on the manifest's eval split. The method of a
// checkpoint follows from the lambda it was trained with. Writes
// records.csv, summary.csv and tables.txt.
MetricsReport cmd_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& manifest,
                           const std::vector<std::filesystem::path>& checkpoints,
                           const std::filesystem::path& out_dir);

// Pooled embedding covariance over the eval split (the whole manifest when
// it has none); writes covariance.csv and embedding_stats.json.
EmbeddingStats cmd_export_cov(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                              const std::filesystem::path& manifest, const std::filesystem::path& out_dir);

// Every referenced WAV that does not exist, as "mixture-id: path".
std::vector<std::string> missing_references(const std::vector<MixtureSpec>& mixtures,
                                            const std::filesystem::path& base_dir);

}  // namespace orthosep
