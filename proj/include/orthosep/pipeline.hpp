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
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "orthosep/clustering.hpp"
#include "orthosep/dataset.hpp"
#include "orthosep/metrics.hpp"
#include "orthosep/network.hpp"
#include "orthosep/signal.hpp"

namespace orthosep {

// Everything a run needs, loadable from one JSON document.
struct ExperimentConfig {
  StftConfig stft;
  double log_floor = kDefaultLogFloor;
  // Bins this far below the utterance's loudest bin are left out of the
  // loss; 0 keeps every bin.
  double silence_db = 0.0;
  NetworkConfig network;
  TrainHyper training;
  CorpusConfig corpus;
  KMeansOptions clustering;
  int num_sources = 2;
  int threads = 1;
};

// Checks every module precondition; throws kInvalidArgument on the first violation.
void validate(const ExperimentConfig& cfg);

std::string to_json(const ExperimentConfig& cfg);
// Keys that are absent keep the values already in `base`.
ExperimentConfig config_from_json(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});
void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg);

// Log magnitude standardized to zero mean and unit variance over the utterance.
FeatureMatrix network_features(const Spectrogram& s, double log_floor);

TrainingExample make_training_example(const MixtureSpec& spec, const ExperimentConfig& cfg,
                                      const std::filesystem::path& base_dir = {});

std::vector<TrainingExample> make_training_examples(const std::vector<MixtureSpec>& specs,
                                                    const ExperimentConfig& cfg,
                                                    const std::filesystem::path& base_dir = {});

// Runs fn(i) for i in [0, n) on up to `threads` workers. Callers write
// results into slot i, so output order never depends on scheduling.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

struct Model {
  NetworkConfig network;
  ModelParameters params;
};

struct SeparationResult {
  Spectrogram mixture;
  Eigen::MatrixXd embedding;  // empty for oracle separation
  ClusterResult clusters;
  std::vector<Mask> masks;
  // istft of each masked spectrogram; covers the analysed span, which can
  // be shorter than the mixture by less than one hop.
  std::vector<Waveform> streams;
  TargetSelection selection;
};

// Masks the mixture spectrogram and resynthesizes every stream, cut or
// zero-padded to `length` samples unless it is 0.
std::vector<Waveform> render_streams(const Spectrogram& mixture, const std::vector<Mask>& masks,
                                     std::size_t length = 0);

// Embeds, clusters into cfg.num_sources groups and resynthesizes.
// A silent mixture is rejected with "zero-power source".
SeparationResult separate(const Model& model, const Waveform& mixture, const ExperimentConfig& cfg);

// Ideal binary masks from the given references, bypassing the network.
SeparationResult separate_oracle(const Waveform& mixture, const std::vector<Waveform>& references,
                                 const ExperimentConfig& cfg);

// Cuts or zero-pads to n samples.
Waveform fit_length(const Waveform& w, std::size_t n);

// istft(stft(w)): w over the analysed span with the same edge treatment a
// separated stream gets. Scoring compares streams against this.
Waveform resynthesize(const Waveform& w, const StftConfig& cfg);

// Oracle-IBM target SDR of one mixture.
double oracle_target_sdr(const RealizedMixture& mix, const ExperimentConfig& cfg);

// Separates every mixture with the model and scores it. Records come back
// in manifest order.
std::vector<UtteranceRecord> evaluate_model(const Model& model, Method method,
                                            const std::vector<MixtureSpec>& mixtures, const ExperimentConfig& cfg,
                                            const std::filesystem::path& base_dir = {});

struct EmbeddingStats {
  Eigen::MatrixXd covariance;  // pooled over every bin of every utterance
  double off_diagonal_ratio = 0.0;
  double mean_penalty = 0.0;
  double mean_dc = 0.0;
  // Mean of per-utterance covariance matrices, and its ratio.
  Eigen::MatrixXd mean_utterance_covariance;
  double utterance_off_diagonal_ratio = 0.0;
};

// Eval-mode embeddings of the given mixtures, summarised.
EmbeddingStats embedding_stats(const Model& model, const std::vector<MixtureSpec>& mixtures,
                               const ExperimentConfig& cfg, const std::filesystem::path& base_dir = {});

}  // namespace orthosep
