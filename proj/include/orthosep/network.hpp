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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "orthosep/dataset.hpp"
#include "orthosep/embedding.hpp"
#include "orthosep/signal.hpp"

namespace orthosep {

// Stacked bidirectional LSTM followed by a tanh dense layer that emits K
// values per frequency bin of every frame.
struct NetworkConfig {
  int input_dim = 257;  // F
  int hidden = 32;      // cells per direction
  int num_layers = 2;
  int embedding_dim = 20;  // K
  double dropout = 0.5;

  int output_dim() const noexcept { return input_dim * embedding_dim; }
};

void validate(const NetworkConfig& cfg);

// Parameters are kept as an ordered list of named blocks so optimizers,
// checkpoints and gradient checks can walk them generically. For layer l and
// direction d (0 forward, 1 backward) the blocks are
//   lstm{l}.{fwd,bwd}.w_in   4H x D_in   gate order i, f, g, o
//   lstm{l}.{fwd,bwd}.w_rec  4H x H
//   lstm{l}.{fwd,bwd}.bias   4H x 1
// followed by dense.weight (F*K x 2H) and dense.bias (F*K x 1).
struct ModelParameters {
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> blocks;

  std::size_t size() const noexcept { return blocks.size(); }
  Eigen::Index num_scalars() const;
  bool all_finite() const;

  static std::size_t lstm_index(int layer, int direction, int kind) {
    return static_cast<std::size_t>((layer * 2 + direction) * 3 + kind);
  }
  std::size_t dense_weight_index() const { return blocks.size() - 2; }
  std::size_t dense_bias_index() const { return blocks.size() - 1; }
};

bool operator==(const ModelParameters& a, const ModelParameters& b);

// All blocks zero, shaped for cfg.
ModelParameters zero_parameters(const NetworkConfig& cfg);

// Uniform in +-1/sqrt(fan_in), fan_in being the block's input width
// (H for biases of recurrent layers, 2H for the dense bias).
ModelParameters init_parameters(const NetworkConfig& cfg, std::uint64_t seed);

// Throws kInvalidArgument when block shapes disagree with cfg.
void check_shapes(const ModelParameters& params, const NetworkConfig& cfg);

// Unit-norm N x K embeddings for a T x F feature matrix, row t * F + f.
// Dropout (inverted, rate cfg.dropout) follows every BLSTM layer when
// train_mode is set; its masks are a pure function of dropout_seed.
Eigen::MatrixXd forward(const ModelParameters& params, const NetworkConfig& cfg,
                        const FeatureMatrix& features, bool train_mode = false,
                        std::uint64_t dropout_seed = 0);

struct BackwardResult {
  LossBreakdown loss;
  ModelParameters grads;
};

// Loss of the forward output against y and its gradient with respect to
// every parameter. Throws kNumeric naming the first non-finite tensor.
BackwardResult backward(const ModelParameters& params, const NetworkConfig& cfg,
                        const FeatureMatrix& features, const Eigen::MatrixXd& y, double lambda,
                        std::uint64_t dropout_seed, const RowWeights& weights = std::nullopt,
                        bool train_mode = true);

struct OptimizerState {
  ModelParameters first_moment;
  ModelParameters second_moment;
  long step = 0;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

OptimizerState make_optimizer(const ModelParameters& params, double learning_rate);

// Bias-corrected Adam update, in place.
void adam_step(ModelParameters& params, const ModelParameters& grads, OptimizerState& state);

struct TrainingExample {
  std::string id;
  FeatureMatrix features;
  Eigen::MatrixXd labels;  // N x C one-hot
  RowWeights weights;
};

struct TrainHyper {
  double lambda = 1.0;
  double learning_rate = 1e-4;
  int epochs = 10;
  std::uint64_t seed = 1;
};

struct EpochLog {
  int epoch = 0;
  double mean_dc = 0.0;
  double mean_penalty = 0.0;
  double mean_total = 0.0;
};

struct TrainResult {
  ModelParameters params;
  std::vector<EpochLog> log;
  bool diverged = false;
  std::string divergence;  // reason, when diverged
};

using EpochCallback = std::function<void(const EpochLog&)>;

// One Adam step per utterance (batch size 1) in a seeded shuffled order.
// On a non-finite loss training stops and the parameters from before the
// failing step are returned with diverged set.
TrainResult train(const std::vector<TrainingExample>& examples, const NetworkConfig& cfg,
                  const TrainHyper& hyper, const EpochCallback& on_epoch = {});

// Same, continuing from the given parameters.
TrainResult train(const std::vector<TrainingExample>& examples, const NetworkConfig& cfg,
                  const TrainHyper& hyper, ModelParameters initial, const EpochCallback& on_epoch = {});

void write_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);

// Binary checkpoint, little-endian:
//   "OSEP" | u32 version | config block | u32 block count |
//   per block: u32 name length, name, u32 rows, u32 cols, rows*cols f32 row-major
// The config block is u32 input_dim, hidden, num_layers, embedding_dim,
// f64 dropout, u32 fft_size, hop, sample_rate, f64 lambda (the penalty
// weight the model was trained with; 0 marks the plain baseline).
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  NetworkConfig network;
  StftConfig stft;
  int sample_rate = kDefaultSampleRate;
  double lambda = 1.0;
  ModelParameters params;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Additionally rejects a checkpoint whose network shape differs from expected.
Checkpoint load_checkpoint(const std::filesystem::path& path, const NetworkConfig& expected);

// Rounds every parameter to the nearest float, i.e. what a save/load cycle yields.
void round_to_float(ModelParameters& params);

}  // namespace orthosep
