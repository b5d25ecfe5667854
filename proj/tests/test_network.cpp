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

#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "orthosep/error.hpp"
#include "orthosep/network.hpp"
#include "test_util.hpp"

namespace orthosep {
namespace {

using testing::random_matrix;
using testing::random_one_hot;

NetworkConfig tiny_config(double dropout = 0.0) {
  NetworkConfig cfg;
  cfg.input_dim = 4;
  cfg.hidden = 3;
  cfg.num_layers = 2;
  cfg.embedding_dim = 2;
  cfg.dropout = dropout;
  return cfg;
}

FeatureMatrix random_features(Eigen::Index frames, Eigen::Index bins, Rng& rng) {
  FeatureMatrix f;
  f.values = random_matrix(frames, bins, rng);
  return f;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("orthosep_net_" + name);
}

TEST(Parameters, ShapesAndNames) {
  const NetworkConfig cfg = tiny_config();
  const ModelParameters p = init_parameters(cfg, 1);
  ASSERT_EQ(p.size(), 2u * 2u * 3u + 2u);
  EXPECT_EQ(p.names[ModelParameters::lstm_index(1, 1, 1)], "lstm1.bwd.w_rec");
  EXPECT_EQ(p.blocks[ModelParameters::lstm_index(0, 0, 0)].rows(), 12);
  EXPECT_EQ(p.blocks[ModelParameters::lstm_index(0, 0, 0)].cols(), 4);
  EXPECT_EQ(p.blocks[ModelParameters::lstm_index(1, 0, 0)].cols(), 6);
  EXPECT_EQ(p.blocks[p.dense_weight_index()].rows(), 8);
  EXPECT_EQ(p.blocks[p.dense_weight_index()].cols(), 6);
  EXPECT_EQ(p.names.back(), "dense.bias");
  EXPECT_NO_THROW(check_shapes(p, cfg));
  NetworkConfig other = cfg;
  other.hidden = 5;
  EXPECT_THROW(check_shapes(p, other), Error);
}

TEST(Parameters, InitRangeAndDeterminism) {
  const NetworkConfig cfg = tiny_config();
  const ModelParameters a = init_parameters(cfg, 7);
  EXPECT_TRUE(a == init_parameters(cfg, 7));
  EXPECT_FALSE(a == init_parameters(cfg, 8));
  EXPECT_LE(a.blocks[ModelParameters::lstm_index(0, 0, 0)].cwiseAbs().maxCoeff(), 1.0 / std::sqrt(4.0));
  EXPECT_LE(a.blocks[a.dense_weight_index()].cwiseAbs().maxCoeff(), 1.0 / std::sqrt(6.0));
}

TEST(Config, Validation) {
  NetworkConfig cfg = tiny_config();
  EXPECT_NO_THROW(validate(cfg));
  cfg.dropout = 1.0;
  EXPECT_THROW(validate(cfg), Error);
  cfg = tiny_config();
  cfg.embedding_dim = 0;
  EXPECT_THROW(validate(cfg), Error);
}

TEST(Forward, UnitRowsAndShape) {
  Rng rng(1);
  NetworkConfig cfg = tiny_config(0.5);
  const ModelParameters p = init_parameters(cfg, 3);
  const FeatureMatrix f = random_features(5, 4, rng);
  for (bool train : {false, true}) {
    const Eigen::MatrixXd v = forward(p, cfg, f, train, 11);
    ASSERT_EQ(v.rows(), 20);
    ASSERT_EQ(v.cols(), 2);
    for (Eigen::Index i = 0; i < v.rows(); ++i) EXPECT_NEAR(v.row(i).norm(), 1.0, 1e-12);
  }
}

TEST(Forward, ZeroWeightsGiveFirstBasisVector) {
  Rng rng(2);
  const NetworkConfig cfg = tiny_config();
  const Eigen::MatrixXd v = forward(zero_parameters(cfg), cfg, random_features(3, 4, rng));
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    EXPECT_EQ(v(i, 0), 1.0);
    EXPECT_EQ(v(i, 1), 0.0);
  }
}

TEST(Forward, DenseBiasOnlyClosedForm) {
  // With recurrent weights zero the LSTM output is a constant and the
  // embedding row for bin f is normalize(tanh(bias[f*K..f*K+K-1])).
  Rng rng(3);
  const NetworkConfig cfg = tiny_config();
  ModelParameters p = zero_parameters(cfg);
  p.blocks[p.dense_bias_index()] = random_matrix(8, 1, rng);
  const Eigen::MatrixXd v = forward(p, cfg, random_features(3, 4, rng));
  for (int t = 0; t < 3; ++t)
    for (int f = 0; f < 4; ++f) {
      Eigen::RowVector2d e(std::tanh(p.blocks.back()(f * 2, 0)), std::tanh(p.blocks.back()(f * 2 + 1, 0)));
      e.normalize();
      EXPECT_NEAR(v(t * 4 + f, 0), e(0), 1e-14);
      EXPECT_NEAR(v(t * 4 + f, 1), e(1), 1e-14);
    }
}

TEST(Forward, InferenceIsDeterministicAndDropoutSeeded) {
  Rng rng(4);
  const NetworkConfig cfg = tiny_config(0.5);
  const ModelParameters p = init_parameters(cfg, 5);
  const FeatureMatrix f = random_features(6, 4, rng);
  EXPECT_EQ(forward(p, cfg, f), forward(p, cfg, f));
  EXPECT_EQ(forward(p, cfg, f, false, 1), forward(p, cfg, f, false, 2));
  EXPECT_EQ(forward(p, cfg, f, true, 9), forward(p, cfg, f, true, 9));
  EXPECT_NE(forward(p, cfg, f, true, 9), forward(p, cfg, f, true, 10));
}

TEST(Forward, RejectsWrongFeatureWidth) {
  Rng rng(5);
  const NetworkConfig cfg = tiny_config();
  EXPECT_THROW(forward(init_parameters(cfg, 1), cfg, random_features(3, 5, rng)), Error);
}

TEST(Forward, IsBidirectional) {
  // Changing the last frame must affect the first frame's embedding.
  Rng rng(6);
  const NetworkConfig cfg = tiny_config();
  const ModelParameters p = init_parameters(cfg, 2);
  FeatureMatrix f = random_features(4, 4, rng);
  const Eigen::MatrixXd a = forward(p, cfg, f);
  f.values.row(3) *= -2.0;
  const Eigen::MatrixXd b = forward(p, cfg, f);
  EXPECT_GT((a.topRows(4) - b.topRows(4)).cwiseAbs().maxCoeff(), 1e-9);
}

void check_network_gradient(const NetworkConfig& cfg, double lambda, std::uint64_t seed, const RowWeights& w) {
  Rng rng(seed);
  ModelParameters p = init_parameters(cfg, seed + 100);
  const FeatureMatrix f = random_features(3, cfg.input_dim, rng);
  const Eigen::MatrixXd y = random_one_hot(3 * cfg.input_dim, 2, rng);
  const BackwardResult r = backward(p, cfg, f, y, lambda, 77, w);
  const double h = 1e-6;
  for (std::size_t b = 0; b < p.size(); ++b)
    for (Eigen::Index i = 0; i < p.blocks[b].size(); ++i) {
      const double keep = p.blocks[b](i);
      p.blocks[b](i) = keep + h;
      const double up = combined_loss(forward(p, cfg, f, true, 77), y, lambda, w).total;
      p.blocks[b](i) = keep - h;
      const double down = combined_loss(forward(p, cfg, f, true, 77), y, lambda, w).total;
      p.blocks[b](i) = keep;
      const double fd = (up - down) / (2.0 * h);
      const double an = r.grads.blocks[b](i);
      EXPECT_LE(std::abs(an - fd), 1e-3 * std::abs(fd) + 1e-6) << p.names[b] << "[" << i << "]";
    }
}

TEST(Backward, MatchesFiniteDifferences) { check_network_gradient(tiny_config(), 1.0, 1, std::nullopt); }

TEST(Backward, MatchesFiniteDifferencesWithDropoutAndWeights) {
  Eigen::VectorXd w = Eigen::VectorXd::Ones(12);
  w(2) = w(5) = 0.0;
  check_network_gradient(tiny_config(0.3), 0.5, 2, w);
}

TEST(Backward, MatchesFiniteDifferencesSingleLayer) {
  NetworkConfig cfg = tiny_config();
  cfg.num_layers = 1;
  check_network_gradient(cfg, 0.0, 3, std::nullopt);
}

TEST(Backward, LossMatchesCombinedLoss) {
  Rng rng(7);
  const NetworkConfig cfg = tiny_config(0.5);
  const ModelParameters p = init_parameters(cfg, 4);
  const FeatureMatrix f = random_features(5, 4, rng);
  const Eigen::MatrixXd y = random_one_hot(20, 2, rng);
  const BackwardResult r = backward(p, cfg, f, y, 1.0, 31);
  const LossBreakdown direct = combined_loss(forward(p, cfg, f, true, 31), y, 1.0);
  EXPECT_NEAR(r.loss.total, direct.total, 1e-9);
  EXPECT_NEAR(r.loss.penalty_term, direct.penalty_term, 1e-9);
}

TEST(Backward, GradientIsAffineInLambda) {
  Rng rng(8);
  const NetworkConfig cfg = tiny_config(0.5);
  const ModelParameters p = init_parameters(cfg, 6);
  const FeatureMatrix f = random_features(4, 4, rng);
  const Eigen::MatrixXd y = random_one_hot(16, 2, rng);
  const ModelParameters g0 = backward(p, cfg, f, y, 0.0, 5).grads;
  const ModelParameters g1 = backward(p, cfg, f, y, 1.0, 5).grads;
  const ModelParameters g2 = backward(p, cfg, f, y, 2.0, 5).grads;
  for (std::size_t b = 0; b < g0.size(); ++b)
    EXPECT_TRUE((g2.blocks[b] - g0.blocks[b]).isApprox(2.0 * (g1.blocks[b] - g0.blocks[b]), 1e-9) ||
                (g2.blocks[b] - g0.blocks[b]).isZero(1e-12));
  EXPECT_TRUE(backward(p, cfg, f, y, 1.0, 5).grads == g1);
}

TEST(Backward, NonFiniteParametersAreReported) {
  Rng rng(9);
  const NetworkConfig cfg = tiny_config();
  ModelParameters p = init_parameters(cfg, 1);
  p.blocks[0](0, 0) = std::nan("");
  try {
    backward(p, cfg, random_features(3, 4, rng), random_one_hot(12, 2, rng), 1.0, 0);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ModelParameters p;
  p.names = {"w"};
  p.blocks = {Eigen::MatrixXd::Zero(1, 3)};
  ModelParameters g = p;
  g.blocks[0] << 2.0, -0.5, 0.0;
  OptimizerState s = make_optimizer(p, 0.01);
  adam_step(p, g, s);
  EXPECT_NEAR(p.blocks[0](0), -0.01, 1e-9);
  EXPECT_NEAR(p.blocks[0](1), 0.01, 1e-9);
  EXPECT_EQ(p.blocks[0](2), 0.0);
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, MatchesReferenceRecurrence) {
  ModelParameters p;
  p.names = {"w"};
  p.blocks = {Eigen::MatrixXd::Constant(1, 1, 1.0)};
  OptimizerState s = make_optimizer(p, 0.1);
  double x = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 5; ++t) {
    ModelParameters g = p;
    g.blocks[0](0) = 2.0 * p.blocks[0](0);
    const double gr = 2.0 * x;
    m = 0.9 * m + 0.1 * gr;
    v = 0.999 * v + 0.001 * gr * gr;
    x -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    adam_step(p, g, s);
    EXPECT_NEAR(p.blocks[0](0), x, 1e-12);
  }
}

TEST(Adam, ConstantGradientMovesByLearningRate) {
  // Bias correction makes m_hat = g and v_hat = g^2 exactly for a constant
  // gradient, so each step is lr * g / (|g| + eps).
  ModelParameters p;
  p.names = {"w"};
  p.blocks = {Eigen::MatrixXd::Zero(1, 2)};
  ModelParameters g = p;
  g.blocks[0] << 3.0, -1e-3;
  OptimizerState s = make_optimizer(p, 1e-3);
  for (int t = 0; t < 2000; ++t) {
    const Eigen::MatrixXd before = p.blocks[0];
    adam_step(p, g, s);
    EXPECT_NEAR(before(0) - p.blocks[0](0), 1e-3 * 3.0 / (3.0 + 1e-8), 1e-13);
    EXPECT_NEAR(before(1) - p.blocks[0](1), -1e-3 * 1e-3 / (1e-3 + 1e-8), 1e-13);
  }
}

std::vector<TrainingExample> tiny_examples(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrainingExample> out;
  for (int i = 0; i < n; ++i) {
    TrainingExample ex;
    ex.id = "u" + std::to_string(i);
    ex.features = random_features(4, 4, rng);
    // Labels follow the sign of the feature so there is something to learn.
    ex.labels = Eigen::MatrixXd::Zero(16, 2);
    for (int t = 0; t < 4; ++t)
      for (int f = 0; f < 4; ++f) ex.labels(t * 4 + f, ex.features.values(t, f) > 0 ? 0 : 1) = 1.0;
    out.push_back(std::move(ex));
  }
  return out;
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const NetworkConfig cfg = tiny_config(0.2);
  const ModelParameters init = init_parameters(cfg, 3);
  TrainHyper h;
  h.learning_rate = 0.0;
  h.epochs = 2;
  const TrainResult r = train(tiny_examples(3, 1), cfg, h, init);
  EXPECT_TRUE(r.params == init);
  EXPECT_EQ(r.log.size(), 2u);
  EXPECT_FALSE(r.diverged);
}

TEST(Train, LossDecreases) {
  const NetworkConfig cfg = tiny_config();
  TrainHyper h;
  h.learning_rate = 1e-2;
  h.epochs = 30;
  h.lambda = 0.0;
  const TrainResult r = train(tiny_examples(6, 2), cfg, h);
  ASSERT_EQ(r.log.size(), 30u);
  EXPECT_LT(r.log.back().mean_dc, r.log.front().mean_dc);
}

TEST(Train, PenaltyWeightLowersPenalty) {
  const NetworkConfig cfg = tiny_config();
  TrainHyper h;
  h.learning_rate = 1e-2;
  h.epochs = 30;
  h.lambda = 0.0;
  const TrainResult plain = train(tiny_examples(6, 3), cfg, h);
  h.lambda = 1.0;
  const TrainResult weighted = train(tiny_examples(6, 3), cfg, h);
  EXPECT_LT(weighted.log.back().mean_penalty, plain.log.back().mean_penalty);
}

TEST(Train, DeterministicAndCallbackCalled) {
  const NetworkConfig cfg = tiny_config(0.5);
  TrainHyper h;
  h.learning_rate = 1e-3;
  h.epochs = 3;
  int calls = 0;
  const TrainResult a = train(tiny_examples(4, 4), cfg, h, [&](const EpochLog&) { ++calls; });
  const TrainResult b = train(tiny_examples(4, 4), cfg, h);
  EXPECT_EQ(calls, 3);
  EXPECT_TRUE(a.params == b.params);
  EXPECT_EQ(a.log.back().mean_total, b.log.back().mean_total);
  h.seed = 2;
  EXPECT_FALSE(train(tiny_examples(4, 4), cfg, h).params == a.params);
}

TEST(Train, DivergenceReturnsLastGoodParameters) {
  const NetworkConfig cfg = tiny_config();
  std::vector<TrainingExample> ex = tiny_examples(2, 5);
  ex[1].features.values(0, 0) = std::numeric_limits<double>::infinity();
  TrainHyper h;
  h.learning_rate = 1e-3;
  h.epochs = 1;
  const TrainResult r = train(ex, cfg, h);
  EXPECT_TRUE(r.diverged);
  EXPECT_FALSE(r.divergence.empty());
  EXPECT_TRUE(r.params.all_finite());
}

TEST(Train, RejectsBadInputs) {
  const NetworkConfig cfg = tiny_config();
  TrainHyper h;
  EXPECT_THROW(train({}, cfg, h), Error);
  std::vector<TrainingExample> ex = tiny_examples(1, 6);
  ex[0].labels = Eigen::MatrixXd::Zero(3, 2);
  EXPECT_THROW(train(ex, cfg, h), Error);
}

TEST(TrainingLog, CsvLayout) {
  const auto path = temp_path("log.csv");
  write_training_log(path, {{1, 2.0, 0.5, 2.5}, {2, 1.0, 0.25, 1.25}});
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "epoch,mean_dc,mean_penalty,mean_total");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 2), "1,");
  std::filesystem::remove(path);
}

Checkpoint tiny_checkpoint(std::uint64_t seed) {
  Checkpoint c;
  c.network = tiny_config(0.25);
  c.network.input_dim = 5;
  c.stft.fft_size = 8;
  c.stft.hop = 4;
  c.lambda = 0.5;
  c.params = init_parameters(c.network, seed);
  round_to_float(c.params);
  return c;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto path = temp_path("rt.bin");
  const Checkpoint c = tiny_checkpoint(1);
  save_checkpoint(path, c);
  const Checkpoint back = load_checkpoint(path, c.network);
  EXPECT_TRUE(back.params == c.params);
  EXPECT_EQ(back.network.hidden, 3);
  EXPECT_EQ(back.network.dropout, 0.25);
  EXPECT_EQ(back.stft.fft_size, 8);
  EXPECT_EQ(back.sample_rate, c.sample_rate);
  EXPECT_EQ(back.lambda, 0.5);
  // Saving the loaded model reproduces the same bytes.
  const auto again = temp_path("rt2.bin");
  save_checkpoint(again, back);
  std::ifstream a(path, std::ios::binary), b(again, std::ios::binary);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}), std::string(std::istreambuf_iterator<char>(b), {}));
  std::filesystem::remove(path);
  std::filesystem::remove(again);
}

TEST(Checkpoint, RejectsDamage) {
  const auto path = temp_path("bad.bin");
  save_checkpoint(path, tiny_checkpoint(2));
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto rewrite = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };
  auto expect_format_error = [&] {
    try {
      load_checkpoint(path);
      ADD_FAILURE() << "expected an error";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kFormat);
    }
  };
  rewrite(bytes.substr(0, bytes.size() - 3));
  expect_format_error();
  std::string magic = bytes;
  magic[0] = 'X';
  rewrite(magic);
  expect_format_error();
  std::string version = bytes;
  version[4] = 9;
  rewrite(version);
  expect_format_error();
  rewrite(bytes + "x");
  expect_format_error();

  rewrite(bytes);
  NetworkConfig other = tiny_config(0.25);
  other.input_dim = 5;
  other.embedding_dim = 3;
  EXPECT_THROW(load_checkpoint(path, other), Error);
  EXPECT_THROW(load_checkpoint(temp_path("missing.bin")), Error);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace orthosep
