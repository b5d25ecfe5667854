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

#include "orthosep/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "orthosep/error.hpp"
#include "orthosep/rng.hpp"

namespace orthosep {

void validate(const NetworkConfig& cfg) {
  require(cfg.input_dim > 0, fmt::format("input_dim must be positive, got {}", cfg.input_dim));
  require(cfg.hidden > 0, fmt::format("hidden must be positive, got {}", cfg.hidden));
  require(cfg.num_layers > 0, fmt::format("num_layers must be positive, got {}", cfg.num_layers));
  require(cfg.embedding_dim > 0, fmt::format("embedding_dim must be positive, got {}", cfg.embedding_dim));
  require(cfg.dropout >= 0.0 && cfg.dropout < 1.0,
          fmt::format("dropout must be in [0, 1), got {}", cfg.dropout));
}

Eigen::Index ModelParameters::num_scalars() const {
  Eigen::Index n = 0;
  for (const auto& b : blocks) n += b.size();
  return n;
}

bool ModelParameters::all_finite() const {
  return std::all_of(blocks.begin(), blocks.end(), [](const auto& b) { return b.allFinite(); });
}

bool operator==(const ModelParameters& a, const ModelParameters& b) {
  if (a.names != b.names || a.blocks.size() != b.blocks.size()) return false;
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    if (a.blocks[i].rows() != b.blocks[i].rows() || a.blocks[i].cols() != b.blocks[i].cols()) return false;
    if (a.blocks[i] != b.blocks[i]) return false;
  }
  return true;
}

namespace {

struct BlockShape {
  std::string name;
  Eigen::Index rows;
  Eigen::Index cols;
  double fan_in;
};

std::vector<BlockShape> layout(const NetworkConfig& cfg) {
  std::vector<BlockShape> out;
  const Eigen::Index h = cfg.hidden;
  for (int l = 0; l < cfg.num_layers; ++l) {
    const Eigen::Index in = l == 0 ? cfg.input_dim : 2 * h;
    for (int d = 0; d < 2; ++d) {
      const std::string prefix = fmt::format("lstm{}.{}", l, d == 0 ? "fwd" : "bwd");
      out.push_back({prefix + ".w_in", 4 * h, in, static_cast<double>(in)});
      out.push_back({prefix + ".w_rec", 4 * h, h, static_cast<double>(h)});
      out.push_back({prefix + ".bias", 4 * h, 1, static_cast<double>(h)});
    }
  }
  out.push_back({"dense.weight", cfg.output_dim(), 2 * h, 2.0 * h});
  out.push_back({"dense.bias", cfg.output_dim(), 1, 2.0 * h});
  return out;
}

}  // namespace

ModelParameters zero_parameters(const NetworkConfig& cfg) {
  validate(cfg);
  ModelParameters p;
  for (const auto& s : layout(cfg)) {
    p.names.push_back(s.name);
    p.blocks.push_back(Eigen::MatrixXd::Zero(s.rows, s.cols));
  }
  return p;
}

ModelParameters init_parameters(const NetworkConfig& cfg, std::uint64_t seed) {
  ModelParameters p = zero_parameters(cfg);
  const auto shapes = layout(cfg);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    Rng rng(mix_seed(seed, i));
    const double bound = 1.0 / std::sqrt(shapes[i].fan_in);
    auto& b = p.blocks[i];
    for (Eigen::Index r = 0; r < b.rows(); ++r)
      for (Eigen::Index c = 0; c < b.cols(); ++c) b(r, c) = rng.uniform(-bound, bound);
  }
  return p;
}

void check_shapes(const ModelParameters& params, const NetworkConfig& cfg) {
  validate(cfg);
  const auto shapes = layout(cfg);
  if (params.blocks.size() != shapes.size() || params.names.size() != shapes.size())
    fail(ErrorKind::kInvalidArgument,
         fmt::format("parameter set has {} blocks, configuration needs {}", params.blocks.size(), shapes.size()));
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& b = params.blocks[i];
    if (params.names[i] != shapes[i].name || b.rows() != shapes[i].rows || b.cols() != shapes[i].cols)
      fail(ErrorKind::kInvalidArgument,
           fmt::format("block {} is '{}' {}x{}, configuration needs '{}' {}x{}", i, params.names[i], b.rows(),
                       b.cols(), shapes[i].name, shapes[i].rows, shapes[i].cols));
  }
}

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Activations of one LSTM direction, indexed by absolute time.
struct DirectionCache {
  Eigen::MatrixXd gates;  // T x 4H, post-nonlinearity, order i f g o
  Eigen::MatrixXd cell;   // T x H
  Eigen::MatrixXd out;    // T x H
};

struct LayerCache {
  Eigen::MatrixXd input;  // T x D_in
  DirectionCache dir[2];
  Eigen::MatrixXd output;   // T x 2H after dropout
  Eigen::MatrixXd dropout;  // T x 2H multiplier, empty when inactive
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Eigen::MatrixXd dense_out;  // T x F*K after tanh
  Eigen::MatrixXd raw;        // N x K before normalization
  Eigen::MatrixXd embedding;  // N x K
};

void run_direction(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w_in, const Eigen::MatrixXd& w_rec,
                   const Eigen::MatrixXd& bias, bool reverse, DirectionCache& cache) {
  const Eigen::Index steps = x.rows();
  const Eigen::Index h = w_rec.cols();
  Eigen::MatrixXd pre = x * w_in.transpose();
  pre.rowwise() += bias.col(0).transpose();
  cache.gates.resize(steps, 4 * h);
  cache.cell.resize(steps, h);
  cache.out.resize(steps, h);
  Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd a(4 * h);
  for (Eigen::Index k = 0; k < steps; ++k) {
    const Eigen::Index t = reverse ? steps - 1 - k : k;
    a.noalias() = w_rec * h_prev;
    a += pre.row(t).transpose();
    for (Eigen::Index j = 0; j < h; ++j) {
      const double i = sigmoid(a(j));
      const double f = sigmoid(a(h + j));
      const double g = std::tanh(a(2 * h + j));
      const double o = sigmoid(a(3 * h + j));
      const double c = f * c_prev(j) + i * g;
      cache.gates(t, j) = i;
      cache.gates(t, h + j) = f;
      cache.gates(t, 2 * h + j) = g;
      cache.gates(t, 3 * h + j) = o;
      cache.cell(t, j) = c;
      cache.out(t, j) = o * std::tanh(c);
      c_prev(j) = c;
      h_prev(j) = cache.out(t, j);
    }
  }
}

ForwardCache run_forward(const ModelParameters& p, const NetworkConfig& cfg, const FeatureMatrix& features,
                         bool train_mode, std::uint64_t dropout_seed) {
  check_shapes(p, cfg);
  const Eigen::MatrixXd& x = features.values;
  if (x.cols() != cfg.input_dim)
    fail(ErrorKind::kInvalidArgument,
         fmt::format("features have {} columns, network expects {}", x.cols(), cfg.input_dim));
  require(x.rows() > 0, "features have no frames");

  const Eigen::Index steps = x.rows();
  const Eigen::Index h = cfg.hidden;
  ForwardCache cache;
  cache.layers.resize(static_cast<std::size_t>(cfg.num_layers));
  Eigen::MatrixXd current = x;
  for (int l = 0; l < cfg.num_layers; ++l) {
    LayerCache& lc = cache.layers[static_cast<std::size_t>(l)];
    lc.input = current;
    for (int d = 0; d < 2; ++d) {
      run_direction(current, p.blocks[ModelParameters::lstm_index(l, d, 0)],
                    p.blocks[ModelParameters::lstm_index(l, d, 1)],
                    p.blocks[ModelParameters::lstm_index(l, d, 2)], d == 1, lc.dir[d]);
    }
    lc.output.resize(steps, 2 * h);
    lc.output << lc.dir[0].out, lc.dir[1].out;
    if (train_mode && cfg.dropout > 0.0) {
      Rng rng(mix_seed(dropout_seed, static_cast<std::uint64_t>(l)));
      const double keep = 1.0 - cfg.dropout;
      lc.dropout.resize(steps, 2 * h);
      for (Eigen::Index t = 0; t < steps; ++t)
        for (Eigen::Index j = 0; j < 2 * h; ++j) lc.dropout(t, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
      lc.output.array() *= lc.dropout.array();
    }
    current = lc.output;
  }

  const auto& wd = p.blocks[p.dense_weight_index()];
  const auto& bd = p.blocks[p.dense_bias_index()];
  cache.dense_out = current * wd.transpose();
  cache.dense_out.rowwise() += bd.col(0).transpose();
  cache.dense_out = cache.dense_out.array().tanh().matrix();

  const Eigen::Index bins = cfg.input_dim;
  const Eigen::Index k = cfg.embedding_dim;
  cache.raw.resize(steps * bins, k);
  for (Eigen::Index t = 0; t < steps; ++t)
    for (Eigen::Index f = 0; f < bins; ++f)
      for (Eigen::Index j = 0; j < k; ++j) cache.raw(t * bins + f, j) = cache.dense_out(t, f * k + j);
  cache.embedding = normalize_rows(cache.raw);
  return cache;
}

// Names the first tensor along the forward path that holds NaN or Inf.
std::string first_non_finite(const FeatureMatrix& features, const ForwardCache& cache) {
  if (!features.values.allFinite()) return "features";
  for (std::size_t l = 0; l < cache.layers.size(); ++l) {
    if (!cache.layers[l].dir[0].out.allFinite()) return fmt::format("lstm{}.fwd.output", l);
    if (!cache.layers[l].dir[1].out.allFinite()) return fmt::format("lstm{}.bwd.output", l);
  }
  if (!cache.dense_out.allFinite()) return "dense.output";
  if (!cache.embedding.allFinite()) return "embedding";
  return "loss";
}

// Backpropagates dOut (T x H, gradient on this direction's outputs) through
// time; accumulates parameter gradients and returns dX (T x D_in).
Eigen::MatrixXd backprop_direction(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w_in,
                                   const Eigen::MatrixXd& w_rec, const DirectionCache& cache, bool reverse,
                                   const Eigen::MatrixXd& d_out, Eigen::MatrixXd& g_in, Eigen::MatrixXd& g_rec,
                                   Eigen::MatrixXd& g_bias) {
  const Eigen::Index steps = x.rows();
  const Eigen::Index h = w_rec.cols();
  Eigen::MatrixXd d_pre(steps, 4 * h);
  Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd da(4 * h);
  for (Eigen::Index k = steps - 1; k >= 0; --k) {
    const Eigen::Index t = reverse ? steps - 1 - k : k;
    const Eigen::Index prev = reverse ? t + 1 : t - 1;
    const bool has_prev = k > 0;
    for (Eigen::Index j = 0; j < h; ++j) {
      const double i = cache.gates(t, j);
      const double f = cache.gates(t, h + j);
      const double g = cache.gates(t, 2 * h + j);
      const double o = cache.gates(t, 3 * h + j);
      const double tc = std::tanh(cache.cell(t, j));
      const double c_prev = has_prev ? cache.cell(prev, j) : 0.0;
      const double dh = d_out(t, j) + dh_next(j);
      const double dc = dh * o * (1.0 - tc * tc) + dc_next(j);
      da(j) = dc * g * i * (1.0 - i);
      da(h + j) = dc * c_prev * f * (1.0 - f);
      da(2 * h + j) = dc * i * (1.0 - g * g);
      da(3 * h + j) = dh * tc * o * (1.0 - o);
      dc_next(j) = dc * f;
    }
    d_pre.row(t) = da.transpose();
    if (has_prev) g_rec.noalias() += da * cache.out.row(prev);
    dh_next.noalias() = w_rec.transpose() * da;
  }
  g_in.noalias() += d_pre.transpose() * x;
  g_bias.col(0) += d_pre.colwise().sum().transpose();
  return d_pre * w_in;
}

}  // namespace

Eigen::MatrixXd forward(const ModelParameters& params, const NetworkConfig& cfg, const FeatureMatrix& features,
                        bool train_mode, std::uint64_t dropout_seed) {
  return run_forward(params, cfg, features, train_mode, dropout_seed).embedding;
}

BackwardResult backward(const ModelParameters& params, const NetworkConfig& cfg, const FeatureMatrix& features,
                        const Eigen::MatrixXd& y, double lambda, std::uint64_t dropout_seed,
                        const RowWeights& weights, bool train_mode) {
  const ForwardCache cache = run_forward(params, cfg, features, train_mode, dropout_seed);
  BackwardResult out;
  out.loss = combined_loss(cache.embedding, y, lambda, weights);
  if (!std::isfinite(out.loss.total))
    fail(ErrorKind::kNumeric, fmt::format("non-finite loss; first non-finite tensor: {}",
                                          first_non_finite(features, cache)));

  out.grads = zero_parameters(cfg);
  const Eigen::MatrixXd d_emb = loss_gradient(cache.embedding, y, lambda, weights);

  // Row normalization: v = z / |z|, dz = (dv - v (v . dv)) / |z|.
  const Eigen::Index steps = features.values.rows();
  const Eigen::Index bins = cfg.input_dim;
  const Eigen::Index k = cfg.embedding_dim;
  Eigen::MatrixXd d_dense(steps, bins * k);
  for (Eigen::Index t = 0; t < steps; ++t) {
    for (Eigen::Index f = 0; f < bins; ++f) {
      const Eigen::Index row = t * bins + f;
      const double norm = cache.raw.row(row).norm();
      if (norm > 0.0) {
        const auto v = cache.embedding.row(row);
        const auto g = d_emb.row(row);
        const double proj = v.dot(g);
        for (Eigen::Index j = 0; j < k; ++j) d_dense(t, f * k + j) = (g(j) - v(j) * proj) / norm;
      } else {
        d_dense.block(t, f * k, 1, k).setZero();
      }
    }
  }
  d_dense.array() *= 1.0 - cache.dense_out.array().square();

  const LayerCache& top = cache.layers.back();
  out.grads.blocks[out.grads.dense_weight_index()] = d_dense.transpose() * top.output;
  out.grads.blocks[out.grads.dense_bias_index()] = d_dense.colwise().sum().transpose();
  Eigen::MatrixXd d_layer = d_dense * params.blocks[params.dense_weight_index()];

  const Eigen::Index h = cfg.hidden;
  for (int l = cfg.num_layers - 1; l >= 0; --l) {
    const LayerCache& lc = cache.layers[static_cast<std::size_t>(l)];
    if (lc.dropout.size() > 0) d_layer.array() *= lc.dropout.array();
    Eigen::MatrixXd d_input = Eigen::MatrixXd::Zero(lc.input.rows(), lc.input.cols());
    for (int d = 0; d < 2; ++d) {
      const std::size_t wi = ModelParameters::lstm_index(l, d, 0);
      const std::size_t wr = ModelParameters::lstm_index(l, d, 1);
      const std::size_t bi = ModelParameters::lstm_index(l, d, 2);
      const Eigen::MatrixXd d_dir = d_layer.middleCols(d * h, h);
      d_input += backprop_direction(lc.input, params.blocks[wi], params.blocks[wr], lc.dir[d], d == 1, d_dir,
                                    out.grads.blocks[wi], out.grads.blocks[wr], out.grads.blocks[bi]);
    }
    d_layer = std::move(d_input);
  }
  return out;
}

OptimizerState make_optimizer(const ModelParameters& params, double learning_rate) {
  require(learning_rate >= 0.0, fmt::format("learning rate must be non-negative, got {}", learning_rate));
  OptimizerState s;
  s.first_moment = params;
  s.second_moment = params;
  for (auto& b : s.first_moment.blocks) b.setZero();
  for (auto& b : s.second_moment.blocks) b.setZero();
  s.learning_rate = learning_rate;
  return s;
}

void adam_step(ModelParameters& params, const ModelParameters& grads, OptimizerState& state) {
  require(params.size() == grads.size() && params.size() == state.first_moment.size(),
          "adam_step: parameter, gradient and state block counts differ");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params.blocks[i];
    const auto& g = grads.blocks[i];
    auto& m = state.first_moment.blocks[i];
    auto& v = state.second_moment.blocks[i];
    require(p.rows() == g.rows() && p.cols() == g.cols() && m.rows() == p.rows() && m.cols() == p.cols(),
            fmt::format("adam_step: shape mismatch in block '{}'", params.names[i]));
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    p.array() -= state.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
  }
}

TrainResult train(const std::vector<TrainingExample>& examples, const NetworkConfig& cfg, const TrainHyper& hyper,
                  const EpochCallback& on_epoch) {
  return train(examples, cfg, hyper, init_parameters(cfg, mix_seed(hyper.seed, 0x1417)), on_epoch);
}

TrainResult train(const std::vector<TrainingExample>& examples, const NetworkConfig& cfg, const TrainHyper& hyper,
                  ModelParameters initial, const EpochCallback& on_epoch) {
  require(!examples.empty(), "training split is empty");
  require(hyper.epochs >= 0, "epochs must be non-negative");
  require(hyper.lambda >= 0.0, "lambda must be non-negative");
  check_shapes(initial, cfg);

  TrainResult result;
  result.params = std::move(initial);
  OptimizerState opt = make_optimizer(result.params, hyper.learning_rate);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    Rng shuffle(mix_seed(hyper.seed, 0x5eed0000ull + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    EpochLog entry;
    entry.epoch = epoch;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const TrainingExample& ex = examples[order[step]];
      const std::uint64_t dropout_seed =
          mix_seed(hyper.seed, (static_cast<std::uint64_t>(epoch) << 32) | static_cast<std::uint64_t>(step));
      BackwardResult br;
      try {
        br = backward(result.params, cfg, ex.features, ex.labels, hyper.lambda, dropout_seed, ex.weights);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kNumeric) throw;
        result.diverged = true;
        result.divergence = fmt::format("epoch {}, utterance '{}': {}", epoch, ex.id, e.what());
        return result;
      }
      ModelParameters next = result.params;
      adam_step(next, br.grads, opt);
      if (!next.all_finite()) {
        result.diverged = true;
        result.divergence = fmt::format("epoch {}, utterance '{}': non-finite parameters after update", epoch, ex.id);
        return result;
      }
      result.params = std::move(next);
      entry.mean_dc += br.loss.dc_term;
      entry.mean_penalty += br.loss.penalty_term;
      entry.mean_total += br.loss.total;
    }
    const double n = static_cast<double>(order.size());
    entry.mean_dc /= n;
    entry.mean_penalty /= n;
    entry.mean_total /= n;
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return result;
}

void write_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, fmt::format("cannot open '{}' for writing", path.string()));
  out << "epoch,mean_dc,mean_penalty,mean_total\n";
  for (const auto& e : log)
    out << fmt::format("{},{:.17g},{:.17g},{:.17g}\n", e.epoch, e.mean_dc, e.mean_penalty, e.mean_total);
  if (!out) fail(ErrorKind::kIo, fmt::format("write to '{}' failed", path.string()));
}

void round_to_float(ModelParameters& params) {
  for (auto& b : params.blocks) b = b.cast<float>().cast<double>();
}

}  // namespace orthosep
