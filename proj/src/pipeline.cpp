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

#include "orthosep/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "orthosep/embedding.hpp"
#include "orthosep/error.hpp"
#include "orthosep/rng.hpp"

namespace orthosep {

void validate(const ExperimentConfig& cfg) {
  validate(cfg.stft);
  validate(cfg.network);
  validate(cfg.corpus);
  require(cfg.log_floor > 0.0, "log_floor must be positive");
  require(cfg.silence_db >= 0.0, "silence_db must be >= 0 (0 disables it)");
  require(cfg.network.input_dim == cfg.stft.num_bins(),
          fmt::format("network input_dim {} must equal fft_size/2+1 = {}", cfg.network.input_dim, cfg.stft.num_bins()));
  require(cfg.training.lambda >= 0.0, "lambda must be non-negative");
  require(cfg.training.learning_rate >= 0.0, "learning rate must be non-negative");
  require(cfg.training.epochs >= 0, "epochs must be non-negative");
  require(cfg.num_sources >= 2, fmt::format("num_sources must be >= 2, got {}", cfg.num_sources));
  require(cfg.clustering.restarts >= 1 && cfg.clustering.max_iter >= 1 && cfg.clustering.tol >= 0.0,
          "clustering needs restarts >= 1, max_iter >= 1, tol >= 0");
  require(cfg.threads >= 1, "threads must be >= 1");
  const int min_samples = cfg.stft.fft_size;
  require(cfg.corpus.duration_s * kDefaultSampleRate >= min_samples,
          fmt::format("corpus duration {} s is shorter than one STFT frame", cfg.corpus.duration_s));
}

namespace {

using nlohmann::json;

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string to_json(const ExperimentConfig& c) {
  json j;
  j["stft"] = {{"fft_size", c.stft.fft_size}, {"hop", c.stft.hop}, {"window", "hann"},
               {"log_floor", c.log_floor}, {"silence_db", c.silence_db}};
  j["network"] = {{"input_dim", c.network.input_dim},
                  {"hidden", c.network.hidden},
                  {"num_layers", c.network.num_layers},
                  {"embedding_dim", c.network.embedding_dim},
                  {"dropout", c.network.dropout}};
  j["training"] = {{"lambda", c.training.lambda},
                   {"learning_rate", c.training.learning_rate},
                   {"epochs", c.training.epochs},
                   {"seed", c.training.seed}};
  j["corpus"] = {{"train_count", c.corpus.train_count}, {"val_count", c.corpus.val_count},
                 {"eval_count", c.corpus.eval_count},   {"sir_grid", c.corpus.sir_grid},
                 {"mixed_fraction", c.corpus.mixed_fraction}, {"duration_s", c.corpus.duration_s},
                 {"seed", c.corpus.seed}};
  j["clustering"] = {{"num_sources", c.num_sources},
                     {"restarts", c.clustering.restarts},
                     {"max_iter", c.clustering.max_iter},
                     {"tol", c.clustering.tol},
                     {"seed", c.clustering.seed}};
  j["threads"] = c.threads;
  return j.dump(2);
}

namespace {

void expect_keys(const json& obj, std::string_view prefix, std::initializer_list<std::string_view> known) {
  if (!obj.is_object()) fail(ErrorKind::kFormat, fmt::format("bad config: '{}' must be an object", prefix));
  for (const auto& item : obj.items())
    if (std::find(known.begin(), known.end(), item.key()) == known.end())
      fail(ErrorKind::kFormat, fmt::format("bad config: unknown key '{}{}'", prefix, item.key()));
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text, ExperimentConfig c) {
  try {
    const json j = json::parse(text);
    expect_keys(j, "", {"stft", "network", "training", "corpus", "clustering", "threads"});
    if (j.contains("stft")) expect_keys(j.at("stft"), "stft.", {"fft_size", "hop", "window", "log_floor", "silence_db"});
    if (j.contains("network"))
      expect_keys(j.at("network"), "network.", {"input_dim", "hidden", "num_layers", "embedding_dim", "dropout"});
    if (j.contains("training")) expect_keys(j.at("training"), "training.", {"lambda", "learning_rate", "epochs", "seed"});
    if (j.contains("corpus"))
      expect_keys(j.at("corpus"), "corpus.",
                  {"train_count", "val_count", "eval_count", "sir_grid", "mixed_fraction", "duration_s", "seed"});
    if (j.contains("clustering"))
      expect_keys(j.at("clustering"), "clustering.", {"num_sources", "restarts", "max_iter", "tol", "seed"});
    if (j.contains("stft")) {
      const auto& s = j.at("stft");
      read(s, "fft_size", c.stft.fft_size);
      read(s, "hop", c.stft.hop);
      read(s, "log_floor", c.log_floor);
      read(s, "silence_db", c.silence_db);
      if (s.contains("window") && s.at("window").get<std::string>() != "hann")
        fail(ErrorKind::kInvalidArgument, "only the hann window is supported");
      if (!j.contains("network") || !j.at("network").contains("input_dim")) c.network.input_dim = c.stft.num_bins();
    }
    if (j.contains("network")) {
      const auto& n = j.at("network");
      read(n, "input_dim", c.network.input_dim);
      read(n, "hidden", c.network.hidden);
      read(n, "num_layers", c.network.num_layers);
      read(n, "embedding_dim", c.network.embedding_dim);
      read(n, "dropout", c.network.dropout);
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      read(t, "lambda", c.training.lambda);
      read(t, "learning_rate", c.training.learning_rate);
      read(t, "epochs", c.training.epochs);
      read(t, "seed", c.training.seed);
    }
    if (j.contains("corpus")) {
      const auto& k = j.at("corpus");
      read(k, "train_count", c.corpus.train_count);
      read(k, "val_count", c.corpus.val_count);
      read(k, "eval_count", c.corpus.eval_count);
      read(k, "sir_grid", c.corpus.sir_grid);
      read(k, "mixed_fraction", c.corpus.mixed_fraction);
      read(k, "duration_s", c.corpus.duration_s);
      read(k, "seed", c.corpus.seed);
    }
    if (j.contains("clustering")) {
      const auto& k = j.at("clustering");
      read(k, "num_sources", c.num_sources);
      read(k, "restarts", c.clustering.restarts);
      read(k, "max_iter", c.clustering.max_iter);
      read(k, "tol", c.clustering.tol);
      read(k, "seed", c.clustering.seed);
    }
    read(j, "threads", c.threads);
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, fmt::format("bad config: {}", e.what()));
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, fmt::format("cannot open config '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str(), std::move(base));
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, fmt::format("cannot open '{}' for writing", path.string()));
  out << to_json(cfg) << '\n';
  if (!out) fail(ErrorKind::kIo, fmt::format("write to '{}' failed", path.string()));
}

FeatureMatrix network_features(const Spectrogram& s, double log_floor) {
  FeatureMatrix f = log_magnitude(s, log_floor);
  const double mean = f.values.mean();
  const double var = (f.values.array() - mean).square().mean();
  const double sd = std::sqrt(var);
  f.values.array() -= mean;
  if (sd > 0.0) f.values /= sd;
  return f;
}

TrainingExample make_training_example(const MixtureSpec& spec, const ExperimentConfig& cfg,
                                      const std::filesystem::path& base_dir) {
  const RealizedMixture mix = realize_mixture(spec, base_dir);
  const Spectrogram ms = stft(mix.mixture, cfg.stft);
  TrainingExample ex;
  ex.id = spec.id;
  ex.features = network_features(ms, cfg.log_floor);
  ex.labels = compute_ibm({stft(mix.target, cfg.stft), stft(mix.interferer, cfg.stft)}).rows;
  if (cfg.silence_db > 0.0) ex.weights = active_bins(log_magnitude(ms, cfg.log_floor), cfg.silence_db);
  return ex;
}

std::vector<TrainingExample> make_training_examples(const std::vector<MixtureSpec>& specs,
                                                    const ExperimentConfig& cfg,
                                                    const std::filesystem::path& base_dir) {
  std::vector<TrainingExample> out(specs.size());
  parallel_for(specs.size(), cfg.threads,
               [&](std::size_t i) { out[i] = make_training_example(specs[i], cfg, base_dir); });
  return out;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<Waveform> render_streams(const Spectrogram& mixture, const std::vector<Mask>& masks,
                                    std::size_t length) {
  std::vector<Waveform> out;
  out.reserve(masks.size());
  for (const auto& m : masks) {
    Waveform w = istft(apply_mask(mixture, m)).waveform;
    out.push_back(length ? fit_length(w, length) : std::move(w));
  }
  return out;
}

namespace {

void check_nonsilent(const Waveform& w) {
  validate(w);
  if (!(mean_power(w) > 0.0)) fail(ErrorKind::kInvalidArgument, "zero-power source");
}

}  // namespace

SeparationResult separate(const Model& model, const Waveform& mixture, const ExperimentConfig& cfg) {
  check_nonsilent(mixture);
  require(model.network.input_dim == cfg.stft.num_bins(),
          fmt::format("model expects {} frequency bins, STFT produces {}", model.network.input_dim,
                      cfg.stft.num_bins()));
  SeparationResult r;
  r.mixture = stft(mixture, cfg.stft);
  r.embedding = forward(model.params, model.network, network_features(r.mixture, cfg.log_floor));
  r.clusters = kmeans(r.embedding, cfg.num_sources, cfg.clustering);
  r.masks = masks_from_clusters(r.clusters, r.mixture.frames(), r.mixture.num_bins());
  r.streams = render_streams(r.mixture, r.masks);
  if (r.streams.size() >= 2) r.selection = select_target(r.streams);
  return r;
}

SeparationResult separate_oracle(const Waveform& mixture, const std::vector<Waveform>& references,
                                 const ExperimentConfig& cfg) {
  check_nonsilent(mixture);
  require(references.size() >= 2, "oracle separation needs at least two references");
  SeparationResult r;
  r.mixture = stft(mixture, cfg.stft);
  std::vector<Spectrogram> ref_specs;
  for (const auto& ref : references) {
    require(ref.size() == mixture.size(),
            fmt::format("reference has {} samples, mixture has {}", ref.size(), mixture.size()));
    ref_specs.push_back(stft(ref, cfg.stft));
  }
  const LabelIndicator ibm = compute_ibm(ref_specs);
  const auto labels = ibm.assignments();
  r.clusters.assignments = labels;
  r.clusters.centroids = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(references.size()),
                                                   static_cast<Eigen::Index>(references.size()));
  r.masks = masks_from_assignments(labels, static_cast<int>(references.size()), r.mixture.frames(),
                                   r.mixture.num_bins());
  r.streams = render_streams(r.mixture, r.masks);
  r.selection = select_target(r.streams);
  return r;
}

Waveform fit_length(const Waveform& w, std::size_t n) {
  Waveform out = w;
  out.samples.resize(n, 0.0);
  return out;
}

Waveform resynthesize(const Waveform& w, const StftConfig& cfg) { return istft(stft(w, cfg)).waveform; }

double oracle_target_sdr(const RealizedMixture& mix, const ExperimentConfig& cfg) {
  const SeparationResult r = separate_oracle(mix.mixture, {mix.target, mix.interferer}, cfg);
  return sdr(r.streams[0], resynthesize(mix.target, cfg.stft));
}

std::vector<UtteranceRecord> evaluate_model(const Model& model, Method method,
                                            const std::vector<MixtureSpec>& mixtures, const ExperimentConfig& cfg,
                                            const std::filesystem::path& base_dir) {
  require(cfg.num_sources == 2, "evaluation compares against a target and an interferer; num_sources must be 2");
  std::vector<UtteranceRecord> out(mixtures.size());
  parallel_for(mixtures.size(), cfg.threads, [&](std::size_t idx) {
    const MixtureSpec& spec = mixtures[idx];
    const RealizedMixture mix = realize_mixture(spec, base_dir);
    const SeparationResult est = separate(model, mix.mixture, cfg);
    const SeparationResult oracle = separate_oracle(mix.mixture, {mix.target, mix.interferer}, cfg);
    const std::vector<Waveform> refs{resynthesize(mix.target, cfg.stft), resynthesize(mix.interferer, cfg.stft)};

    UtteranceRecord rec;
    rec.mixture_id = spec.id;
    rec.embedding_dim = model.network.embedding_dim;
    rec.sir_db = spec.sir_db;
    rec.family_pair = spec.family_pair;
    rec.method = method;

    // Best stream-to-reference assignment by total SDR.
    std::vector<int> perm{0, 1};
    double best = -std::numeric_limits<double>::infinity();
    std::vector<int> best_perm = perm;
    do {
      double total = 0.0;
      for (std::size_t s = 0; s < perm.size(); ++s) total += sdr(est.streams[s], refs[static_cast<std::size_t>(perm[s])]);
      if (total > best) {
        best = total;
        best_perm = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    rec.permutation = best_perm;
    rec.sdr_mean = best / 2.0;
    rec.sdr_target = sdr(est.streams[static_cast<std::size_t>(est.selection.target_index)], refs[0]);

    const std::size_t target_stream = best_perm[0] == 0 ? 0 : 1;
    rec.npa_db = npa(est.streams[target_stream], oracle.streams[0]);
    rec.mask_error = mask_error_rate(est.masks, oracle.masks);
    out[idx] = std::move(rec);
  });
  return out;
}

EmbeddingStats embedding_stats(const Model& model, const std::vector<MixtureSpec>& mixtures,
                               const ExperimentConfig& cfg, const std::filesystem::path& base_dir) {
  require(!mixtures.empty(), "embedding statistics need at least one mixture");
  const auto k = static_cast<Eigen::Index>(model.network.embedding_dim);
  struct PerUtterance {
    Eigen::MatrixXd embedding;
    LossBreakdown loss;
  };
  std::vector<PerUtterance> parts(mixtures.size());
  parallel_for(mixtures.size(), cfg.threads, [&](std::size_t i) {
    const TrainingExample ex = make_training_example(mixtures[i], cfg, base_dir);
    parts[i].embedding = forward(model.params, model.network, ex.features);
    parts[i].loss = combined_loss(parts[i].embedding, ex.labels, 1.0, ex.weights);
  });

  EmbeddingStats s;
  CovarianceAccumulator pooled(k);
  s.mean_utterance_covariance = Eigen::MatrixXd::Zero(k, k);
  for (const auto& p : parts) {
    pooled.add(p.embedding);
    s.mean_utterance_covariance += covariance(p.embedding);
    s.mean_penalty += p.loss.penalty_term;
    s.mean_dc += p.loss.dc_term;
  }
  const double n = static_cast<double>(parts.size());
  s.mean_utterance_covariance /= n;
  s.mean_penalty /= n;
  s.mean_dc /= n;
  s.covariance = pooled.covariance();
  s.off_diagonal_ratio = off_diagonal_ratio(s.covariance);
  s.utterance_off_diagonal_ratio = off_diagonal_ratio(s.mean_utterance_covariance);
  return s;
}

}  // namespace orthosep
