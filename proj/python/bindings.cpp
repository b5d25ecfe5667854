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

// Python bindings for the orthosep core.

#include <optional>
#include <string>
#include <vector>

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "orthosep/clustering.hpp"
#include "orthosep/commands.hpp"
#include "orthosep/dataset.hpp"
#include "orthosep/embedding.hpp"
#include "orthosep/error.hpp"
#include "orthosep/metrics.hpp"
#include "orthosep/pipeline.hpp"
#include "orthosep/signal.hpp"

namespace py = pybind11;
using namespace orthosep;

namespace {

Waveform to_waveform(const std::vector<double>& samples, int sample_rate) {
  Waveform w;
  w.samples = samples;
  w.sample_rate = sample_rate;
  return w;
}

StftConfig stft_config(int fft_size, int hop) {
  StftConfig cfg;
  cfg.fft_size = fft_size;
  cfg.hop = hop;
  return cfg;
}

ExperimentConfig parse_config(const std::optional<std::string>& json) {
  return json ? config_from_json(*json) : ExperimentConfig{};
}

std::vector<Mask> to_masks(const std::vector<Eigen::MatrixXd>& values) {
  std::vector<Mask> out;
  for (std::size_t i = 0; i < values.size(); ++i) out.push_back(Mask{values[i], static_cast<int>(i)});
  return out;
}

py::dict stats_dict(const EmbeddingStats& s) {
  py::dict d;
  d["covariance"] = s.covariance;
  d["off_diagonal_ratio"] = s.off_diagonal_ratio;
  d["utterance_off_diagonal_ratio"] = s.utterance_off_diagonal_ratio;
  d["mean_penalty"] = s.mean_penalty;
  d["mean_dc"] = s.mean_dc;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Deep-clustering source separation with an orthonormality penalty";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  static py::handle kinds[] = {
      PyErr_NewException("orthosep._core.InvalidArgumentError", base.ptr(), nullptr),
      PyErr_NewException("orthosep._core.IoError", base.ptr(), nullptr),
      PyErr_NewException("orthosep._core.FormatError", base.ptr(), nullptr),
      PyErr_NewException("orthosep._core.NumericError", base.ptr(), nullptr),
  };
  m.attr("InvalidArgumentError") = kinds[0];
  m.attr("IoError") = kinds[1];
  m.attr("FormatError") = kinds[2];
  m.attr("NumericError") = kinds[3];
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(kinds[static_cast<int>(e.kind())].ptr(), e.what());
    }
  });

  // Losses and embedding statistics.
  m.def("normalize_rows", &normalize_rows, py::arg("raw"));
  m.def("dc_loss", &dc_loss, py::arg("v"), py::arg("y"), py::arg("weights") = std::nullopt);
  m.def("penalty", &penalty, py::arg("v"), py::arg("weights") = std::nullopt);
  m.def(
      "combined_loss",
      [](const Eigen::MatrixXd& v, const Eigen::MatrixXd& y, double lambda, const RowWeights& w) {
        const LossBreakdown b = combined_loss(v, y, lambda, w);
        py::dict d;
        d["dc"] = b.dc_term;
        d["penalty"] = b.penalty_term;
        d["total"] = b.total;
        return d;
      },
      py::arg("v"), py::arg("y"), py::arg("lam"), py::arg("weights") = std::nullopt);
  m.def("loss_gradient", &loss_gradient, py::arg("v"), py::arg("y"), py::arg("lam"),
        py::arg("weights") = std::nullopt);
  m.def("covariance", &covariance, py::arg("v"));
  m.def("off_diagonal_ratio", &off_diagonal_ratio, py::arg("c"));

  // Signal front end.
  m.def(
      "stft",
      [](const std::vector<double>& samples, int fft_size, int hop) {
        return stft(to_waveform(samples, kDefaultSampleRate), stft_config(fft_size, hop)).bins;
      },
      py::arg("samples"), py::arg("fft_size") = 512, py::arg("hop") = 256,
      "T x (fft_size/2 + 1) complex spectrogram, Hann window, no centering");
  m.def(
      "istft",
      [](const Eigen::MatrixXcd& bins, int fft_size, int hop) {
        Spectrogram s;
        s.bins = bins;
        s.config = stft_config(fft_size, hop);
        return istft(s).waveform.samples;
      },
      py::arg("bins"), py::arg("fft_size") = 512, py::arg("hop") = 256);

  // Synthetic sources.
  m.def(
      "synth_source",
      [](const std::string& family, double duration_s, std::uint64_t seed) {
        return synth_source(family_preset(parse_family(family)), duration_s, seed).samples;
      },
      py::arg("family"), py::arg("duration_s"), py::arg("seed"));

  // Clustering.
  m.def(
      "kmeans",
      [](const Eigen::MatrixXd& points, int clusters, int restarts, std::uint64_t seed, int max_iter, double tol) {
        KMeansOptions opts;
        opts.restarts = restarts;
        opts.seed = seed;
        opts.max_iter = max_iter;
        opts.tol = tol;
        const ClusterResult r = kmeans(points, clusters, opts);
        py::dict d;
        d["assignments"] = r.assignments;
        d["centroids"] = r.centroids;
        d["inertia"] = r.inertia;
        d["iterations"] = r.iterations;
        d["inertia_history"] = r.inertia_history;
        return d;
      },
      py::arg("points"), py::arg("clusters"), py::arg("restarts") = 5, py::arg("seed") = 0,
      py::arg("max_iter") = 300, py::arg("tol") = 1e-6);

  // Metrics.
  m.def(
      "sdr",
      [](const std::vector<double>& est, const std::vector<double>& ref) {
        return sdr(to_waveform(est, kDefaultSampleRate), to_waveform(ref, kDefaultSampleRate));
      },
      py::arg("estimate"), py::arg("reference"));
  m.def(
      "npa",
      [](const std::vector<double>& est, const std::vector<double>& ref) {
        return npa(to_waveform(est, kDefaultSampleRate), to_waveform(ref, kDefaultSampleRate));
      },
      py::arg("estimate"), py::arg("reference"));
  m.def(
      "mask_error_rate",
      [](const std::vector<Eigen::MatrixXd>& est, const std::vector<Eigen::MatrixXd>& ideal) {
        return mask_error_rate(to_masks(est), to_masks(ideal));
      },
      py::arg("estimated"), py::arg("ideal"));

  // Command bodies; config is a JSON string overriding the defaults.
  m.def("default_config", [] { return to_json(ExperimentConfig{}); });
  m.def(
      "synth",
      [](const std::filesystem::path& out_dir, const std::optional<std::string>& config) {
        const ExperimentConfig cfg = parse_config(config);
        py::gil_scoped_release release;
        return cmd_synth(cfg, out_dir).manifest;
      },
      py::arg("out_dir"), py::arg("config") = std::nullopt, "Returns the manifest path");
  m.def(
      "train",
      [](const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
         const std::optional<std::string>& config, std::optional<double> lam) {
        ExperimentConfig cfg = parse_config(config);
        if (lam) cfg.training.lambda = *lam;
        py::gil_scoped_release release;
        return cmd_train(cfg, manifest, out_dir).checkpoint;
      },
      py::arg("manifest"), py::arg("out_dir"), py::arg("config") = std::nullopt, py::arg("lam") = std::nullopt,
      "Returns the checkpoint path");
  m.def(
      "separate",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& mixture,
         const std::filesystem::path& out_dir, const std::optional<std::string>& config) {
        const ExperimentConfig cfg = parse_config(config);
        SeparateOptions opts;
        opts.checkpoint = checkpoint;
        opts.mixture = mixture;
        opts.out_dir = out_dir;
        SeparationResult r;
        {
          py::gil_scoped_release release;
          r = cmd_separate(cfg, opts);
        }
        std::vector<Eigen::MatrixXd> masks;
        for (const auto& mask : r.masks) masks.push_back(mask.values);
        py::dict d;
        d["target_index"] = r.selection.target_index;
        d["masks"] = masks;
        d["inertia"] = r.clusters.inertia;
        return d;
      },
      py::arg("checkpoint"), py::arg("mixture"), py::arg("out_dir"), py::arg("config") = std::nullopt);
  m.def(
      "evaluate",
      [](const std::filesystem::path& manifest, const std::vector<std::filesystem::path>& checkpoints,
         const std::filesystem::path& out_dir, const std::optional<std::string>& config) {
        const ExperimentConfig cfg = parse_config(config);
        py::gil_scoped_release release;
        return format_tables(cmd_evaluate(cfg, manifest, checkpoints, out_dir));
      },
      py::arg("manifest"), py::arg("checkpoints"), py::arg("out_dir"), py::arg("config") = std::nullopt,
      "Returns the formatted result tables");
  m.def(
      "export_cov",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
         const std::filesystem::path& out_dir, const std::optional<std::string>& config) {
        const ExperimentConfig cfg = parse_config(config);
        EmbeddingStats s;
        {
          py::gil_scoped_release release;
          s = cmd_export_cov(cfg, checkpoint, manifest, out_dir);
        }
        return stats_dict(s);
      },
      py::arg("checkpoint"), py::arg("manifest"), py::arg("out_dir"), py::arg("config") = std::nullopt);
}
