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

#include "orthosep/signal.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>

#include <fmt/format.h>
#include <unsupported/Eigen/FFT>

#include "orthosep/error.hpp"

namespace orthosep {

void validate(const StftConfig& cfg) {
  require(cfg.fft_size > 0 && std::has_single_bit(static_cast<unsigned>(cfg.fft_size)),
          fmt::format("fft_size must be a power of two, got {}", cfg.fft_size));
  require(cfg.hop > 0 && cfg.hop <= cfg.fft_size,
          fmt::format("hop must be in (0, fft_size], got {}", cfg.hop));
}

std::vector<double> hann_window(int size) {
  std::vector<double> w(static_cast<std::size_t>(size));
  for (int n = 0; n < size; ++n)
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / size);
  return w;
}

void fft(std::vector<std::complex<double>>& data, bool inverse) {
  const std::size_t n = data.size();
  require(n > 0 && std::has_single_bit(n), "fft length must be a power of two");
  // Plans are cached per engine; one engine per thread keeps that safe.
  thread_local Eigen::FFT<double> engine;
  std::vector<std::complex<double>> out;
  if (inverse) {
    engine.inv(out, data);  // scaled by 1/n
  } else {
    engine.fwd(out, data);
  }
  data = std::move(out);
}

Spectrogram stft(const Waveform& w, const StftConfig& cfg) {
  validate(cfg);
  validate(w);
  const auto len = static_cast<long>(w.samples.size());
  if (len < cfg.fft_size)
    fail(ErrorKind::kInvalidArgument,
         fmt::format("input too short: {} samples, need at least {}", len, cfg.fft_size));
  const long frames = (len - cfg.fft_size) / cfg.hop + 1;
  const int bins = cfg.num_bins();
  const auto window = hann_window(cfg.fft_size);

  Spectrogram s;
  s.config = cfg;
  s.sample_rate = w.sample_rate;
  s.bins.resize(frames, bins);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(cfg.fft_size));
  for (long t = 0; t < frames; ++t) {
    const std::size_t offset = static_cast<std::size_t>(t * cfg.hop);
    for (int n = 0; n < cfg.fft_size; ++n) buf[n] = w.samples[offset + n] * window[n];
    fft(buf);
    for (int f = 0; f < bins; ++f) s.bins(t, f) = buf[f];
  }
  return s;
}

IstftResult istft(const Spectrogram& s) {
  validate(s.config);
  const int n_fft = s.config.fft_size;
  const int hop = s.config.hop;
  require(s.num_bins() == s.config.num_bins(),
          fmt::format("spectrogram has {} bins, config implies {}", s.num_bins(), s.config.num_bins()));
  require(s.frames() > 0, "spectrogram has no frames");

  const auto frames = static_cast<std::size_t>(s.frames());
  const std::size_t out_len = (frames - 1) * hop + n_fft;
  const auto window = hann_window(n_fft);
  std::vector<double> acc(out_len, 0.0);
  std::vector<double> wsum(out_len, 0.0);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(n_fft));

  for (std::size_t t = 0; t < frames; ++t) {
    for (int f = 0; f <= n_fft / 2; ++f) buf[f] = s.bins(static_cast<Eigen::Index>(t), f);
    buf[0] = buf[0].real();
    buf[n_fft / 2] = buf[n_fft / 2].real();
    for (int f = n_fft / 2 + 1; f < n_fft; ++f) buf[f] = std::conj(buf[n_fft - f]);
    fft(buf, /*inverse=*/true);
    const std::size_t offset = t * hop;
    for (int n = 0; n < n_fft; ++n) {
      acc[offset + n] += window[n] * buf[n].real();
      wsum[offset + n] += window[n] * window[n];
    }
  }

  // Near the unpadded ends only one or two frames overlap and the window sum
  // approaches zero; dividing there would blow up any masked (inconsistent)
  // frame content. Such positions are divided by a floor instead, which
  // fades the edges out rather than amplifying them.
  const double floor = kEdgeGuardRatio * *std::max_element(wsum.begin(), wsum.end());
  IstftResult out;
  out.waveform.sample_rate = s.sample_rate;
  out.waveform.samples.resize(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    if (wsum[i] < floor) {
      ++out.guarded_samples;
      out.waveform.samples[i] = acc[i] / floor;
    } else {
      out.waveform.samples[i] = acc[i] / wsum[i];
    }
  }
  return out;
}

FeatureMatrix log_magnitude(const Spectrogram& s, double floor_eps) {
  require(floor_eps > 0.0, fmt::format("log floor must be positive, got {}", floor_eps));
  FeatureMatrix out;
  out.values = (s.bins.cwiseAbs().array() + floor_eps).log().matrix();
  return out;
}

Spectrogram apply_mask(const Spectrogram& mix, const Mask& m) {
  if (mix.bins.rows() != m.values.rows() || mix.bins.cols() != m.values.cols())
    fail(ErrorKind::kInvalidArgument,
         fmt::format("mask shape {}x{} does not match spectrogram {}x{}", m.values.rows(),
                     m.values.cols(), mix.bins.rows(), mix.bins.cols()));
  Spectrogram out = mix;
  out.bins.array() *= m.values.array().cast<std::complex<double>>();
  return out;
}

}  // namespace orthosep
