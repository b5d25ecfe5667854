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

#include <complex>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "orthosep/wav.hpp"

namespace orthosep {

enum class WindowType { kHann };

struct StftConfig {
  int fft_size = 512;
  int hop = 256;
  WindowType window = WindowType::kHann;

  int num_bins() const noexcept { return fft_size / 2 + 1; }
};

void validate(const StftConfig& cfg);

// Periodic Hann, w[n] = 0.5 - 0.5 cos(2 pi n / N).
std::vector<double> hann_window(int size);

// One-sided complex spectrogram, frames x bins.
struct Spectrogram {
  Eigen::MatrixXcd bins;
  StftConfig config;
  int sample_rate = kDefaultSampleRate;

  Eigen::Index frames() const noexcept { return bins.rows(); }
  Eigen::Index num_bins() const noexcept { return bins.cols(); }
};

// Log spectral magnitude, frames x bins.
struct FeatureMatrix {
  Eigen::MatrixXd values;
};

// Binary time-frequency mask for one source.
struct Mask {
  Eigen::MatrixXd values;
  int source_index = 0;
};

// In-place complex DFT; size must be a power of two. The inverse scales by 1/n.
void fft(std::vector<std::complex<double>>& data, bool inverse = false);

// Frames are taken from sample 0 with no centering pad; T = floor((L - N) / hop) + 1.
// Trailing samples that do not fill a frame are dropped.
Spectrogram stft(const Waveform& w, const StftConfig& cfg);

// Positions whose squared-window sum is below this fraction of its peak are
// divided by that floor instead of their own sum. For a Hann window with
// hop <= fft_size / 2 only samples within the first and last hop qualify.
inline constexpr double kEdgeGuardRatio = 0.25;

struct IstftResult {
  Waveform waveform;
  // Number of output positions normalized by the floor.
  std::size_t guarded_samples = 0;
};

// Least-squares overlap-add: y[n] = sum_t w[n - tH] x_t[n - tH] / sum_t w^2[n - tH].
// Output length is (T - 1) * hop + fft_size.
IstftResult istft(const Spectrogram& s);

inline constexpr double kDefaultLogFloor = 1e-7;

FeatureMatrix log_magnitude(const Spectrogram& s, double floor_eps = kDefaultLogFloor);

Spectrogram apply_mask(const Spectrogram& mix, const Mask& m);

}  // namespace orthosep
