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
#include <vector>

namespace orthosep {

inline constexpr int kDefaultSampleRate = 16000;

// Mono audio at a fixed rate. Samples are nominally in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;

  std::size_t size() const noexcept { return samples.size(); }
};

// Throws kInvalidArgument on a non-positive rate or non-finite samples.
void validate(const Waveform& w);

double mean_power(const Waveform& w);

// RIFF/WAVE, PCM, mono, 16-bit little-endian, 16 kHz. Anything else is
// rejected with kFormat naming the offending header field.
Waveform read_wav(const std::filesystem::path& path);

// Samples are clipped to [-1, 1] and quantized to int16.
void write_wav(const std::filesystem::path& path, const Waveform& w);

}  // namespace orthosep
