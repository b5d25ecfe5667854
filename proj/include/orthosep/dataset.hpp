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
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "orthosep/signal.hpp"
#include "orthosep/wav.hpp"

namespace orthosep {

enum class FamilyId { kA, kB };
enum class FamilyPair { kSame, kMixed };

std::string_view to_string(FamilyId id) noexcept;
std::string_view to_string(FamilyPair pair) noexcept;
FamilyId parse_family(std::string_view s);
FamilyPair parse_family_pair(std::string_view s);

// Generation parameters of a synthetic source class: a vibrato-modulated
// harmonic complex with a spectral tilt, a syllable-rate amplitude envelope
// and a band of additive noise. The two presets have disjoint F0 ranges.
struct SourceFamily {
  FamilyId id = FamilyId::kA;
  double f0_min_hz = 0.0;
  double f0_max_hz = 0.0;
  double harmonic_ceiling_hz = 0.0;
  double tilt_db_per_octave = 0.0;
  double vibrato_depth = 0.0;  // relative F0 excursion
  double vibrato_rate_hz = 0.0;
  double syllable_rate_hz = 0.0;
  double noise_lo_hz = 0.0;
  double noise_hi_hz = 0.0;
  double noise_level = 0.0;  // noise RMS relative to the harmonic part
};

const SourceFamily& family_preset(FamilyId id);

// Deterministic for fixed (family, duration, seed). Output RMS is 0.1.
Waveform synth_source(const SourceFamily& family, double duration_s, std::uint64_t seed,
                      int sample_rate = kDefaultSampleRate);

struct MixResult {
  Waveform mixture;
  Waveform scaled_interferer;
  double scale = 1.0;  // amplitude gain applied to the interferer
};

// Scales the interferer so that 10 log10(P_target / P_scaled) == sir_db and
// returns target + scale * interferer. Lengths and rates must match.
MixResult mix_at_sir(const Waveform& target, const Waveform& interferer, double sir_db);

// N x C one-hot matrix, N = frames * bins, row index t * bins + f.
struct LabelIndicator {
  Eigen::MatrixXd rows;
  Eigen::Index frames = 0;
  Eigen::Index bins = 0;

  Eigen::Index num_sources() const noexcept { return rows.cols(); }
  std::vector<int> assignments() const;
};

// Row (t, f) selects argmax_c |S_c(t, f)|^2; ties go to the lowest index.
LabelIndicator compute_ibm(const std::vector<Spectrogram>& sources);

struct SourceRef {
  std::string id;
  FamilyId family = FamilyId::kA;
  std::uint64_t seed = 0;
  // When non-empty the source is read from this WAV instead of synthesized.
  std::string path;
};

struct MixtureSpec {
  std::string id;
  std::string split;  // "train", "val" or "eval"
  SourceRef target;
  SourceRef interferer;
  double sir_db = 0.0;
  FamilyPair family_pair = FamilyPair::kMixed;
  std::uint64_t seed = 0;
  double duration_s = 1.0;
  std::string mixture_path;
};

struct CorpusConfig {
  int train_count = 100;
  int val_count = 20;
  int eval_count = 20;
  std::vector<double> sir_grid{3.0, 6.0, 9.0, 12.0, 15.0};
  double mixed_fraction = 0.5;  // share of mixed-family pairs outside eval
  double duration_s = 0.5;
  std::uint64_t seed = 1;
};

void validate(const CorpusConfig& cfg);

// The eval split is stratified evenly over sir_grid x {same, mixed}; its
// size must be divisible by the number of cells. Utterance ids carry the
// split name, so splits never share a source.
std::vector<MixtureSpec> build_corpus(const CorpusConfig& cfg);

std::vector<MixtureSpec> filter_split(const std::vector<MixtureSpec>& manifest, std::string_view split);

// One JSON object per line.
std::string manifest_line(const MixtureSpec& spec);
MixtureSpec parse_manifest_line(std::string_view line);
void write_manifest(const std::filesystem::path& path, const std::vector<MixtureSpec>& manifest);
std::vector<MixtureSpec> read_manifest(const std::filesystem::path& path);

// Synthesizes the source, or loads it when ref.path is set (relative paths
// resolve against base_dir).
Waveform realize_source(const SourceRef& ref, double duration_s,
                        const std::filesystem::path& base_dir = {});

struct RealizedMixture {
  Waveform target;
  Waveform interferer;  // already scaled to the requested SIR
  Waveform mixture;
};

// Sources must already have equal lengths; user-supplied WAVs are not
// trimmed or padded.
RealizedMixture realize_mixture(const MixtureSpec& spec, const std::filesystem::path& base_dir = {});

}  // namespace orthosep
