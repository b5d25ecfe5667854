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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "orthosep/dataset.hpp"
#include "orthosep/signal.hpp"
#include "orthosep/wav.hpp"

namespace orthosep {

// Reported dB values are clamped to +-kDbCap so reports stay finite.
inline constexpr double kDbCap = 100.0;

// Single-reference SDR: the estimate is split into its projection onto the
// reference and a residual; SDR = 10 log10(|proj|^2 / |residual|^2).
// Silent reference throws; silent estimate gives -kDbCap.
double sdr(const Waveform& estimate, const Waveform& reference);

// Projection alignment of a mask-reconstructed estimate against the
// IBM-oracle reconstruction: 10 log10(|proj|^2 / (|est|^2 - |proj|^2)).
double npa(const Waveform& estimate, const Waveform& reference);

// npa(proposed) - npa(baseline).
double improved_npa(const Waveform& proposed, const Waveform& baseline, const Waveform& reference);

// Fraction of bins whose estimated source label differs from the ideal one,
// minimized over relabelings of the estimate. Both mask sets must be
// complementary and of equal shape and count.
double mask_error_rate(const std::vector<Mask>& estimated, const std::vector<Mask>& ideal);

// Two-mask convenience form: compares the partitions {m, 1 - m}.
double mask_error_rate(const Mask& estimated, const Mask& ideal);

// 100 (baseline - proposed) / baseline; empty when the baseline is zero.
std::optional<double> relative_error_improvement(double err_baseline, double err_proposed);

enum class Method { kBaseline, kProposed };
std::string_view to_string(Method m) noexcept;
inline Method method_for_lambda(double lambda) { return lambda == 0.0 ? Method::kBaseline : Method::kProposed; }

// Metrics of one mixture separated by one model.
struct UtteranceRecord {
  std::string mixture_id;
  int embedding_dim = 0;
  double sir_db = 0.0;
  FamilyPair family_pair = FamilyPair::kMixed;
  Method method = Method::kBaseline;
  double sdr_target = 0.0;  // stream picked by power against the target reference
  double sdr_mean = 0.0;    // mean over all streams under the best permutation
  double npa_db = 0.0;      // target stream against the IBM-oracle target
  double mask_error = 0.0;
  std::vector<int> permutation;  // reference index of each estimated stream
};

struct CellStats {
  double sum = 0.0;
  int count = 0;

  double mean() const noexcept { return count ? sum / count : 0.0; }
};

// Means of one (embedding_dim, method) row, by SIR and by family pairing.
struct MethodRow {
  std::map<double, CellStats> sdr_by_sir;
  std::map<FamilyPair, CellStats> sdr_by_pair;
  std::map<double, CellStats> error_by_sir;
  std::map<double, CellStats> npa_by_sir;
  CellStats sdr_all;
  CellStats sdr_mean_all;
};

struct DimensionBlock {
  std::map<Method, MethodRow> rows;
  // Proposed minus baseline, present only when both methods were run on
  // the same mixtures.
  std::map<double, double> sdr_delta_by_sir;
  std::map<FamilyPair, double> sdr_delta_by_pair;
  std::optional<double> sdr_delta_all;
  std::map<double, double> improved_npa_by_sir;
  std::map<double, std::optional<double>> relative_error_by_sir;
};

struct MetricsReport {
  std::map<int, DimensionBlock> by_dim;
  std::vector<UtteranceRecord> records;
  // Target SDR of ideal-binary-mask separation on the same mixtures, when measured.
  std::optional<CellStats> oracle_sdr;
};

// Groups records into per-cell means. Within one embedding dimension the
// baseline and proposed records must cover identical mixture ids; otherwise
// kInvalidArgument lists the ids missing on each side.
MetricsReport aggregate(const std::vector<UtteranceRecord>& records);

// Per-utterance CSV at full precision.
void write_records_csv(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records);
// Cell means and deltas as CSV at full precision.
void write_summary_csv(const std::filesystem::path& path, const MetricsReport& report);
// Fixed-width text tables (SDR vs SIR, SDR vs pairing, mask quality), 2 decimals.
std::string format_tables(const MetricsReport& report);

}  // namespace orthosep
