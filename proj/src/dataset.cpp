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

#include "orthosep/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "orthosep/error.hpp"
#include "orthosep/rng.hpp"

namespace orthosep {

std::string_view to_string(FamilyId id) noexcept { return id == FamilyId::kA ? "A" : "B"; }

std::string_view to_string(FamilyPair pair) noexcept {
  return pair == FamilyPair::kSame ? "same" : "mixed";
}

FamilyId parse_family(std::string_view s) {
  if (s == "A") return FamilyId::kA;
  if (s == "B") return FamilyId::kB;
  fail(ErrorKind::kFormat, fmt::format("unknown source family '{}'", s));
}

FamilyPair parse_family_pair(std::string_view s) {
  if (s == "same") return FamilyPair::kSame;
  if (s == "mixed") return FamilyPair::kMixed;
  fail(ErrorKind::kFormat, fmt::format("unknown family pair '{}'", s));
}

const SourceFamily& family_preset(FamilyId id) {
  // Low, steeply tilted voices with low-band breath noise.
  static const SourceFamily kA{FamilyId::kA, 90.0,  150.0, 2000.0, 9.0, 0.06, 5.0,
                               3.0,          200.0, 1200.0, 0.15};
  // High, bright voices with high-band noise.
  static const SourceFamily kB{FamilyId::kB, 270.0, 420.0, 6500.0, 3.0, 0.04, 6.0,
                               4.0,          2500.0, 6000.0, 0.15};
  return id == FamilyId::kA ? kA : kB;
}

Waveform synth_source(const SourceFamily& family, double duration_s, std::uint64_t seed,
                      int sample_rate) {
  require(duration_s > 0.0, fmt::format("duration must be positive, got {}", duration_s));
  require(sample_rate > 0, "sample rate must be positive");
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(family.id)));
  const auto len = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  const double fs = sample_rate;
  const double two_pi = 2.0 * std::numbers::pi;

  const double f0 = rng.uniform(family.f0_min_hz, family.f0_max_hz);
  const double vib_phase = rng.uniform(0.0, two_pi);
  const double drift = rng.uniform(-0.08, 0.08);  // relative glide over the utterance
  const double syl_rate = family.syllable_rate_hz * rng.uniform(0.8, 1.25);
  const double syl_phase = rng.uniform(0.0, two_pi);

  const int harmonics = std::max(
      1, static_cast<int>(family.harmonic_ceiling_hz / (family.f0_max_hz * (1.0 + family.vibrato_depth))));
  std::vector<double> amp(harmonics), phase(harmonics);
  for (int h = 0; h < harmonics; ++h) {
    const double tilt_db = -family.tilt_db_per_octave * std::log2(h + 1.0);
    amp[h] = std::pow(10.0, (tilt_db + rng.uniform(-3.0, 3.0)) / 20.0);
    phase[h] = rng.uniform(0.0, two_pi);
  }

  constexpr int kNoiseComponents = 48;
  std::vector<double> nfreq(kNoiseComponents), nphase(kNoiseComponents);
  for (int k = 0; k < kNoiseComponents; ++k) {
    nfreq[k] = rng.uniform(family.noise_lo_hz, family.noise_hi_hz);
    nphase[k] = rng.uniform(0.0, two_pi);
  }

  std::vector<double> voiced(len), noise(len);
  double theta = 0.0;
  for (std::size_t n = 0; n < len; ++n) {
    const double t = static_cast<double>(n) / fs;
    const double inst_f0 =
        f0 * (1.0 + drift * t / duration_s) *
        (1.0 + family.vibrato_depth * std::sin(two_pi * family.vibrato_rate_hz * t + vib_phase));
    theta += two_pi * inst_f0 / fs;
    double v = 0.0;
    for (int h = 0; h < harmonics; ++h) {
      if ((h + 1) * inst_f0 >= 0.5 * fs) break;
      v += amp[h] * std::sin((h + 1) * theta + phase[h]);
    }
    double z = 0.0;
    for (int k = 0; k < kNoiseComponents; ++k) z += std::sin(two_pi * nfreq[k] * t + nphase[k]);
    // Syllable envelope: raised cosine with a floor, so dominance shifts over time.
    const double env = 0.1 + 0.9 * (0.5 - 0.5 * std::cos(two_pi * syl_rate * t + syl_phase));
    voiced[n] = env * v;
    noise[n] = env * z;
  }

  auto rms = [](const std::vector<double>& x) {
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return std::sqrt(acc / static_cast<double>(x.size()));
  };
  const double vr = rms(voiced);
  const double nr = rms(noise);
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(len);
  for (std::size_t n = 0; n < len; ++n)
    w.samples[n] = voiced[n] / vr + family.noise_level * noise[n] / nr;
  const double scale = 0.1 / rms(w.samples);
  for (double& x : w.samples) x *= scale;
  return w;
}

MixResult mix_at_sir(const Waveform& target, const Waveform& interferer, double sir_db) {
  require(std::isfinite(sir_db), "sir_db must be finite");
  require(target.size() == interferer.size(),
          fmt::format("source lengths differ: {} vs {} samples", target.size(), interferer.size()));
  require(target.sample_rate == interferer.sample_rate,
          fmt::format("sample rates differ: {} vs {}", target.sample_rate, interferer.sample_rate));
  validate(target);
  validate(interferer);
  const double pt = mean_power(target);
  const double pi = mean_power(interferer);
  if (!(pt > 0.0) || !(pi > 0.0)) fail(ErrorKind::kInvalidArgument, "zero-power source");

  MixResult out;
  out.scale = std::sqrt(pt / (pi * std::pow(10.0, sir_db / 10.0)));
  out.scaled_interferer.sample_rate = interferer.sample_rate;
  out.scaled_interferer.samples.resize(interferer.size());
  out.mixture.sample_rate = target.sample_rate;
  out.mixture.samples.resize(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    out.scaled_interferer.samples[i] = out.scale * interferer.samples[i];
    out.mixture.samples[i] = target.samples[i] + out.scaled_interferer.samples[i];
  }
  return out;
}

std::vector<int> LabelIndicator::assignments() const {
  std::vector<int> out(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    Eigen::Index c = 0;
    rows.row(i).maxCoeff(&c);
    out[i] = static_cast<int>(c);
  }
  return out;
}

LabelIndicator compute_ibm(const std::vector<Spectrogram>& sources) {
  require(sources.size() >= 2, "compute_ibm needs at least two sources");
  const Eigen::Index frames = sources[0].frames();
  const Eigen::Index bins = sources[0].num_bins();
  for (std::size_t c = 1; c < sources.size(); ++c) {
    if (sources[c].frames() != frames || sources[c].num_bins() != bins)
      fail(ErrorKind::kInvalidArgument,
           fmt::format("source {} is {}x{}, expected {}x{}", c, sources[c].frames(),
                       sources[c].num_bins(), frames, bins));
  }
  LabelIndicator y;
  y.frames = frames;
  y.bins = bins;
  y.rows = Eigen::MatrixXd::Zero(frames * bins, static_cast<Eigen::Index>(sources.size()));
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index f = 0; f < bins; ++f) {
      std::size_t best = 0;
      double best_power = std::norm(sources[0].bins(t, f));
      for (std::size_t c = 1; c < sources.size(); ++c) {
        const double p = std::norm(sources[c].bins(t, f));
        if (p > best_power) {
          best_power = p;
          best = c;
        }
      }
      y.rows(t * bins + f, static_cast<Eigen::Index>(best)) = 1.0;
    }
  }
  return y;
}

void validate(const CorpusConfig& cfg) {
  require(cfg.train_count >= 0 && cfg.val_count >= 0 && cfg.eval_count >= 0,
          "split counts must be non-negative");
  require(!cfg.sir_grid.empty(), "sir_grid must not be empty");
  for (double s : cfg.sir_grid) require(std::isfinite(s), "sir_grid values must be finite");
  require(cfg.mixed_fraction >= 0.0 && cfg.mixed_fraction <= 1.0, "mixed_fraction must be in [0, 1]");
  require(cfg.duration_s > 0.0, "duration_s must be positive");
  const int cells = static_cast<int>(cfg.sir_grid.size()) * 2;
  if (cfg.eval_count % cells != 0)
    fail(ErrorKind::kInvalidArgument,
         fmt::format("eval_count {} is not divisible by {} strata ({} SIRs x 2 pairings); remainder {}",
                     cfg.eval_count, cells, cfg.sir_grid.size(), cfg.eval_count % cells));
}

namespace {

MixtureSpec make_mixture(const std::string& split, int index, double sir_db, FamilyPair pair,
                         Rng& rng, double duration_s) {
  MixtureSpec m;
  m.split = split;
  m.id = fmt::format("{}-{:05d}", split, index);
  m.sir_db = sir_db;
  m.family_pair = pair;
  m.duration_s = duration_s;
  m.seed = rng.next();
  const FamilyId tf = rng.uniform() < 0.5 ? FamilyId::kA : FamilyId::kB;
  const FamilyId inf = pair == FamilyPair::kSame ? tf : (tf == FamilyId::kA ? FamilyId::kB : FamilyId::kA);
  m.target = {fmt::format("{}-{}-{:05d}", split, to_string(tf), 2 * index), tf, rng.next(), {}};
  m.interferer = {fmt::format("{}-{}-{:05d}", split, to_string(inf), 2 * index + 1), inf, rng.next(), {}};
  return m;
}

}  // namespace

std::vector<MixtureSpec> build_corpus(const CorpusConfig& cfg) {
  validate(cfg);
  std::vector<MixtureSpec> out;
  out.reserve(static_cast<std::size_t>(cfg.train_count + cfg.val_count + cfg.eval_count));
  const auto grid = static_cast<std::uint64_t>(cfg.sir_grid.size());

  auto random_split = [&](const std::string& split, int count, std::uint64_t tag) {
    Rng rng(mix_seed(cfg.seed, tag));
    for (int i = 0; i < count; ++i) {
      const double sir = cfg.sir_grid[rng.below(grid)];
      const FamilyPair pair = rng.uniform() < cfg.mixed_fraction ? FamilyPair::kMixed : FamilyPair::kSame;
      out.push_back(make_mixture(split, i, sir, pair, rng, cfg.duration_s));
    }
  };
  random_split("train", cfg.train_count, 1);
  random_split("val", cfg.val_count, 2);

  Rng rng(mix_seed(cfg.seed, 3));
  const int cells = static_cast<int>(grid) * 2;
  for (int i = 0; i < cfg.eval_count; ++i) {
    const int cell = i % cells;
    const double sir = cfg.sir_grid[static_cast<std::size_t>(cell / 2)];
    const FamilyPair pair = cell % 2 == 0 ? FamilyPair::kSame : FamilyPair::kMixed;
    out.push_back(make_mixture("eval", i, sir, pair, rng, cfg.duration_s));
  }
  return out;
}

std::vector<MixtureSpec> filter_split(const std::vector<MixtureSpec>& manifest, std::string_view split) {
  std::vector<MixtureSpec> out;
  std::copy_if(manifest.begin(), manifest.end(), std::back_inserter(out),
               [&](const MixtureSpec& m) { return m.split == split; });
  return out;
}

namespace {

using nlohmann::json;

json source_json(const SourceRef& s) {
  return json{{"id", s.id}, {"family", to_string(s.family)}, {"seed", s.seed}, {"path", s.path}};
}

SourceRef source_from(const json& j) {
  SourceRef s;
  s.id = j.at("id").get<std::string>();
  s.family = parse_family(j.at("family").get<std::string>());
  s.seed = j.value("seed", std::uint64_t{0});
  s.path = j.value("path", std::string{});
  return s;
}

}  // namespace

std::string manifest_line(const MixtureSpec& m) {
  json j{{"id", m.id},
         {"split", m.split},
         {"target", source_json(m.target)},
         {"interferer", source_json(m.interferer)},
         {"sir_db", m.sir_db},
         {"family_pair", to_string(m.family_pair)},
         {"seed", m.seed},
         {"duration_s", m.duration_s},
         {"mixture_path", m.mixture_path}};
  return j.dump();
}

MixtureSpec parse_manifest_line(std::string_view line) {
  try {
    const json j = json::parse(line);
    MixtureSpec m;
    m.id = j.at("id").get<std::string>();
    m.split = j.at("split").get<std::string>();
    m.target = source_from(j.at("target"));
    m.interferer = source_from(j.at("interferer"));
    m.sir_db = j.at("sir_db").get<double>();
    m.family_pair = parse_family_pair(j.at("family_pair").get<std::string>());
    m.seed = j.value("seed", std::uint64_t{0});
    m.duration_s = j.value("duration_s", 1.0);
    m.mixture_path = j.value("mixture_path", std::string{});
    if (m.target.id == m.interferer.id)
      fail(ErrorKind::kFormat, fmt::format("mixture '{}' uses '{}' as both target and interferer", m.id, m.target.id));
    return m;
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, fmt::format("bad manifest record: {}", e.what()));
  }
}

void write_manifest(const std::filesystem::path& path, const std::vector<MixtureSpec>& manifest) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, fmt::format("cannot open '{}' for writing", path.string()));
  for (const auto& m : manifest) out << manifest_line(m) << '\n';
  if (!out) fail(ErrorKind::kIo, fmt::format("write to '{}' failed", path.string()));
}

std::vector<MixtureSpec> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, fmt::format("cannot open manifest '{}'", path.string()));
  std::vector<MixtureSpec> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_manifest_line(line));
    } catch (const Error& e) {
      fail(e.kind(), fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return out;
}

Waveform realize_source(const SourceRef& ref, double duration_s, const std::filesystem::path& base_dir) {
  if (!ref.path.empty()) {
    std::filesystem::path p(ref.path);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    return read_wav(p);
  }
  return synth_source(family_preset(ref.family), duration_s, ref.seed);
}

RealizedMixture realize_mixture(const MixtureSpec& spec, const std::filesystem::path& base_dir) {
  RealizedMixture out;
  out.target = realize_source(spec.target, spec.duration_s, base_dir);
  const Waveform interferer = realize_source(spec.interferer, spec.duration_s, base_dir);
  MixResult mix = mix_at_sir(out.target, interferer, spec.sir_db);
  out.interferer = std::move(mix.scaled_interferer);
  out.mixture = std::move(mix.mixture);
  return out;
}

}  // namespace orthosep
