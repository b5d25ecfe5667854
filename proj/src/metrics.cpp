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

#include "orthosep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "orthosep/error.hpp"

namespace orthosep {

namespace {

double clamp_db(double ratio_num, double ratio_den) {
  if (ratio_num <= 0.0) return -kDbCap;
  if (ratio_den <= 0.0) return kDbCap;
  return std::clamp(10.0 * std::log10(ratio_num / ratio_den), -kDbCap, kDbCap);
}

struct Projection {
  double aligned = 0.0;   // |proj|^2
  double residual = 0.0;  // |est - proj|^2
  double estimate = 0.0;  // |est|^2
};

Projection project(const Waveform& estimate, const Waveform& reference) {
  require(estimate.size() == reference.size(),
          fmt::format("estimate has {} samples, reference has {}", estimate.size(), reference.size()));
  double rr = 0.0, er = 0.0, ee = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    rr += reference.samples[i] * reference.samples[i];
    er += estimate.samples[i] * reference.samples[i];
    ee += estimate.samples[i] * estimate.samples[i];
  }
  if (!(rr > 0.0)) fail(ErrorKind::kInvalidArgument, "reference signal is silent");
  const double gain = er / rr;
  Projection p;
  p.estimate = ee;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double s = gain * reference.samples[i];
    const double e = estimate.samples[i] - s;
    p.aligned += s * s;
    p.residual += e * e;
  }
  return p;
}

}  // namespace

double sdr(const Waveform& estimate, const Waveform& reference) {
  const Projection p = project(estimate, reference);
  if (p.estimate == 0.0) return -kDbCap;
  return clamp_db(p.aligned, p.residual);
}

double npa(const Waveform& estimate, const Waveform& reference) {
  const Projection p = project(estimate, reference);
  if (p.estimate == 0.0) return -kDbCap;
  return clamp_db(p.aligned, p.estimate - p.aligned);
}

double improved_npa(const Waveform& proposed, const Waveform& baseline, const Waveform& reference) {
  return npa(proposed, reference) - npa(baseline, reference);
}

namespace {

std::vector<int> labels_of(const std::vector<Mask>& masks) {
  const Eigen::Index rows = masks.front().values.rows();
  const Eigen::Index cols = masks.front().values.cols();
  std::vector<int> labels(static_cast<std::size_t>(rows * cols), -1);
  for (std::size_t c = 0; c < masks.size(); ++c) {
    const auto& m = masks[c].values;
    if (m.rows() != rows || m.cols() != cols)
      fail(ErrorKind::kInvalidArgument, fmt::format("mask {} is {}x{}, expected {}x{}", c, m.rows(), m.cols(), rows, cols));
    for (Eigen::Index t = 0; t < rows; ++t)
      for (Eigen::Index f = 0; f < cols; ++f)
        if (m(t, f) > 0.5 && labels[static_cast<std::size_t>(t * cols + f)] < 0)
          labels[static_cast<std::size_t>(t * cols + f)] = static_cast<int>(c);
  }
  return labels;
}

}  // namespace

double mask_error_rate(const std::vector<Mask>& estimated, const std::vector<Mask>& ideal) {
  require(!estimated.empty() && estimated.size() == ideal.size(),
          fmt::format("mask sets differ in size: {} vs {}", estimated.size(), ideal.size()));
  const auto& a = estimated.front().values;
  const auto& b = ideal.front().values;
  if (a.rows() != b.rows() || a.cols() != b.cols())
    fail(ErrorKind::kInvalidArgument,
         fmt::format("mask shapes differ: {}x{} vs {}x{}", a.rows(), a.cols(), b.rows(), b.cols()));
  const std::vector<int> est = labels_of(estimated);
  const std::vector<int> ref = labels_of(ideal);
  const std::size_t bins = est.size();
  require(bins > 0, "masks are empty");

  std::vector<int> perm(estimated.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = bins;
  do {
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < bins; ++i) {
      const int mapped = est[i] < 0 ? -1 : perm[static_cast<std::size_t>(est[i])];
      if (mapped != ref[i]) ++wrong;
    }
    best = std::min(best, wrong);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(bins);
}

double mask_error_rate(const Mask& estimated, const Mask& ideal) {
  auto pair_of = [](const Mask& m) {
    Mask other{(1.0 - m.values.array()).matrix(), 1};
    return std::vector<Mask>{Mask{m.values, 0}, other};
  };
  return mask_error_rate(pair_of(estimated), pair_of(ideal));
}

std::optional<double> relative_error_improvement(double err_baseline, double err_proposed) {
  if (!(err_baseline > 0.0)) return std::nullopt;
  return 100.0 * (err_baseline - err_proposed) / err_baseline;
}

std::string_view to_string(Method m) noexcept { return m == Method::kBaseline ? "DC" : "Proposed"; }

namespace {

void add(CellStats& c, double v) {
  c.sum += v;
  ++c.count;
}

}  // namespace

MetricsReport aggregate(const std::vector<UtteranceRecord>& records) {
  MetricsReport report;
  report.records = records;

  std::map<int, std::map<Method, std::set<std::string>>> ids;
  for (const auto& r : records) {
    auto& seen = ids[r.embedding_dim][r.method];
    if (!seen.insert(r.mixture_id).second)
      fail(ErrorKind::kInvalidArgument, fmt::format("duplicate record for mixture '{}' (K={}, {})", r.mixture_id,
                                                    r.embedding_dim, to_string(r.method)));
  }
  for (const auto& [dim, by_method] : ids) {
    if (by_method.size() < 2) continue;
    const auto& base = by_method.at(Method::kBaseline);
    const auto& prop = by_method.at(Method::kProposed);
    if (base == prop) continue;
    std::vector<std::string> only_base, only_prop;
    std::set_difference(base.begin(), base.end(), prop.begin(), prop.end(), std::back_inserter(only_base));
    std::set_difference(prop.begin(), prop.end(), base.begin(), base.end(), std::back_inserter(only_prop));
    fail(ErrorKind::kInvalidArgument,
         fmt::format("K={}: methods were evaluated on different mixtures; missing from Proposed: [{}]; "
                     "missing from DC: [{}]",
                     dim, fmt::join(only_base, ", "), fmt::join(only_prop, ", ")));
  }

  for (const auto& r : records) {
    MethodRow& row = report.by_dim[r.embedding_dim].rows[r.method];
    add(row.sdr_by_sir[r.sir_db], r.sdr_target);
    add(row.sdr_by_pair[r.family_pair], r.sdr_target);
    add(row.error_by_sir[r.sir_db], r.mask_error);
    add(row.npa_by_sir[r.sir_db], r.npa_db);
    add(row.sdr_all, r.sdr_target);
    add(row.sdr_mean_all, r.sdr_mean);
  }

  for (auto& [dim, block] : report.by_dim) {
    if (block.rows.size() < 2) continue;
    const MethodRow& b = block.rows.at(Method::kBaseline);
    const MethodRow& p = block.rows.at(Method::kProposed);
    for (const auto& [sir, cell] : p.sdr_by_sir) block.sdr_delta_by_sir[sir] = cell.mean() - b.sdr_by_sir.at(sir).mean();
    for (const auto& [pair, cell] : p.sdr_by_pair)
      block.sdr_delta_by_pair[pair] = cell.mean() - b.sdr_by_pair.at(pair).mean();
    block.sdr_delta_all = p.sdr_all.mean() - b.sdr_all.mean();
    for (const auto& [sir, cell] : p.npa_by_sir) block.improved_npa_by_sir[sir] = cell.mean() - b.npa_by_sir.at(sir).mean();
    for (const auto& [sir, cell] : p.error_by_sir)
      block.relative_error_by_sir[sir] = relative_error_improvement(b.error_by_sir.at(sir).mean(), cell.mean());
  }
  return report;
}

}  // namespace orthosep
