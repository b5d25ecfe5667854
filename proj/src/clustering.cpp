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

#include "orthosep/clustering.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "orthosep/error.hpp"
#include "orthosep/rng.hpp"

namespace orthosep {

namespace {

struct Run {
  std::vector<int> labels;
  Eigen::MatrixXd centroids;
  double inertia = 0.0;
  int iterations = 0;
  std::vector<double> history;
};

Eigen::MatrixXd seed_plus_plus(const Eigen::MatrixXd& x, int c, Rng& rng) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd centroids(c, x.cols());
  centroids.row(0) = x.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd d2 = (x.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int k = 1; k < c; ++k) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    centroids.row(k) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - centroids.row(k)).rowwise().squaredNorm());
  }
  return centroids;
}

// Assigns every point to its nearest centroid (lowest index on ties) and
// returns the resulting inertia.
double assign(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centroids, std::vector<int>& labels,
              Eigen::VectorXd& dist) {
  const Eigen::Index n = x.rows();
  const Eigen::VectorXd c_norm = centroids.rowwise().squaredNorm();
  const Eigen::MatrixXd cross = x * centroids.transpose();
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
      // Rank with the expanded form, record the exact distance below.
      const double d = c_norm(k) - 2.0 * cross(i, k);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(k);
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
    dist(i) = (x.row(i) - centroids.row(best)).squaredNorm();
    inertia += dist(i);
  }
  return inertia;
}

Run lloyd(const Eigen::MatrixXd& x, int c, const KMeansOptions& opts, Rng& rng) {
  Run run;
  const Eigen::Index n = x.rows();
  run.centroids = seed_plus_plus(x, c, rng);
  run.labels.assign(static_cast<std::size_t>(n), 0);
  Eigen::VectorXd dist(n);
  run.inertia = assign(x, run.centroids, run.labels, dist);
  run.history.push_back(run.inertia);

  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    run.iterations = iter;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(c, x.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(c), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(run.labels[i]) += x.row(i);
      ++counts[static_cast<std::size_t>(run.labels[i])];
    }
    Eigen::MatrixXd next = run.centroids;
    for (int k = 0; k < c; ++k) {
      if (counts[static_cast<std::size_t>(k)] > 0) {
        next.row(k) = sums.row(k) / static_cast<double>(counts[static_cast<std::size_t>(k)]);
      } else {
        // Empty cluster: move it onto the worst-served point, and take that
        // point out of the running so two empties do not pick the same one.
        Eigen::Index far = 0;
        dist.maxCoeff(&far);
        next.row(k) = x.row(far);
        dist(far) = 0.0;
      }
    }
    const double shift = (next - run.centroids).rowwise().norm().maxCoeff();
    run.centroids = std::move(next);
    run.inertia = assign(x, run.centroids, run.labels, dist);
    run.history.push_back(run.inertia);
    if (shift < opts.tol) break;
  }
  return run;
}

// Hartigan refinement: move single points between clusters while a move
// lowers the inertia. Every Hartigan fixed point is also a Lloyd fixed
// point, but not the reverse.
void refine(const Eigen::MatrixXd& x, int c, Run& run) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(c, x.cols());
  std::vector<double> counts(static_cast<std::size_t>(c), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    sums.row(run.labels[i]) += x.row(i);
    counts[static_cast<std::size_t>(run.labels[i])] += 1.0;
  }
  bool moved = true;
  while (moved) {
    moved = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int from = run.labels[static_cast<std::size_t>(i)];
      const double n_from = counts[static_cast<std::size_t>(from)];
      if (n_from <= 1.0) continue;
      const double removal =
          n_from / (n_from - 1.0) * (x.row(i) - sums.row(from) / n_from).squaredNorm();
      int to = from;
      double best_gain = 0.0;
      for (int k = 0; k < c; ++k) {
        if (k == from) continue;
        const double n_to = counts[static_cast<std::size_t>(k)];
        const double addition =
            n_to == 0.0 ? 0.0 : n_to / (n_to + 1.0) * (x.row(i) - sums.row(k) / n_to).squaredNorm();
        // Relative margin keeps rounding noise from cycling points back and forth.
        const double gain = removal - addition;
        if (gain > best_gain && gain > 1e-12 * (removal + addition)) {
          best_gain = gain;
          to = k;
        }
      }
      if (to == from) continue;
      sums.row(from) -= x.row(i);
      sums.row(to) += x.row(i);
      counts[static_cast<std::size_t>(from)] -= 1.0;
      counts[static_cast<std::size_t>(to)] += 1.0;
      run.labels[static_cast<std::size_t>(i)] = to;
      moved = true;
    }
  }
  for (int k = 0; k < c; ++k)
    if (counts[static_cast<std::size_t>(k)] > 0.0) run.centroids.row(k) = sums.row(k) / counts[static_cast<std::size_t>(k)];
  const double inertia = partition_inertia(x, run.labels, c);
  if (inertia < run.inertia) {
    run.inertia = inertia;
    run.history.push_back(inertia);
  }
}

}  // namespace

ClusterResult kmeans(const Eigen::MatrixXd& points, int num_clusters, const KMeansOptions& opts) {
  require(num_clusters >= 1, fmt::format("number of clusters must be >= 1, got {}", num_clusters));
  require(points.rows() >= num_clusters,
          fmt::format("kmeans needs at least {} points, got {}", num_clusters, points.rows()));
  require(opts.restarts >= 1, "restarts must be >= 1");
  require(opts.max_iter >= 1, "max_iter must be >= 1");
  require(points.allFinite(), "kmeans input contains non-finite values");

  Run best;
  bool have = false;
  for (int r = 0; r < opts.restarts; ++r) {
    Rng rng(mix_seed(opts.seed, static_cast<std::uint64_t>(r)));
    Run run = lloyd(points, num_clusters, opts, rng);
    refine(points, num_clusters, run);
    if (!have || run.inertia < best.inertia) {
      best = std::move(run);
      have = true;
    }
  }
  ClusterResult out;
  out.assignments = std::move(best.labels);
  out.centroids = std::move(best.centroids);
  out.inertia = best.inertia;
  out.iterations = best.iterations;
  out.inertia_history = std::move(best.history);
  return out;
}

double partition_inertia(const Eigen::MatrixXd& points, std::span<const int> labels, int num_clusters) {
  require(static_cast<Eigen::Index>(labels.size()) == points.rows(), "label count must match point count");
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(num_clusters, points.cols());
  std::vector<double> counts(static_cast<std::size_t>(num_clusters), 0.0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    sums.row(labels[i]) += points.row(i);
    counts[static_cast<std::size_t>(labels[i])] += 1.0;
  }
  for (int k = 0; k < num_clusters; ++k)
    if (counts[static_cast<std::size_t>(k)] > 0) sums.row(k) /= counts[static_cast<std::size_t>(k)];
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) inertia += (points.row(i) - sums.row(labels[i])).squaredNorm();
  return inertia;
}

std::vector<Mask> masks_from_assignments(std::span<const int> labels, int num_sources, Eigen::Index frames,
                                         Eigen::Index bins) {
  require(num_sources >= 1, "need at least one source");
  if (static_cast<Eigen::Index>(labels.size()) != frames * bins)
    fail(ErrorKind::kInvalidArgument,
         fmt::format("{} assignments cannot fill a {}x{} mask", labels.size(), frames, bins));
  std::vector<Mask> masks(static_cast<std::size_t>(num_sources));
  for (int c = 0; c < num_sources; ++c) {
    masks[static_cast<std::size_t>(c)].values = Eigen::MatrixXd::Zero(frames, bins);
    masks[static_cast<std::size_t>(c)].source_index = c;
  }
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index f = 0; f < bins; ++f) {
      const int c = labels[static_cast<std::size_t>(t * bins + f)];
      require(c >= 0 && c < num_sources, fmt::format("label {} out of range [0, {})", c, num_sources));
      masks[static_cast<std::size_t>(c)].values(t, f) = 1.0;
    }
  }
  return masks;
}

std::vector<Mask> masks_from_clusters(const ClusterResult& r, Eigen::Index frames, Eigen::Index bins) {
  return masks_from_assignments(r.assignments, static_cast<int>(r.centroids.rows()), frames, bins);
}

TargetSelection select_target(const std::vector<Waveform>& separated) {
  require(separated.size() >= 2, "select_target needs at least two streams");
  std::vector<double> power(separated.size());
  for (std::size_t i = 0; i < separated.size(); ++i) power[i] = mean_power(separated[i]);
  if (std::all_of(power.begin(), power.end(), [](double p) { return p <= 0.0; }))
    fail(ErrorKind::kInvalidArgument, "all separated streams are silent");
  TargetSelection sel;
  sel.ordering.resize(separated.size());
  std::iota(sel.ordering.begin(), sel.ordering.end(), 0);
  std::stable_sort(sel.ordering.begin(), sel.ordering.end(),
                   [&](int a, int b) { return power[static_cast<std::size_t>(a)] > power[static_cast<std::size_t>(b)]; });
  sel.target_index = sel.ordering.front();
  return sel;
}

}  // namespace orthosep
