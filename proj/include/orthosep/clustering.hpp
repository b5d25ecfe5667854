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
#include <span>
#include <vector>

#include <Eigen/Core>

#include "orthosep/signal.hpp"
#include "orthosep/wav.hpp"

namespace orthosep {

struct KMeansOptions {
  int restarts = 5;
  int max_iter = 300;
  double tol = 1e-6;  // max centroid shift that counts as converged
  std::uint64_t seed = 0;
};

struct ClusterResult {
  std::vector<int> assignments;  // length N, labels in [0, C)
  Eigen::MatrixXd centroids;     // C x K
  double inertia = 0.0;          // sum of squared distances to the assigned centroid
  int iterations = 0;
  // Inertia after every assignment step of the winning restart.
  std::vector<double> inertia_history;
};

// k-means++ seeding followed by Lloyd iterations under squared Euclidean
// distance. An empty cluster is re-seeded at the point farthest from its
// centroid. Each converged restart is then refined by single-point moves
// (Hartigan) until no move lowers the inertia. The lowest-inertia restart
// wins; ties keep the earlier restart.
ClusterResult kmeans(const Eigen::MatrixXd& points, int num_clusters, const KMeansOptions& opts = {});

// Sum of squared distances of each point to its cluster mean.
double partition_inertia(const Eigen::MatrixXd& points, std::span<const int> labels, int num_clusters);

// Mask c is 1 exactly where the label of bin (t, f) = labels[t * bins + f] is c.
std::vector<Mask> masks_from_assignments(std::span<const int> labels, int num_sources, Eigen::Index frames,
                                         Eigen::Index bins);

std::vector<Mask> masks_from_clusters(const ClusterResult& r, Eigen::Index frames, Eigen::Index bins);

struct TargetSelection {
  int target_index = 0;
  std::vector<int> ordering;  // stream indices by decreasing mean power
};

// Picks the stream with the highest mean power; ties go to the lower index.
TargetSelection select_target(const std::vector<Waveform>& separated);

}  // namespace orthosep
