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

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "orthosep/clustering.hpp"
#include "orthosep/error.hpp"
#include "test_util.hpp"

namespace orthosep {
namespace {

using testing::random_matrix;

// Exhaustive minimum of the k-means objective over all labelings.
double brute_force_inertia(const Eigen::MatrixXd& pts, int c) {
  const int n = static_cast<int>(pts.rows());
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  double best = std::numeric_limits<double>::infinity();
  for (;;) {
    best = std::min(best, partition_inertia(pts, labels, c));
    int i = 0;
    while (i < n && ++labels[static_cast<std::size_t>(i)] == c) labels[static_cast<std::size_t>(i++)] = 0;
    if (i == n) break;
  }
  return best;
}

Eigen::MatrixXd clouds(int per_cloud, const std::vector<Eigen::Vector2d>& centers, double spread, Rng& rng) {
  Eigen::MatrixXd pts(per_cloud * static_cast<int>(centers.size()), 2);
  for (std::size_t c = 0; c < centers.size(); ++c)
    for (int i = 0; i < per_cloud; ++i)
      pts.row(static_cast<Eigen::Index>(c) * per_cloud + i) =
          centers[c].transpose() + spread * Eigen::RowVector2d(rng.normal(), rng.normal());
  return pts;
}

TEST(KMeans, SeparatesWellSpacedClouds) {
  Rng rng(1);
  const Eigen::MatrixXd pts = clouds(30, {{0, 0}, {10, 0}, {0, 10}}, 0.5, rng);
  const ClusterResult r = kmeans(pts, 3, {.restarts = 5, .seed = 3});
  for (int c = 0; c < 3; ++c) {
    std::set<int> labels(r.assignments.begin() + c * 30, r.assignments.begin() + (c + 1) * 30);
    EXPECT_EQ(labels.size(), 1u);
  }
  std::set<int> all(r.assignments.begin(), r.assignments.end());
  EXPECT_EQ(all.size(), 3u);
}

TEST(KMeans, SingleClusterIsTheMean) {
  Rng rng(2);
  const Eigen::MatrixXd pts = random_matrix(20, 3, rng);
  const ClusterResult r = kmeans(pts, 1);
  EXPECT_TRUE(std::all_of(r.assignments.begin(), r.assignments.end(), [](int a) { return a == 0; }));
  EXPECT_TRUE(r.centroids.row(0).isApprox(pts.colwise().mean(), 1e-12));
  EXPECT_NEAR(r.inertia, (pts.rowwise() - pts.colwise().mean()).squaredNorm(), 1e-9);
}

TEST(KMeans, AsManyClustersAsPointsGivesZeroInertia) {
  Rng rng(3);
  const Eigen::MatrixXd pts = random_matrix(6, 2, rng);
  const ClusterResult r = kmeans(pts, 6);
  EXPECT_NEAR(r.inertia, 0.0, 1e-12);
  std::set<int> all(r.assignments.begin(), r.assignments.end());
  EXPECT_EQ(all.size(), 6u);
}

TEST(KMeans, InertiaNeverIncreases) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const ClusterResult r = kmeans(random_matrix(60, 4, rng), 3, {.restarts = 1, .seed = static_cast<unsigned>(trial)});
    ASSERT_FALSE(r.inertia_history.empty());
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
      EXPECT_LE(r.inertia_history[i], r.inertia_history[i - 1] + 1e-9);
  }
}

TEST(KMeans, ReportedInertiaMatchesPartition) {
  Rng rng(5);
  const Eigen::MatrixXd pts = random_matrix(40, 3, rng);
  const ClusterResult r = kmeans(pts, 4, {.seed = 9});
  EXPECT_NEAR(r.inertia, partition_inertia(pts, r.assignments, 4), 1e-9);
  for (int c = 0; c < 4; ++c) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(3);
    int n = 0;
    for (int i = 0; i < 40; ++i)
      if (r.assignments[static_cast<std::size_t>(i)] == c) {
        mean += pts.row(i);
        ++n;
      }
    ASSERT_GT(n, 0);
    EXPECT_TRUE(r.centroids.row(c).isApprox(mean / n, 1e-6));
  }
}

TEST(KMeans, SeededRunsAreIdentical) {
  Rng rng(6);
  const Eigen::MatrixXd pts = random_matrix(50, 5, rng);
  const ClusterResult a = kmeans(pts, 3, {.seed = 4});
  const ClusterResult b = kmeans(pts, 3, {.seed = 4});
  EXPECT_EQ(a.assignments, b.assignments);
  EXPECT_EQ(a.inertia, b.inertia);
}

TEST(KMeans, ReachesGlobalOptimumOnSmallProblems) {
  Rng rng(7);
  int hits = 0;
  const int trials = 40;
  for (int trial = 0; trial < trials; ++trial) {
    const int c = trial % 2 == 0 ? 2 : 3;
    const Eigen::MatrixXd pts = random_matrix(c == 2 ? 10 : 8, 2, rng);
    const double best = brute_force_inertia(pts, c);
    const ClusterResult r = kmeans(pts, c, {.restarts = 10, .seed = static_cast<unsigned>(trial)});
    EXPECT_GE(r.inertia, best - 1e-9);
    if (r.inertia <= best * (1.0 + 1e-9) + 1e-12) ++hits;
  }
  EXPECT_GE(hits, static_cast<int>(std::ceil(0.95 * trials)));
}

TEST(KMeans, NoSinglePointMoveLowersInertia) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Eigen::MatrixXd pts = random_matrix(40, 3, rng);
    const int c = 2 + static_cast<int>(seed % 3);
    const ClusterResult r = kmeans(pts, c, {.restarts = 1, .seed = seed});
    const double base = partition_inertia(pts, r.assignments, c);
    EXPECT_NEAR(r.inertia, base, 1e-9 * base);
    std::vector<int> labels = r.assignments;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const int own = labels[i];
      for (int k = 0; k < c; ++k) {
        if (k == own) continue;
        labels[i] = k;
        EXPECT_GE(partition_inertia(pts, labels, c), base * (1.0 - 1e-9)) << "seed " << seed << " point " << i;
      }
      labels[i] = own;
    }
  }
}

TEST(KMeans, DuplicatePointsDoNotLeaveEmptyClusters) {
  Eigen::MatrixXd pts = Eigen::MatrixXd::Zero(10, 2);
  pts.bottomRows(2).setConstant(1.0);
  const ClusterResult r = kmeans(pts, 3, {.seed = 1});
  // Only two distinct locations exist, so the optimum is zero and every
  // label in use must be a valid cluster index.
  EXPECT_NEAR(r.inertia, 0.0, 1e-12);
  for (int a : r.assignments) EXPECT_TRUE(a >= 0 && a < 3);
  EXPECT_NE(r.assignments.front(), r.assignments.back());
}

TEST(KMeans, RejectsBadArguments) {
  Rng rng(8);
  const Eigen::MatrixXd pts = random_matrix(4, 2, rng);
  EXPECT_THROW(kmeans(pts, 0), Error);
  EXPECT_THROW(kmeans(pts, 5), Error);
  EXPECT_THROW(kmeans(pts, 2, {.restarts = 0}), Error);
  Eigen::MatrixXd bad = pts;
  bad(1, 1) = std::nan("");
  EXPECT_THROW(kmeans(bad, 2), Error);
}

TEST(Masks, BinaryAndComplementary) {
  const std::vector<int> labels = {0, 1, 1, 0, 1, 0};
  const std::vector<Mask> m = masks_from_assignments(labels, 2, 2, 3);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].values(0, 0), 1.0);
  EXPECT_EQ(m[1].values(0, 1), 1.0);
  EXPECT_EQ(m[1].values(1, 1), 1.0);
  EXPECT_EQ(m[0].values(1, 2), 1.0);
  EXPECT_TRUE((m[0].values + m[1].values).isOnes());
  EXPECT_EQ(m[1].source_index, 1);
  EXPECT_THROW(masks_from_assignments(labels, 2, 2, 2), Error);
  EXPECT_THROW(masks_from_assignments(std::vector<int>{0, 2}, 2, 1, 2), Error);
}

TEST(Masks, FromClusters) {
  Rng rng(9);
  const Eigen::MatrixXd pts = random_matrix(12, 2, rng);
  const ClusterResult r = kmeans(pts, 2);
  const std::vector<Mask> m = masks_from_clusters(r, 3, 4);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(3, 4);
  for (const Mask& x : m) sum += x.values;
  EXPECT_TRUE(sum.isOnes());
}

TEST(SelectTarget, HighestPowerWithLowIndexTies) {
  Waveform quiet{{0.1, -0.1, 0.1}, 16000};
  Waveform loud{{1.0, -1.0, 1.0}, 16000};
  TargetSelection s = select_target({quiet, loud, quiet});
  EXPECT_EQ(s.target_index, 1);
  EXPECT_EQ(s.ordering, (std::vector<int>{1, 0, 2}));
  s = select_target({loud, loud});
  EXPECT_EQ(s.target_index, 0);
  Waveform silent{{0.0, 0.0, 0.0}, 16000};
  EXPECT_THROW(select_target({silent, silent}), Error);
  EXPECT_THROW(select_target({}), Error);
}

}  // namespace
}  // namespace orthosep
