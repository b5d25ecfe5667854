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

#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "orthosep/embedding.hpp"
#include "orthosep/error.hpp"
#include "test_util.hpp"

namespace orthosep {
namespace {

using testing::random_matrix;
using testing::random_one_hot;
using testing::rel_diff;

// Dense definitions, materializing the N x N affinities.
double dense_dc(const Eigen::MatrixXd& v, const Eigen::MatrixXd& y) {
  return (v * v.transpose() - y * y.transpose()).squaredNorm();
}

double dense_penalty(const Eigen::MatrixXd& v) {
  return (v.transpose() * v - Eigen::MatrixXd::Identity(v.cols(), v.cols())).squaredNorm();
}

Eigen::MatrixXd central_difference(const std::function<double(const Eigen::MatrixXd&)>& f, Eigen::MatrixXd v,
                                   double h) {
  Eigen::MatrixXd g(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      const double keep = v(i, j);
      v(i, j) = keep + h;
      const double up = f(v);
      v(i, j) = keep - h;
      const double down = f(v);
      v(i, j) = keep;
      g(i, j) = (up - down) / (2.0 * h);
    }
  return g;
}

TEST(NormalizeRows, Examples) {
  Eigen::MatrixXd raw(3, 2);
  raw << 3, 4, 0.6, 0.8, 0, 0;
  const Eigen::MatrixXd v = normalize_rows(raw);
  EXPECT_NEAR(v(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(v(0, 1), 0.8, 1e-15);
  EXPECT_NEAR(v(1, 0), 0.6, 1e-12);
  EXPECT_NEAR(v(1, 1), 0.8, 1e-12);
  EXPECT_EQ(v(2, 0), 1.0);
  EXPECT_EQ(v(2, 1), 0.0);
}

TEST(DcLoss, Examples) {
  Rng rng(1);
  const Eigen::MatrixXd y = random_one_hot(10, 3, rng);
  EXPECT_NEAR(dc_loss(y, y), 0.0, 1e-12);

  Eigen::MatrixXd v(2, 1);
  v << 1, 1;
  EXPECT_NEAR(dc_loss(v, Eigen::MatrixXd::Identity(2, 2)), 2.0, 1e-12);
  EXPECT_NEAR(dense_dc(v, Eigen::MatrixXd::Identity(2, 2)), 2.0, 1e-12);
  EXPECT_THROW(dc_loss(v, Eigen::MatrixXd::Identity(3, 3)), Error);
}

TEST(Penalty, Examples) {
  const Eigen::MatrixXd v = Eigen::MatrixXd::Identity(7, 7).leftCols(4);
  EXPECT_NEAR(penalty(v), 0.0, 1e-12);
  Eigen::MatrixXd w(2, 1);
  w << 1, 1;
  EXPECT_NEAR(penalty(w), 1.0, 1e-12);
  EXPECT_NEAR(dense_penalty(w), 1.0, 1e-12);
}

TEST(CombinedLoss, Examples) {
  Eigen::MatrixXd v(2, 1);
  v << 1, 1;
  const Eigen::MatrixXd y = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_EQ(combined_loss(v, y, 0.0).total, dc_loss(v, y));
  EXPECT_NEAR(combined_loss(v, y, 1.0).total, 3.0, 1e-12);

  Rng rng(2);
  const Eigen::MatrixXd vr = normalize_rows(random_matrix(20, 5, rng));
  const Eigen::MatrixXd yr = random_one_hot(20, 3, rng);
  const LossBreakdown l = combined_loss(vr, yr, 2.0);
  EXPECT_NEAR(l.total, l.dc_term + 2.0 * l.penalty_term, 1e-12 * std::abs(l.total));
  EXPECT_EQ(l.lambda, 2.0);
  EXPECT_THROW(combined_loss(vr, yr, -1.0), Error);
}

TEST(LowRank, MatchesDenseForms) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(63));
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng.below(16));
    const Eigen::Index c = 1 + static_cast<Eigen::Index>(rng.below(4));
    const Eigen::MatrixXd v = normalize_rows(random_matrix(n, k, rng));
    const Eigen::MatrixXd y = random_one_hot(n, c, rng);
    EXPECT_LT(rel_diff(dc_loss(v, y), dense_dc(v, y)), 1e-6);
    EXPECT_NEAR(penalty(v), dense_penalty(v), 1e-9 * std::max(1.0, dense_penalty(v)));
    EXPECT_GE(dc_loss(v, y), -1e-9);
    EXPECT_GE(penalty(v), -1e-9);
  }
}

TEST(LossGradient, MatchesFiniteDifferences) {
  Rng rng(4);
  const Eigen::MatrixXd v = random_matrix(6, 3, rng);
  const Eigen::MatrixXd y = random_one_hot(6, 2, rng);
  for (double lambda : {0.0, 1.0, 0.5}) {
    const Eigen::MatrixXd g = loss_gradient(v, y, lambda);
    const Eigen::MatrixXd fd =
        central_difference([&](const Eigen::MatrixXd& x) { return combined_loss(x, y, lambda).total; }, v, 1e-4);
    for (Eigen::Index i = 0; i < g.size(); ++i)
      EXPECT_LT(std::abs(g(i) - fd(i)), 1e-5 * std::max(1.0, std::abs(fd(i)))) << "lambda " << lambda << " entry " << i;
  }
}

TEST(LossGradient, MatchesFiniteDifferencesOnRandomInstances) {
  Rng rng(40);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(10));
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng.below(5));
    const Eigen::MatrixXd v = random_matrix(n, k, rng);
    const Eigen::MatrixXd y = random_one_hot(n, 2 + static_cast<Eigen::Index>(rng.below(2)), rng);
    const double lambda = rng.uniform(0.0, 2.0);
    const Eigen::MatrixXd g = loss_gradient(v, y, lambda);
    const Eigen::MatrixXd fd =
        central_difference([&](const Eigen::MatrixXd& x) { return combined_loss(x, y, lambda).total; }, v, 1e-4);
    const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
    EXPECT_LT((g - fd).cwiseAbs().maxCoeff(), 1e-4 * scale) << "trial " << trial;
  }
}

TEST(LossGradient, PenaltyPartVanishesAtOrthonormalColumns) {
  // V has orthonormal columns and coincides with Y, so both parts are stationary.
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(6, 3);
  v(0, 0) = v(1, 1) = v(2, 2) = 1.0;
  v(3, 0) = 0.0;
  const Eigen::MatrixXd y = v;
  const Eigen::MatrixXd pen_only = loss_gradient(v, y, 1.0) - loss_gradient(v, y, 0.0);
  EXPECT_TRUE(pen_only.isZero(1e-12));
}

TEST(LossGradient, LambdaZeroIsDcGradient) {
  Rng rng(5);
  const Eigen::MatrixXd v = random_matrix(8, 4, rng);
  const Eigen::MatrixXd y = random_one_hot(8, 3, rng);
  const Eigen::MatrixXd analytic = 4.0 * (v * (v.transpose() * v) - y * (y.transpose() * v));
  EXPECT_TRUE(loss_gradient(v, y, 0.0).isApprox(analytic, 1e-12));
}

TEST(Losses, PenaltyZeroExactlyForOrthonormalColumns) {
  Rng rng(6);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(random_matrix(12, 12, rng)).householderQ();
  EXPECT_NEAR(penalty(q.leftCols(5)), 0.0, 1e-12);
  // Scaling one column breaks orthonormality and the penalty sees it.
  Eigen::MatrixXd bent = q.leftCols(5);
  bent.col(2) *= 1.1;
  EXPECT_GT(penalty(bent), 1e-3);
  // Rotating two columns toward each other likewise.
  Eigen::MatrixXd skew = q.leftCols(5);
  skew.col(1) = (skew.col(1) + 0.1 * skew.col(0)).normalized();
  EXPECT_GT(penalty(skew), 1e-3);
}

TEST(Losses, RowPermutationInvariance) {
  Rng rng(7);
  const Eigen::MatrixXd v = normalize_rows(random_matrix(30, 6, rng));
  const Eigen::MatrixXd y = random_one_hot(30, 3, rng);
  std::vector<int> idx(30);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  Eigen::MatrixXd vp(30, 6), yp(30, 3);
  for (int i = 0; i < 30; ++i) {
    vp.row(i) = v.row(idx[i]);
    yp.row(i) = y.row(idx[i]);
  }
  EXPECT_NEAR(combined_loss(vp, yp, 1.0).total, combined_loss(v, y, 1.0).total, 1e-9);
}

TEST(Losses, LabelColumnPermutationInvariance) {
  Rng rng(8);
  const Eigen::MatrixXd v = normalize_rows(random_matrix(25, 4, rng));
  const Eigen::MatrixXd y = random_one_hot(25, 3, rng);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(3, 3);
  p(0, 2) = p(1, 0) = p(2, 1) = 1.0;
  EXPECT_NEAR(dc_loss(v, y * p), dc_loss(v, y), 1e-9);
}

TEST(Losses, ZeroWeightRowsAreRemoved) {
  Rng rng(9);
  const Eigen::MatrixXd v = normalize_rows(random_matrix(12, 4, rng));
  const Eigen::MatrixXd y = random_one_hot(12, 2, rng);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(12);
  w(3) = w(7) = w(8) = 0.0;
  Eigen::MatrixXd vk(9, 4), yk(9, 2);
  for (int i = 0, r = 0; i < 12; ++i)
    if (w(i) > 0) {
      vk.row(r) = v.row(i);
      yk.row(r++) = y.row(i);
    }
  EXPECT_NEAR(combined_loss(v, y, 1.0, w).total, combined_loss(vk, yk, 1.0).total, 1e-9);
  const Eigen::MatrixXd g = loss_gradient(v, y, 1.0, w);
  EXPECT_TRUE(g.row(3).isZero(0.0));
  const Eigen::MatrixXd gk = loss_gradient(vk, yk, 1.0);
  EXPECT_TRUE(g.row(0).isApprox(gk.row(0), 1e-12));
}

TEST(ActiveBins, ThresholdInDecibels) {
  FeatureMatrix f;
  f.values.resize(1, 3);
  // ln of magnitudes 1, 0.1 (-20 dB) and 0.001 (-60 dB).
  f.values << 0.0, std::log(0.1), std::log(0.001);
  const Eigen::VectorXd w = active_bins(f, 40.0);
  EXPECT_EQ(w(0), 1.0);
  EXPECT_EQ(w(1), 1.0);
  EXPECT_EQ(w(2), 0.0);
}

TEST(Covariance, Examples) {
  Eigen::MatrixXd same = Eigen::MatrixXd::Ones(5, 3);
  EXPECT_TRUE(covariance(same).isZero(1e-15));

  Eigen::MatrixXd two(2, 2);
  two << 1, 0, -1, 0;
  Eigen::MatrixXd expected(2, 2);
  expected << 2, 0, 0, 0;
  EXPECT_TRUE(covariance(two).isApprox(expected, 1e-15));
  EXPECT_THROW(covariance(Eigen::MatrixXd::Ones(1, 3)), Error);
}

TEST(Covariance, SymmetricPositiveSemidefinite) {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd c = covariance(normalize_rows(random_matrix(40, 8, rng)));
    EXPECT_TRUE(c.isApprox(c.transpose(), 1e-9));
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-9);
    EXPECT_GE(c.diagonal().minCoeff(), 0.0);
  }
}

TEST(Covariance, AccumulatorMatchesStackedRows) {
  Rng rng(11);
  const Eigen::MatrixXd a = random_matrix(17, 4, rng);
  const Eigen::MatrixXd b = random_matrix(9, 4, rng);
  Eigen::MatrixXd stacked(26, 4);
  stacked << a, b;
  CovarianceAccumulator acc(4);
  acc.add(a);
  acc.add(b);
  EXPECT_EQ(acc.count(), 26);
  EXPECT_TRUE(acc.covariance().isApprox(covariance(stacked), 1e-12));
}

TEST(OffDiagonalRatio, Examples) {
  EXPECT_EQ(off_diagonal_ratio(Eigen::Vector3d(1, 2, 3).asDiagonal().toDenseMatrix()), 0.0);
  for (int k : {2, 3, 7}) {
    EXPECT_NEAR(off_diagonal_ratio(Eigen::MatrixXd::Ones(k, k)), double(k * k - k) / (k * k), 1e-15);
  }
  Rng rng(12);
  Eigen::MatrixXd m = random_matrix(6, 6, rng);
  m = 0.5 * (m + m.transpose()).eval();
  double off = 0.0, all = 0.0;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      all += m(i, j) * m(i, j);
      if (i != j) off += m(i, j) * m(i, j);
    }
  EXPECT_NEAR(off_diagonal_ratio(m), off / all, 1e-14);
  EXPECT_THROW(off_diagonal_ratio(Eigen::MatrixXd::Ones(1, 1)), Error);
}

}  // namespace
}  // namespace orthosep
