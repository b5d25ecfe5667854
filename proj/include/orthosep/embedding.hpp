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
#include <optional>

#include <Eigen/Core>

#include "orthosep/dataset.hpp"

namespace orthosep {

// Losses over an N x K embedding matrix V (rows nominally unit-norm) and an
// N x C one-hot label matrix Y. All quantities are raw sums, not divided by N^2.
//
// Every entry point accepts optional per-row weights in {0, 1}. A zero weight
// removes the row from both V and Y, which is how low-energy bins are
// excluded from training when a silence threshold is configured.
using RowWeights = std::optional<Eigen::VectorXd>;

// Rows divided by their L2 norm; an all-zero row becomes e1.
Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& raw);

// ||V^T V||_F^2 - 2 ||V^T Y||_F^2 + ||Y^T Y||_F^2, which equals ||VV^T - YY^T||_F^2
// without forming any N x N matrix.
double dc_loss(const Eigen::MatrixXd& v, const Eigen::MatrixXd& y, const RowWeights& w = std::nullopt);

// ||V^T V - I_K||_F^2 via ||V^T V||_F^2 - 2 ||V||_F^2 + K.
double penalty(const Eigen::MatrixXd& v, const RowWeights& w = std::nullopt);

struct LossBreakdown {
  double dc_term = 0.0;
  double penalty_term = 0.0;
  double total = 0.0;
  double lambda = 1.0;
};

// total = dc + lambda * penalty. lambda = 0 is plain deep clustering.
LossBreakdown combined_loss(const Eigen::MatrixXd& v, const Eigen::MatrixXd& y, double lambda,
                            const RowWeights& w = std::nullopt);

// d(total)/dV = 4 (V (V^T V) - Y (Y^T V)) + 4 lambda V (V^T V - I).
// Taken with respect to V as given; the row-normalization Jacobian is the
// caller's business.
Eigen::MatrixXd loss_gradient(const Eigen::MatrixXd& v, const Eigen::MatrixXd& y, double lambda,
                              const RowWeights& w = std::nullopt);

// Rows whose mixture bin lies more than threshold_db below the loudest bin
// get weight 0. Works on log-magnitude features.
Eigen::VectorXd active_bins(const FeatureMatrix& log_mag, double threshold_db);

// Sample covariance of the rows (mean-centred, divisor N - 1). N >= 2.
Eigen::MatrixXd covariance(const Eigen::MatrixXd& v);

// Accumulates first and second moments over many utterances so that a
// pooled covariance can be formed without holding every embedding.
class CovarianceAccumulator {
 public:
  explicit CovarianceAccumulator(Eigen::Index dim);

  void add(const Eigen::MatrixXd& v);
  Eigen::Index count() const noexcept { return count_; }
  Eigen::MatrixXd covariance() const;

 private:
  Eigen::Index count_ = 0;
  Eigen::VectorXd sum_;
  Eigen::MatrixXd outer_;
};

// Share of squared mass off the diagonal, in [0, 1]. K >= 2.
double off_diagonal_ratio(const Eigen::MatrixXd& c);

// Row-major CSV with 17 significant digits.
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m);

}  // namespace orthosep
