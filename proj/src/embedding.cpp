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

#include "orthosep/embedding.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "orthosep/error.hpp"

namespace orthosep {

Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& raw) {
  Eigen::MatrixXd out(raw.rows(), raw.cols());
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const double norm = raw.row(i).norm();
    if (!std::isfinite(norm)) {
      out.row(i).setConstant(std::numeric_limits<double>::quiet_NaN());
    } else if (norm > 0.0) {
      out.row(i) = raw.row(i) / norm;
    } else {
      out.row(i).setZero();
      if (raw.cols() > 0) out(i, 0) = 1.0;
    }
  }
  return out;
}

namespace {

void check_rows(const Eigen::MatrixXd& v, const Eigen::MatrixXd& y, const RowWeights& w) {
  if (v.rows() != y.rows())
    fail(ErrorKind::kInvalidArgument,
         fmt::format("embedding has {} rows but label indicator has {}", v.rows(), y.rows()));
  if (w && w->size() != v.rows())
    fail(ErrorKind::kInvalidArgument,
         fmt::format("row weights have length {}, expected {}", w->size(), v.rows()));
}

Eigen::MatrixXd weighted(const Eigen::MatrixXd& m, const RowWeights& w) {
  if (!w) return m;
  return w->asDiagonal() * m;
}

}  // namespace

double dc_loss(const Eigen::MatrixXd& v, const Eigen::MatrixXd& y, const RowWeights& w) {
  check_rows(v, y, w);
  const Eigen::MatrixXd vw = weighted(v, w);
  const Eigen::MatrixXd yw = weighted(y, w);
  const double vv = (vw.transpose() * vw).squaredNorm();
  const double vy = (vw.transpose() * yw).squaredNorm();
  const double yy = (yw.transpose() * yw).squaredNorm();
  return vv - 2.0 * vy + yy;
}

double penalty(const Eigen::MatrixXd& v, const RowWeights& w) {
  if (w && w->size() != v.rows())
    fail(ErrorKind::kInvalidArgument,
         fmt::format("row weights have length {}, expected {}", w->size(), v.rows()));
  const Eigen::MatrixXd vw = weighted(v, w);
  const double vv = (vw.transpose() * vw).squaredNorm();
  return vv - 2.0 * vw.squaredNorm() + static_cast<double>(v.cols());
}

LossBreakdown combined_loss(const Eigen::MatrixXd& v, const Eigen::MatrixXd& y, double lambda,
                            const RowWeights& w) {
  require(lambda >= 0.0, fmt::format("lambda must be non-negative, got {}", lambda));
  LossBreakdown out;
  out.lambda = lambda;
  out.dc_term = dc_loss(v, y, w);
  out.penalty_term = penalty(v, w);
  out.total = out.dc_term + lambda * out.penalty_term;
  return out;
}

Eigen::MatrixXd loss_gradient(const Eigen::MatrixXd& v, const Eigen::MatrixXd& y, double lambda,
                              const RowWeights& w) {
  require(lambda >= 0.0, fmt::format("lambda must be non-negative, got {}", lambda));
  check_rows(v, y, w);
  const Eigen::MatrixXd vw = weighted(v, w);
  const Eigen::MatrixXd yw = weighted(y, w);
  const Eigen::MatrixXd vtv = vw.transpose() * vw;
  const Eigen::MatrixXd ytv = yw.transpose() * vw;
  Eigen::MatrixXd gram = (1.0 + lambda) * vtv;
  gram.diagonal().array() -= lambda;
  Eigen::MatrixXd grad = 4.0 * (vw * gram - yw * ytv);
  if (w) grad = w->asDiagonal() * grad;
  return grad;
}

Eigen::VectorXd active_bins(const FeatureMatrix& log_mag, double threshold_db) {
  require(threshold_db > 0.0, "silence threshold must be positive");
  const Eigen::MatrixXd& x = log_mag.values;
  // ln|X| -> dB is 20 / ln(10).
  const double cutoff = x.maxCoeff() - threshold_db * std::log(10.0) / 20.0;
  Eigen::VectorXd w(x.size());
  for (Eigen::Index t = 0; t < x.rows(); ++t)
    for (Eigen::Index f = 0; f < x.cols(); ++f) w(t * x.cols() + f) = x(t, f) >= cutoff ? 1.0 : 0.0;
  return w;
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& v) {
  require(v.rows() >= 2, fmt::format("covariance needs at least 2 rows, got {}", v.rows()));
  const Eigen::RowVectorXd mean = v.colwise().mean();
  const Eigen::MatrixXd centred = v.rowwise() - mean;
  Eigen::MatrixXd c = centred.transpose() * centred / static_cast<double>(v.rows() - 1);
  return 0.5 * (c + c.transpose());
}

CovarianceAccumulator::CovarianceAccumulator(Eigen::Index dim)
    : sum_(Eigen::VectorXd::Zero(dim)), outer_(Eigen::MatrixXd::Zero(dim, dim)) {}

void CovarianceAccumulator::add(const Eigen::MatrixXd& v) {
  require(v.cols() == sum_.size(),
          fmt::format("embedding has {} columns, accumulator expects {}", v.cols(), sum_.size()));
  count_ += v.rows();
  sum_ += v.colwise().sum().transpose();
  outer_ += v.transpose() * v;
}

Eigen::MatrixXd CovarianceAccumulator::covariance() const {
  require(count_ >= 2, fmt::format("covariance needs at least 2 rows, got {}", count_));
  const double n = static_cast<double>(count_);
  Eigen::MatrixXd c = (outer_ - sum_ * sum_.transpose() / n) / (n - 1.0);
  return 0.5 * (c + c.transpose());
}

double off_diagonal_ratio(const Eigen::MatrixXd& c) {
  require(c.rows() == c.cols() && c.rows() >= 2, "off_diagonal_ratio needs a square matrix with K >= 2");
  const double total = c.squaredNorm();
  if (total == 0.0) return 0.0;
  return (total - c.diagonal().squaredNorm()) / total;
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, fmt::format("cannot open '{}' for writing", path.string()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << fmt::format("{:.17g}", m(i, j));
    }
    out << '\n';
  }
  if (!out) fail(ErrorKind::kIo, fmt::format("write to '{}' failed", path.string()));
}

}  // namespace orthosep
