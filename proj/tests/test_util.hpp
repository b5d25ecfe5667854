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

#include <cmath>

#include <Eigen/Core>

#include "orthosep/rng.hpp"
#include "orthosep/wav.hpp"

namespace orthosep::testing {

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

inline Eigen::MatrixXd random_one_hot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) y(i, static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(cols)))) = 1.0;
  return y;
}

inline Waveform random_waveform(std::size_t n, Rng& rng, double scale = 0.3) {
  Waveform w;
  w.samples.resize(n);
  for (auto& x : w.samples) x = scale * rng.uniform(-1.0, 1.0);
  return w;
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace orthosep::testing
