// tests/test-util.h

// Copyright 2026  The ivx Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef IVX_TESTS_TEST_UTIL_H_
#define IVX_TESTS_TEST_UTIL_H_

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "ivx/base.h"
#include "ivx/extractor.h"
#include "ivx/gmm.h"

namespace ivx {
namespace testing {

inline Mat RandomMatrix(Eigen::Index rows, Eigen::Index cols,
                        std::mt19937_64 *rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = g(*rng);
  return m;
}

inline Vec RandomVector(Eigen::Index n, std::mt19937_64 *rng,
                        double sd = 1.0) {
  return RandomMatrix(n, 1, rng, sd);
}

inline Mat RandomSpd(int dim, std::mt19937_64 *rng) {
  Mat a = RandomMatrix(dim, dim, rng);
  return a * a.transpose() / dim + 0.5 * Mat::Identity(dim, dim);
}

inline GmmUbm RandomDiagonalUbm(int C, int F, std::mt19937_64 *rng) {
  std::uniform_real_distribution<double> u(0.5, 2.0);
  Vec w(C);
  for (int c = 0; c < C; ++c) w(c) = u(*rng);
  w /= w.sum();
  Mat vars(C, F);
  for (int c = 0; c < C; ++c)
    for (int f = 0; f < F; ++f) vars(c, f) = u(*rng);
  return GmmUbm::Diagonal(w, RandomMatrix(C, F, rng, 2.0), vars);
}

inline GmmUbm RandomFullUbm(int C, int F, std::mt19937_64 *rng) {
  std::uniform_real_distribution<double> u(0.5, 2.0);
  Vec w(C);
  for (int c = 0; c < C; ++c) w(c) = u(*rng);
  w /= w.sum();
  std::vector<Mat> covs;
  for (int c = 0; c < C; ++c) covs.push_back(RandomSpd(F, rng));
  return GmmUbm::Full(w, RandomMatrix(C, F, rng, 2.0), covs);
}

inline std::vector<Mat> RandomBlocks(int C, int F, int D, std::mt19937_64 *rng,
                                     double sd = 1.0) {
  std::vector<Mat> blocks;
  for (int c = 0; c < C; ++c) blocks.push_back(RandomMatrix(F, D, rng, sd));
  return blocks;
}

/// Statistics with positive counts and random normalized first order
/// (f is left consistent with an identity UBM: f = f_norm).
inline SuffStats RandomStats(int C, int F, std::mt19937_64 *rng,
                             double max_count = 20.0) {
  std::uniform_real_distribution<double> u(0.1, max_count);
  SuffStats s = SuffStats::Zero(C, F);
  for (int c = 0; c < C; ++c) s.n(c) = u(*rng);
  for (int c = 0; c < C; ++c)
    s.f_norm.row(c) = RandomVector(F, rng, std::sqrt(s.n(c))).transpose();
  s.f = s.f_norm;
  s.total_frames = s.n.sum();
  return s;
}

/// Relative error used by the finite-difference checks.
inline double RelErr(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

}  // namespace testing
}  // namespace ivx

#endif  // IVX_TESTS_TEST_UTIL_H_
