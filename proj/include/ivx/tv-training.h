// ivx/tv-training.h

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

#ifndef IVX_TV_TRAINING_H_
#define IVX_TV_TRAINING_H_

#include <cstdint>
#include <span>
#include <vector>

#include "ivx/extractor.h"
#include "ivx/gmm.h"

namespace ivx {

struct TvTrainConfig {
  int num_iters = 10;
  std::uint64_t seed = 0;
  /// Standard deviation of the random initial block entries.
  double init_scale = 0.1;
  int num_threads = 1;
};

struct TvTrainResult {
  FullExtractor extractor;
  /// Marginal log-likelihood of the statistics (up to a constant) before
  /// each iteration, plus one final entry for the returned extractor.
  std::vector<double> log_likelihood;
};

/// Random C blocks of F x D with i.i.d. N(0, scale^2) entries.
FullExtractor RandomFullExtractor(int num_components, int feat_dim,
                                  int ivector_dim, double scale,
                                  std::uint64_t seed);

/// sum_u [ 0.5 b_u' L_u^{-1} b_u - 0.5 logdet L_u ]: the log-likelihood of
/// the normalized first-order statistics with the i-vector integrated out,
/// dropping terms that do not depend on the extractor.
double TvLogLikelihood(const FullExtractor &extractor,
                       std::span<const SuffStats> stats, int num_threads = 1);

/// Standard EM for the total-variability model in the normalized domain.
/// E-step: posterior mean and covariance of each i-vector; M-step:
/// Tbar_c = (sum_u f_uc phi_u') (sum_u N_uc E[phi phi'])^{-1}.
TvTrainResult TrainTotalVariability(std::span<const SuffStats> stats,
                                    int ivector_dim,
                                    const TvTrainConfig &config);

/// Runs EM iterations starting from a given extractor.
TvTrainResult RefineTotalVariability(FullExtractor init,
                                     std::span<const SuffStats> stats,
                                     int num_iters, int num_threads = 1);

}  // namespace ivx

#endif  // IVX_TV_TRAINING_H_
