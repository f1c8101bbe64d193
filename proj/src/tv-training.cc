// ivx/tv-training.cc

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

#include "ivx/tv-training.h"

#include <random>

namespace ivx {

namespace {

struct UttPosterior {
  Vec phi;
  Mat cov;  // L^{-1}
  double log_like = 0.0;
};

UttPosterior Posterior(const std::vector<Mat> &blocks,
                       const std::vector<Mat> &grams, const SuffStats &s) {
  const Eigen::Index D = blocks[0].cols();
  Mat L = Mat::Identity(D, D);
  Vec linear = Vec::Zero(D);
  for (std::size_t c = 0; c < blocks.size(); ++c) {
    L += s.n(static_cast<Eigen::Index>(c)) * grams[c];
    linear.noalias() +=
        blocks[c].transpose() *
        s.f_norm.row(static_cast<Eigen::Index>(c)).transpose();
  }
  Eigen::LLT<Mat> llt(L);
  if (llt.info() != Eigen::Success) throw Error("ill-conditioned precision");
  UttPosterior p;
  p.phi = llt.solve(linear);
  p.cov = llt.solve(Mat::Identity(D, D));
  double logdet = 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
  p.log_like = 0.5 * linear.dot(p.phi) - 0.5 * logdet;
  return p;
}

void CheckStats(const FullExtractor &ex, std::span<const SuffStats> stats) {
  for (const SuffStats &s : stats)
    if (s.NumComponents() != ex.NumComponents() ||
        s.f_norm.cols() != ex.FeatDim())
      throw Error("TrainTotalVariability: statistics of " + s.utterance_id +
                  " do not match the extractor dimensions");
}

}  // namespace

FullExtractor RandomFullExtractor(int num_components, int feat_dim,
                                  int ivector_dim, double scale,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, scale);
  std::vector<Mat> blocks(num_components, Mat(feat_dim, ivector_dim));
  for (Mat &b : blocks)
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      for (Eigen::Index i = 0; i < b.rows(); ++i) b(i, j) = gauss(rng);
  return FullExtractor(std::move(blocks));
}

double TvLogLikelihood(const FullExtractor &extractor,
                       std::span<const SuffStats> stats, int num_threads) {
  CheckStats(extractor, stats);
  std::vector<Mat> grams = ComputeGrams(extractor.Blocks());
  std::vector<double> ll(stats.size());
  ParallelFor(stats.size(), num_threads, [&](std::size_t u) {
    ll[u] = Posterior(extractor.Blocks(), grams, stats[u]).log_like;
  });
  double total = 0.0;
  for (double v : ll) total += v;
  return total;
}

TvTrainResult RefineTotalVariability(FullExtractor init,
                                     std::span<const SuffStats> stats,
                                     int num_iters, int num_threads) {
  if (stats.empty()) throw Error("TrainTotalVariability: no statistics");
  CheckStats(init, stats);
  const int C = init.NumComponents(), F = init.FeatDim(),
            D = init.IvectorDim();
  TvTrainResult result{std::move(init), {}};
  for (int iter = 0; iter < num_iters; ++iter) {
    const std::vector<Mat> &blocks = result.extractor.Blocks();
    std::vector<Mat> grams = ComputeGrams(blocks);
    std::vector<UttPosterior> post(stats.size());
    ParallelFor(stats.size(), num_threads, [&](std::size_t u) {
      post[u] = Posterior(blocks, grams, stats[u]);
    });
    std::vector<Mat> quad(C, Mat::Zero(D, D));
    std::vector<Mat> cross(C, Mat::Zero(F, D));
    double ll = 0.0;
    for (std::size_t u = 0; u < stats.size(); ++u) {
      const SuffStats &s = stats[u];
      const UttPosterior &p = post[u];
      ll += p.log_like;
      Mat second = p.cov + p.phi * p.phi.transpose();
      for (int c = 0; c < C; ++c) {
        if (s.n(c) != 0.0) quad[c] += s.n(c) * second;
        cross[c].noalias() += s.f_norm.row(c).transpose() * p.phi.transpose();
      }
    }
    result.log_likelihood.push_back(ll);
    std::vector<Mat> updated(C);
    for (int c = 0; c < C; ++c) {
      Mat a = 0.5 * (quad[c] + quad[c].transpose());
      Eigen::LLT<Mat> llt(a);
      if (llt.info() != Eigen::Success) {
        Mat jittered = a;
        jittered.diagonal().array() +=
            1e-8 * std::max(a.trace(), 0.0) / static_cast<double>(D);
        llt.compute(jittered);
        if (llt.info() != Eigen::Success)
          throw Error("TrainTotalVariability: singular accumulator for "
                      "component " + std::to_string(c));
      }
      // Tbar_c = cross_c a^{-1}, solved as a Tbar_c' = cross_c'.
      updated[c] = llt.solve(cross[c].transpose()).transpose();
    }
    result.extractor = FullExtractor(std::move(updated));
  }
  result.log_likelihood.push_back(
      TvLogLikelihood(result.extractor, stats, num_threads));
  return result;
}

TvTrainResult TrainTotalVariability(std::span<const SuffStats> stats,
                                    int ivector_dim,
                                    const TvTrainConfig &config) {
  if (stats.empty()) throw Error("TrainTotalVariability: no statistics");
  if (ivector_dim < 1) throw Error("TrainTotalVariability: need D >= 1");
  const int C = stats[0].NumComponents(), F = stats[0].Dim();
  if (ivector_dim > C * F)
    Warn("TrainTotalVariability: D exceeds the supervector dimension C*F");
  FullExtractor init = RandomFullExtractor(C, F, ivector_dim,
                                           config.init_scale, config.seed);
  return RefineTotalVariability(std::move(init), stats, config.num_iters,
                                config.num_threads);
}

}  // namespace ivx
