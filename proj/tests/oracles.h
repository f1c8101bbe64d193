// tests/oracles.h

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

// Independent reference computations shared by the unit tests and the
// acceptance suite.

#ifndef IVX_TESTS_ORACLES_H_
#define IVX_TESTS_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "ivx/dix-training.h"
#include "ivx/extractor.h"
#include "ivx/gmm.h"

namespace ivx {
namespace testing {

/// Maximizes the exact log posterior of the latent vector given frames and
/// fixed alignments,
///   -0.5 |phi|^2 + sum_t sum_c gamma_tc log N(o_t; m_c + T_c phi, Sigma_c),
/// with T_c = Sigma_c^{1/2} Tbar_c, by gradient ascent with Barzilai-Borwein
/// steps.  Works on raw frames, so it does not share any code path with the
/// statistics-based closed form.
inline Vec PosteriorModeOracle(const GmmUbm &ubm, std::span<const Mat> blocks,
                               const Mat &frames, const Mat &posteriors) {
  const int C = ubm.NumComponents();
  const Eigen::Index D = blocks[0].cols();
  std::vector<Mat> t(C), prec(C);
  for (int c = 0; c < C; ++c) {
    Mat cov = ubm.Covariance(c);
    t[c] = Mat(cov.llt().matrixL()) * blocks[c];
    prec[c] = cov.inverse();
  }
  auto gradient = [&](const Vec &phi) {
    Vec g = -phi;
    for (Eigen::Index k = 0; k < frames.rows(); ++k)
      for (int c = 0; c < C; ++c) {
        Vec r = frames.row(k).transpose() - ubm.Means().row(c).transpose() -
                t[c] * phi;
        g += posteriors(k, c) * (t[c].transpose() * (prec[c] * r));
      }
    return g;
  };
  Vec phi = Vec::Zero(D);
  Vec g = gradient(phi);
  double step = 1e-3;
  for (int it = 0; it < 100000 && g.norm() > 1e-13; ++it) {
    Vec next = phi + step * g;
    Vec g_next = gradient(next);
    Vec s = next - phi, y = g_next - g;
    double sy = s.dot(y);
    if (sy < 0.0) step = s.squaredNorm() / -sy;
    phi = next;
    g = g_next;
  }
  return phi;
}

struct GradientCheck {
  int checked = 0;
  int failed = 0;
  double worst = 0.0;
};

/// Compares every analytic gradient coordinate that `options` requests with
/// central differences of ForwardBackward's objective.
inline GradientCheck CheckGradients(const DixModel &model,
                                    std::span<const SuffStats *const> batch,
                                    std::span<const int> labels, double lambda,
                                    std::span<const Mat> orig,
                                    const BackwardOptions &options,
                                    double h = 1e-5, double tol = 1e-4) {
  DixGradients grads;
  ForwardBackward(model, batch, labels, lambda, orig, options, &grads);
  GradientCheck out;
  DixModel work = model;
  auto objective = [&]() {
    return ForwardBackward(work, batch, labels, lambda, orig, options, nullptr)
        .total;
  };
  auto probe = [&](double *param, double analytic) {
    const double saved = *param;
    *param = saved + h;
    double up = objective();
    *param = saved - h;
    double down = objective();
    *param = saved;
    double numeric = (up - down) / (2.0 * h);
    double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    double rel = std::abs(analytic - numeric) / scale;
    out.worst = std::max(out.worst, rel);
    ++out.checked;
    if (!(rel < tol)) ++out.failed;
  };
  if (options.classifier) {
    Classifier &clf = work.classifier;
    for (Eigen::Index i = 0; i < clf.W.size(); ++i)
      probe(clf.W.data() + i, grads.W.data()[i]);
    if (clf.use_bias)
      for (Eigen::Index i = 0; i < clf.b.size(); ++i)
        probe(clf.b.data() + i, grads.b(i));
  }
  if (options.extractor) {
    if (work.factorized) {
      FactorizedExtractor &d = work.dictionary;
      for (std::size_t q = 0; q < d.Bases().size(); ++q)
        for (Eigen::Index i = 0; i < d.Bases()[q].size(); ++i)
          probe(d.Bases()[q].data() + i, grads.bases[q].data()[i]);
      for (Eigen::Index i = 0; i < d.Coeffs().size(); ++i)
        probe(d.Coeffs().data() + i, grads.coeffs.data()[i]);
    } else {
      for (int c = 0; c < work.full.NumComponents(); ++c)
        for (Eigen::Index i = 0; i < work.full.Block(c).size(); ++i)
          probe(work.full.Block(c).data() + i, grads.blocks[c].data()[i]);
    }
  }
  return out;
}

/// EER as the saddle point max_w min_t [w Pmiss(t) + (1 - w) Pfa(t)], swept
/// over every threshold (accept when score >= t, plus reject-all).  The inner
/// minimum is a concave piecewise-linear function of w, so its maximum is at
/// w = 0, w = 1 or where two threshold lines cross; all are evaluated.
/// Returns percent.
inline double MinimaxEerOracle(std::span<const double> targets,
                               std::span<const double> nontargets) {
  std::vector<double> thresholds(targets.begin(), targets.end());
  thresholds.insert(thresholds.end(), nontargets.begin(), nontargets.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());
  std::vector<std::pair<double, double>> points;  // (pmiss, pfa)
  for (double t : thresholds) {
    double miss = 0, fa = 0;
    for (double s : targets) miss += s < t;
    for (double s : nontargets) fa += s >= t;
    points.emplace_back(miss / targets.size(), fa / nontargets.size());
  }
  auto inner = [&](double w) {
    double best = std::numeric_limits<double>::infinity();
    for (auto [m, f] : points) best = std::min(best, w * m + (1 - w) * f);
    return best;
  };
  double eer = std::max(inner(0.0), inner(1.0));
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      // w m_i + (1-w) f_i == w m_j + (1-w) f_j
      double a = (points[i].first - points[i].second) -
                 (points[j].first - points[j].second);
      if (a == 0.0) continue;
      double w = (points[j].second - points[i].second) / a;
      if (w > 0.0 && w < 1.0) eer = std::max(eer, inner(w));
    }
  return 100.0 * eer;
}

}  // namespace testing
}  // namespace ivx

#endif  // IVX_TESTS_ORACLES_H_
