// ivx/eer.cc

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

#include "ivx/eer.h"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ivx {

namespace {

struct RocPoint {
  double pfa;
  double pmiss;
  double threshold;
};

// z-component of (b - a) x (c - a).
double Cross(const RocPoint &a, const RocPoint &b, const RocPoint &c) {
  return (b.pfa - a.pfa) * (c.pmiss - a.pmiss) -
         (b.pmiss - a.pmiss) * (c.pfa - a.pfa);
}

}  // namespace

EerResult ComputeEer(std::span<const double> target_scores,
                     std::span<const double> nontarget_scores) {
  if (target_scores.empty() || nontarget_scores.empty())
    throw Error("ComputeEer: need at least one target and one nontarget");
  std::vector<double> tar(target_scores.begin(), target_scores.end());
  std::vector<double> non(nontarget_scores.begin(), nontarget_scores.end());
  for (double s : tar)
    if (std::isnan(s)) throw Error("ComputeEer: NaN score");
  for (double s : non)
    if (std::isnan(s)) throw Error("ComputeEer: NaN score");
  std::sort(tar.begin(), tar.end());
  std::sort(non.begin(), non.end());
  std::vector<double> all(tar);
  all.insert(all.end(), non.begin(), non.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  const double nt = static_cast<double>(tar.size());
  const double nn = static_cast<double>(non.size());
  // Accept when score >= threshold; thresholds descend so that P_fa
  // ascends along the sequence.
  std::vector<RocPoint> roc;
  roc.push_back({0.0, 1.0, HUGE_VAL});
  for (auto it = all.rbegin(); it != all.rend(); ++it) {
    double t = *it;
    double miss = static_cast<double>(
        std::lower_bound(tar.begin(), tar.end(), t) - tar.begin());
    double fa = static_cast<double>(
        non.end() - std::lower_bound(non.begin(), non.end(), t));
    roc.push_back({fa / nn, miss / nt, t});
  }

  // Lower convex hull (monotone chain; points already sorted by P_fa with
  // P_miss non-increasing).
  std::vector<RocPoint> hull;
  for (const RocPoint &p : roc) {
    while (hull.size() >= 2 &&
           Cross(hull[hull.size() - 2], hull.back(), p) <= 0.0)
      hull.pop_back();
    hull.push_back(p);
  }

  EerResult r;
  r.n_target = tar.size();
  r.n_nontarget = non.size();
  for (std::size_t i = 0; i + 1 < hull.size(); ++i) {
    const RocPoint &a = hull[i], &b = hull[i + 1];
    double da = a.pmiss - a.pfa, db = b.pmiss - b.pfa;
    if (da >= 0.0 && db <= 0.0) {
      double alpha = da == db ? 0.0 : da / (da - db);
      r.eer = 100.0 * (a.pfa + alpha * (b.pfa - a.pfa));
      r.threshold = alpha <= 0.5 ? a.threshold : b.threshold;
      if (!std::isfinite(r.threshold)) r.threshold = b.threshold;
      return r;
    }
  }
  throw Error("ComputeEer: ROC hull does not cross the diagonal");
}

EerResult ComputeEer(std::span<const double> scores,
                     std::span<const TrialLabel> labels) {
  if (scores.size() != labels.size())
    throw Error("ComputeEer: one label per score required");
  std::vector<double> tar, non;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == TrialLabel::kTarget) tar.push_back(scores[i]);
    else if (labels[i] == TrialLabel::kNontarget) non.push_back(scores[i]);
    else throw Error("ComputeEer: trial " + std::to_string(i) +
                     " has no target/nontarget label");
  }
  return ComputeEer(tar, non);
}

}  // namespace ivx
