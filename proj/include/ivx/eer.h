// ivx/eer.h

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

#ifndef IVX_EER_H_
#define IVX_EER_H_

#include <cstddef>
#include <span>

#include "ivx/backend.h"

namespace ivx {

struct EerResult {
  double eer = 0.0;        // percent
  double threshold = 0.0;  // score at the operating point nearest the EER
  std::size_t n_target = 0;
  std::size_t n_nontarget = 0;
};

/// Equal error rate on the convex hull of the ROC: operating points are
/// taken at every distinct score, and the EER is where the hull crosses
/// P_miss == P_fa, linearly interpolating between adjacent hull vertices.
EerResult ComputeEer(std::span<const double> target_scores,
                     std::span<const double> nontarget_scores);

/// Same, with per-trial labels; an unknown label is an error.
EerResult ComputeEer(std::span<const double> scores,
                     std::span<const TrialLabel> labels);

}  // namespace ivx

#endif  // IVX_EER_H_
