// ivx/base.h

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

#ifndef IVX_BASE_H_
#define IVX_BASE_H_

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ivx {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;

/// All recoverable failures in the library are reported with this type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Warnings go through a process-wide handler (stderr by default) so that
/// tests and tools can capture them.
using WarningHandler = std::function<void(const std::string &)>;
WarningHandler SetWarningHandler(WarningHandler handler);
void Warn(const std::string &message);

/// Runs fn(i) for i in [0, n) on up to num_threads threads.  Work is split
/// into contiguous chunks; callers write results into per-index slots so the
/// outcome does not depend on the thread count.
void ParallelFor(std::size_t n, int num_threads,
                 const std::function<void(std::size_t)> &fn);

bool AllFinite(const Eigen::Ref<const Mat> &m);

/// Largest-magnitude entry made positive (first index wins on ties).
void FixSign(Eigen::Ref<Vec> v);

}  // namespace ivx

#endif  // IVX_BASE_H_
