// ivx/backend.h

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

#ifndef IVX_BACKEND_H_
#define IVX_BACKEND_H_

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ivx/base.h"

namespace ivx {

/// Unit-L2 scaling; throws on the zero vector.
Vec LengthNormalize(const Eigen::Ref<const Vec> &phi);

/// Mean subtraction, LDA projection, then length normalization.
struct PreprocessChain {
  Vec mean;  // D
  Mat lda;   // D x D_lda

  int InputDim() const { return static_cast<int>(mean.size()); }
  int OutputDim() const { return static_cast<int>(lda.cols()); }
  /// A' (phi - mean), before length normalization.
  Vec Project(const Eigen::Ref<const Vec> &phi) const;
  Vec Apply(const Eigen::Ref<const Vec> &phi) const;
  /// Applies the chain to every column.
  Mat ApplyAll(const Eigen::Ref<const Mat> &phis) const;

  /// Chain with an identity projection (mean subtraction and length
  /// normalization only).
  static PreprocessChain MeanOnly(Vec mean);
};

/// Fits the global mean and an LDA projection maximizing between-class over
/// within-class scatter.  ivectors holds one i-vector per column.
PreprocessChain FitPreprocess(const Eigen::Ref<const Mat> &ivectors,
                              std::span<const int> labels, int lda_dim);

/// Two-covariance PLDA: x = y_s + e, y_s ~ N(mean, between),
/// e ~ N(0, within).
class PldaModel {
 public:
  PldaModel() = default;
  PldaModel(Vec mean, Mat between, Mat within);

  int Dim() const { return static_cast<int>(mean_.size()); }
  const Vec &Mean() const { return mean_; }
  const Mat &Between() const { return between_; }
  const Mat &Within() const { return within_; }

  /// log p(x1, x2 | same speaker) - log p(x1, x2 | different speakers).
  double Score(const Eigen::Ref<const Vec> &enroll,
               const Eigen::Ref<const Vec> &test) const;

 private:
  void ComputeDerived();

  Vec mean_;
  Mat between_, within_;
  Mat quad_;    // T^{-1} - A11, applied to each side
  Mat cross_;   // -A12, couples the two sides
  double offset_ = 0.0;
};

struct PldaFitResult {
  PldaModel model;
  /// Data log-likelihood before each EM iteration and for the final model.
  std::vector<double> log_likelihood;
};

/// EM for the two-covariance model; x holds one vector per column.
PldaFitResult FitPlda(const Eigen::Ref<const Mat> &x,
                      std::span<const int> labels, int num_iters = 20);

/// Exact log-likelihood of the labelled data under the model.
double PldaLogLikelihood(const PldaModel &model, const Eigen::Ref<const Mat> &x,
                         std::span<const int> labels);

/// Preprocessing chain plus PLDA, scoring raw i-vectors.
struct Backend {
  PreprocessChain chain;
  PldaModel plda;

  double Score(const Eigen::Ref<const Vec> &enroll,
               const Eigen::Ref<const Vec> &test) const;
  /// Multi-session enrollment: averages the preprocessed enrollment
  /// vectors, renormalizes, then scores.
  double ScoreMulti(std::span<const Vec> enroll,
                    const Eigen::Ref<const Vec> &test) const;
};

Backend FitBackend(const Eigen::Ref<const Mat> &ivectors,
                   std::span<const int> labels, int lda_dim,
                   int plda_iters = 20);

// Binary backend file: "PLDA", u32 version, u32 D, u32 D_lda, then float64
// chain mean (D), LDA matrix (D x D_lda), PLDA mean, between and within
// covariances (D_lda x D_lda each).
std::string SerializeBackend(const Backend &backend);
Backend DeserializeBackend(std::string bytes, const std::string &what);
void WriteBackend(const Backend &backend, const std::string &path);
Backend ReadBackend(const std::string &path);

enum class TrialLabel { kTarget, kNontarget, kUnknown };

struct Trial {
  std::string enroll;
  std::string test;
  TrialLabel label = TrialLabel::kUnknown;
};

/// One trial per line: enroll_id<TAB>test_id<TAB>{target|nontarget|unk}.
std::vector<Trial> ParseTrials(std::string_view text, const std::string &what);
std::string FormatTrials(std::span<const Trial> trials);

/// One score per line: enroll_id<TAB>test_id<TAB>score (6 decimals).
std::string FormatScores(std::span<const Trial> trials,
                         std::span<const double> scores);
/// Reads a score file written for `trials`; ids must match line by line.
std::vector<double> ParseScores(std::string_view text,
                                std::span<const Trial> trials,
                                const std::string &what);

}  // namespace ivx

#endif  // IVX_BACKEND_H_
