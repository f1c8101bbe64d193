// ivx/gmm.h

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

#ifndef IVX_GMM_H_
#define IVX_GMM_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ivx/base.h"

namespace ivx {

enum class CovarianceType { kDiagonal, kFull };

/// Universal background model: a C-component Gaussian mixture over
/// F-dimensional frames.  Immutable once constructed.
///
/// Each component carries a whitener W_c = L_c^{-1}, where Sigma_c = L_c L_c'
/// is the Cholesky factorization, so that W_c Sigma_c W_c' = I.  For
/// diagonal covariances W_c is simply diag(1/sqrt(var)).
class GmmUbm {
 public:
  /// means and variances are C x F (one row per component).
  static GmmUbm Diagonal(Vec weights, Mat means, Mat variances);
  static GmmUbm Full(Vec weights, Mat means, std::vector<Mat> covariances);

  int NumComponents() const { return static_cast<int>(weights_.size()); }
  int Dim() const { return static_cast<int>(means_.cols()); }
  CovarianceType Type() const { return type_; }

  const Vec &Weights() const { return weights_; }
  const Mat &Means() const { return means_; }
  /// C x F variances; only meaningful for diagonal models.
  const Mat &Variances() const { return variances_; }
  Mat Covariance(int c) const;
  Mat Whitener(int c) const;

  /// W_c x.
  Vec Whiten(int c, const Eigen::Ref<const Vec> &x) const;
  /// W_c^{-1} x, i.e. Sigma_c^{1/2} x with the Cholesky square root.
  Vec Unwhiten(int c, const Eigen::Ref<const Vec> &x) const;

  /// T x C matrix of log(w_c) + log N(o_t; m_c, Sigma_c).
  Mat ComponentLogLikelihoods(const Eigen::Ref<const Mat> &frames) const;

 private:
  GmmUbm() = default;
  void Validate() const;
  void ComputeDerived();

  CovarianceType type_ = CovarianceType::kDiagonal;
  Vec weights_;
  Mat means_;
  Mat variances_;                 // diagonal
  std::vector<Mat> covariances_;  // full
  // Derived.
  Mat inv_std_;                   // diagonal: C x F
  std::vector<Mat> chol_;         // full: lower Cholesky factors
  Vec gconst_;                    // log w_c - 0.5 logdet(2 pi Sigma_c)
};

/// One utterance worth of frames, T x F.
struct FeatureMatrix {
  std::string utterance_id;
  std::string speaker_id;
  Mat frames;

  /// Throws unless frames is non-empty and finite.
  void Check() const;
};

/// Zero- and first-order statistics of one utterance (or a sum of them).
/// f_norm row c is W_c (f_c - n_c m_c).
struct SuffStats {
  std::string utterance_id;
  std::string speaker_id;
  Vec n;        // C
  Mat f;        // C x F
  Mat f_norm;   // C x F
  double total_frames = 0.0;

  static SuffStats Zero(int num_components, int dim);
  int NumComponents() const { return static_cast<int>(n.size()); }
  int Dim() const { return static_cast<int>(f.cols()); }

  /// Statistics are additive across utterances.
  SuffStats &operator+=(const SuffStats &other);
};

/// Frame posteriors gamma_t(c), rows summing to one.  Log-sum-exp is used
/// throughout.
Mat FramePosteriors(const GmmUbm &ubm, const FeatureMatrix &features);

SuffStats AccumulateStats(const GmmUbm &ubm, const FeatureMatrix &features);

/// Recomputes f_norm from n and f.
void NormalizeStats(const GmmUbm &ubm, SuffStats *stats);

/// Inverse of the normalization: recovers f from n and f_norm.
Mat UnnormalizeFirstOrder(const GmmUbm &ubm, const SuffStats &stats);

struct UbmTrainConfig {
  int num_iters = 20;
  int kmeans_iters = 10;
  std::size_t kmeans_subsample = 20000;
  /// Variance floor is max(min_variance, relative_floor * mean global var).
  double min_variance = 1e-6;
  double relative_floor = 1e-3;
  CovarianceType covariance_type = CovarianceType::kDiagonal;
  std::uint64_t seed = 0;
  int num_threads = 1;
};

struct UbmTrainResult {
  GmmUbm ubm;
  /// Average per-frame log-likelihood before each iteration, plus one final
  /// entry for the returned model.
  std::vector<double> log_likelihood;
  double variance_floor = 0.0;
  int num_reseeds = 0;
};

/// EM training of a UBM initialized from k-means++ on a frame subsample.
UbmTrainResult TrainUbm(std::span<const FeatureMatrix> features,
                        int num_components, const UbmTrainConfig &config);

/// Average per-frame log-likelihood of the data under the model.
double AverageLogLikelihood(const GmmUbm &ubm,
                            std::span<const FeatureMatrix> features);

// Binary model file: "GUBM", u32 version, u32 C, u32 F, u32 flags
// (bit 0 = full covariance), then weights, means and covariances as float64.
std::string SerializeUbm(const GmmUbm &ubm);
GmmUbm DeserializeUbm(std::string bytes, const std::string &what);
void WriteUbm(const GmmUbm &ubm, const std::string &path);
GmmUbm ReadUbm(const std::string &path);

}  // namespace ivx

#endif  // IVX_GMM_H_
