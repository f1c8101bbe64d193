// ivx/gmm.cc

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

#include "ivx/gmm.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ivx/io.h"

namespace ivx {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

void RowLogSoftmax(Mat *ll) {
  for (Eigen::Index t = 0; t < ll->rows(); ++t) {
    double mx = ll->row(t).maxCoeff();
    double lse = mx + std::log((ll->row(t).array() - mx).exp().sum());
    ll->row(t).array() -= lse;
  }
}

}  // namespace

GmmUbm GmmUbm::Diagonal(Vec weights, Mat means, Mat variances) {
  GmmUbm ubm;
  ubm.type_ = CovarianceType::kDiagonal;
  ubm.weights_ = std::move(weights);
  ubm.means_ = std::move(means);
  ubm.variances_ = std::move(variances);
  ubm.Validate();
  ubm.ComputeDerived();
  return ubm;
}

GmmUbm GmmUbm::Full(Vec weights, Mat means, std::vector<Mat> covariances) {
  GmmUbm ubm;
  ubm.type_ = CovarianceType::kFull;
  ubm.weights_ = std::move(weights);
  ubm.means_ = std::move(means);
  ubm.covariances_ = std::move(covariances);
  ubm.Validate();
  ubm.ComputeDerived();
  return ubm;
}

void GmmUbm::Validate() const {
  const Eigen::Index C = weights_.size();
  if (C < 1) throw Error("GmmUbm: need at least one component");
  if (means_.rows() != C || means_.cols() < 1)
    throw Error("GmmUbm: means must be C x F");
  if (!weights_.allFinite() || !means_.allFinite())
    throw Error("GmmUbm: non-finite parameters");
  if ((weights_.array() < 0).any())
    throw Error("GmmUbm: negative mixture weight");
  if (std::abs(weights_.sum() - 1.0) > 1e-10)
    throw Error("GmmUbm: weights do not sum to one");
  const Eigen::Index F = means_.cols();
  if (type_ == CovarianceType::kDiagonal) {
    if (variances_.rows() != C || variances_.cols() != F)
      throw Error("GmmUbm: variances must be C x F");
    if (!variances_.allFinite() || (variances_.array() <= 0).any())
      throw Error("GmmUbm: variances must be positive");
  } else {
    if (static_cast<Eigen::Index>(covariances_.size()) != C)
      throw Error("GmmUbm: need one covariance per component");
    for (const Mat &s : covariances_) {
      if (s.rows() != F || s.cols() != F || !s.allFinite())
        throw Error("GmmUbm: covariance must be a finite F x F matrix");
      if ((s - s.transpose()).norm() > 1e-10 * std::max(1.0, s.norm()))
        throw Error("GmmUbm: covariance not symmetric");
    }
  }
}

void GmmUbm::ComputeDerived() {
  const int C = NumComponents(), F = Dim();
  gconst_.resize(C);
  if (type_ == CovarianceType::kDiagonal) {
    inv_std_ = variances_.array().rsqrt().matrix();
    for (int c = 0; c < C; ++c)
      gconst_(c) = std::log(weights_(c)) -
                   0.5 * (F * kLog2Pi + variances_.row(c).array().log().sum());
  } else {
    chol_.clear();
    for (int c = 0; c < C; ++c) {
      Eigen::LLT<Mat> llt(covariances_[c]);
      if (llt.info() != Eigen::Success)
        throw Error("GmmUbm: covariance of component " + std::to_string(c) +
                    " is not positive definite");
      Mat l = llt.matrixL();
      gconst_(c) = std::log(weights_(c)) -
                   0.5 * (F * kLog2Pi +
                          2.0 * l.diagonal().array().log().sum());
      chol_.push_back(std::move(l));
    }
  }
}

Mat GmmUbm::Covariance(int c) const {
  if (type_ == CovarianceType::kDiagonal)
    return variances_.row(c).transpose().asDiagonal();
  return covariances_[c];
}

Mat GmmUbm::Whitener(int c) const {
  if (type_ == CovarianceType::kDiagonal)
    return inv_std_.row(c).transpose().asDiagonal();
  return chol_[c].triangularView<Eigen::Lower>().solve(
      Mat::Identity(Dim(), Dim()));
}

Vec GmmUbm::Whiten(int c, const Eigen::Ref<const Vec> &x) const {
  if (type_ == CovarianceType::kDiagonal)
    return x.cwiseProduct(inv_std_.row(c).transpose());
  return chol_[c].triangularView<Eigen::Lower>().solve(x);
}

Vec GmmUbm::Unwhiten(int c, const Eigen::Ref<const Vec> &x) const {
  if (type_ == CovarianceType::kDiagonal)
    return x.cwiseQuotient(inv_std_.row(c).transpose());
  return chol_[c].triangularView<Eigen::Lower>() * x;
}

Mat GmmUbm::ComponentLogLikelihoods(const Eigen::Ref<const Mat> &frames) const {
  if (frames.cols() != Dim())
    throw Error("frame dimension " + std::to_string(frames.cols()) +
                " does not match UBM dimension " + std::to_string(Dim()));
  const int C = NumComponents();
  Mat ll(frames.rows(), C);
  for (int c = 0; c < C; ++c) {
    Mat centered = frames.rowwise() - means_.row(c);
    if (type_ == CovarianceType::kDiagonal) {
      Eigen::ArrayXXd z =
          centered.array().rowwise() * inv_std_.row(c).array();
      ll.col(c) = (gconst_(c) - 0.5 * z.square().rowwise().sum()).matrix();
    } else {
      Mat z = chol_[c].triangularView<Eigen::Lower>().solve(
          centered.transpose());
      ll.col(c) =
          (gconst_(c) - 0.5 * z.array().square().colwise().sum()).transpose();
    }
  }
  return ll;
}

void FeatureMatrix::Check() const {
  if (frames.rows() < 1)
    throw Error(utterance_id + ": utterance has no frames");
  if (!frames.allFinite())
    throw Error(utterance_id + ": features contain NaN or Inf");
}

SuffStats SuffStats::Zero(int num_components, int dim) {
  SuffStats s;
  s.n = Vec::Zero(num_components);
  s.f = Mat::Zero(num_components, dim);
  s.f_norm = Mat::Zero(num_components, dim);
  return s;
}

SuffStats &SuffStats::operator+=(const SuffStats &other) {
  if (other.n.size() != n.size() || other.f.cols() != f.cols())
    throw Error("SuffStats: dimension mismatch in accumulation");
  n += other.n;
  f += other.f;
  f_norm += other.f_norm;
  total_frames += other.total_frames;
  return *this;
}

Mat FramePosteriors(const GmmUbm &ubm, const FeatureMatrix &features) {
  features.Check();
  Mat ll = ubm.ComponentLogLikelihoods(features.frames);
  RowLogSoftmax(&ll);
  return ll.array().exp().matrix();
}

void NormalizeStats(const GmmUbm &ubm, SuffStats *stats) {
  const int C = ubm.NumComponents();
  if (stats->NumComponents() != C || stats->Dim() != ubm.Dim())
    throw Error("SuffStats: dimensions do not match the UBM");
  stats->f_norm.resize(C, ubm.Dim());
  for (int c = 0; c < C; ++c) {
    Vec centered = stats->f.row(c).transpose() -
                   stats->n(c) * ubm.Means().row(c).transpose();
    stats->f_norm.row(c) = ubm.Whiten(c, centered).transpose();
  }
}

Mat UnnormalizeFirstOrder(const GmmUbm &ubm, const SuffStats &stats) {
  Mat f(stats.NumComponents(), stats.Dim());
  for (int c = 0; c < stats.NumComponents(); ++c)
    f.row(c) = (ubm.Unwhiten(c, stats.f_norm.row(c).transpose()) +
                stats.n(c) * ubm.Means().row(c).transpose())
                   .transpose();
  return f;
}

SuffStats AccumulateStats(const GmmUbm &ubm, const FeatureMatrix &features) {
  if (features.frames.cols() != ubm.Dim())
    throw Error(features.utterance_id + ": feature dimension " +
                std::to_string(features.frames.cols()) +
                " does not match UBM dimension " + std::to_string(ubm.Dim()));
  Mat post = FramePosteriors(ubm, features);
  SuffStats s;
  s.utterance_id = features.utterance_id;
  s.speaker_id = features.speaker_id;
  s.n = post.colwise().sum().transpose();
  s.f = post.transpose() * features.frames;
  s.total_frames = static_cast<double>(features.frames.rows());
  NormalizeStats(ubm, &s);
  return s;
}

double AverageLogLikelihood(const GmmUbm &ubm,
                            std::span<const FeatureMatrix> features) {
  double total = 0.0, frames = 0.0;
  for (const FeatureMatrix &fm : features) {
    Mat ll = ubm.ComponentLogLikelihoods(fm.frames);
    for (Eigen::Index t = 0; t < ll.rows(); ++t) {
      double mx = ll.row(t).maxCoeff();
      total += mx + std::log((ll.row(t).array() - mx).exp().sum());
    }
    frames += static_cast<double>(fm.frames.rows());
  }
  return total / frames;
}

namespace {

// k-means++ seeding followed by Lloyd iterations on a frame subsample.
Mat KMeansInit(const Mat &points, int k, int iters, std::mt19937_64 *rng) {
  const Eigen::Index n = points.rows();
  Mat centers(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.row(0) = points.row(pick(*rng));
  Vec d2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int j = 1; j < k; ++j) {
    double total = d2.sum();
    Eigen::Index chosen;
    if (total <= 0.0) {
      chosen = pick(*rng);
    } else {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(*rng), acc = 0.0;
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc >= r) {
          chosen = i;
          break;
        }
      }
    }
    centers.row(j) = points.row(chosen);
    d2 = d2.cwiseMin(
        (points.rowwise() - centers.row(j)).rowwise().squaredNorm());
  }
  std::vector<int> assign(n, 0);
  for (int it = 0; it < iters; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best;
      (centers.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(
          &best);
      assign[i] = static_cast<int>(best);
    }
    Mat sums = Mat::Zero(k, points.cols());
    Vec counts = Vec::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[i]) += points.row(i);
      counts(assign[i]) += 1.0;
    }
    for (int j = 0; j < k; ++j)
      if (counts(j) > 0) centers.row(j) = sums.row(j) / counts(j);
  }
  return centers;
}

struct EmAccumulators {
  Vec occ;
  Mat s1;                   // C x F
  Mat s2_diag;              // C x F
  std::vector<Mat> s2_full;
  double log_like = 0.0;
};

Mat FloorCovariance(const Mat &cov, double floor, bool *all_floored) {
  Eigen::SelfAdjointEigenSolver<Mat> es(cov);
  Vec ev = es.eigenvalues();
  *all_floored = (ev.array() <= floor).all();
  ev = ev.cwiseMax(floor);
  Mat out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace

UbmTrainResult TrainUbm(std::span<const FeatureMatrix> features,
                        int num_components, const UbmTrainConfig &config) {
  if (num_components < 1) throw Error("TrainUbm: need C >= 1");
  std::size_t total_frames = 0;
  Eigen::Index F = -1;
  for (const FeatureMatrix &fm : features) {
    if (fm.frames.rows() == 0) continue;
    fm.Check();
    if (F < 0) F = fm.frames.cols();
    if (fm.frames.cols() != F)
      throw Error(fm.utterance_id + ": inconsistent feature dimension");
    total_frames += static_cast<std::size_t>(fm.frames.rows());
  }
  if (total_frames == 0) throw Error("no training frames");
  const int C = num_components;
  if (total_frames < static_cast<std::size_t>(10 * C * F))
    Warn("TrainUbm: only " + std::to_string(total_frames) +
         " frames for C=" + std::to_string(C) + ", F=" + std::to_string(F) +
         "; estimates will be poor");

  std::mt19937_64 rng(config.seed);

  // Global statistics and a uniform frame subsample for k-means.
  Vec gsum = Vec::Zero(F), gsq = Vec::Zero(F);
  for (const FeatureMatrix &fm : features) {
    gsum += fm.frames.colwise().sum().transpose();
    gsq += fm.frames.array().square().colwise().sum().matrix().transpose();
  }
  Vec gmean = gsum / static_cast<double>(total_frames);
  Vec gvar = (gsq / static_cast<double>(total_frames)).array() -
             gmean.array().square();
  gvar = gvar.cwiseMax(0.0);
  const double floor =
      std::max(config.min_variance, config.relative_floor * gvar.mean());

  std::size_t n_sub = std::min(total_frames, config.kmeans_subsample);
  std::vector<std::size_t> picks(n_sub);
  if (n_sub == total_frames) {
    for (std::size_t i = 0; i < n_sub; ++i) picks[i] = i;
  } else {
    std::uniform_int_distribution<std::size_t> u(0, total_frames - 1);
    for (auto &p : picks) p = u(rng);
    std::sort(picks.begin(), picks.end());
  }
  Mat sub(static_cast<Eigen::Index>(n_sub), F);
  {
    std::size_t offset = 0, k = 0;
    for (const FeatureMatrix &fm : features) {
      std::size_t rows = static_cast<std::size_t>(fm.frames.rows());
      while (k < n_sub && picks[k] < offset + rows) {
        sub.row(static_cast<Eigen::Index>(k)) =
            fm.frames.row(static_cast<Eigen::Index>(picks[k] - offset));
        ++k;
      }
      offset += rows;
    }
  }
  Mat centers = KMeansInit(sub, C, config.kmeans_iters, &rng);

  const bool full = config.covariance_type == CovarianceType::kFull;
  Vec weights = Vec::Constant(C, 1.0 / C);
  Mat means = centers;
  Mat variances = gvar.cwiseMax(floor).transpose().replicate(C, 1);
  std::vector<Mat> covs;
  if (full)
    covs.assign(C, Mat(gvar.cwiseMax(floor).asDiagonal()));

  auto make_ubm = [&]() {
    return full ? GmmUbm::Full(weights, means, covs)
                : GmmUbm::Diagonal(weights, means, variances);
  };

  UbmTrainResult result{make_ubm(), {}, floor, 0};
  std::vector<int> floored_streak(C, 0);

  for (int iter = 0; iter < config.num_iters; ++iter) {
    const GmmUbm &ubm = result.ubm;
    // E-step, one accumulator per utterance so threads never share state.
    std::vector<EmAccumulators> per(features.size());
    ParallelFor(features.size(), config.num_threads, [&](std::size_t u) {
      const FeatureMatrix &fm = features[u];
      EmAccumulators &acc = per[u];
      acc.occ = Vec::Zero(C);
      acc.s1 = Mat::Zero(C, F);
      if (full) acc.s2_full.assign(C, Mat::Zero(F, F));
      else acc.s2_diag = Mat::Zero(C, F);
      if (fm.frames.rows() == 0) return;
      Mat ll = ubm.ComponentLogLikelihoods(fm.frames);
      for (Eigen::Index t = 0; t < ll.rows(); ++t) {
        double mx = ll.row(t).maxCoeff();
        double lse = mx + std::log((ll.row(t).array() - mx).exp().sum());
        acc.log_like += lse;
        ll.row(t) = (ll.row(t).array() - lse).exp().matrix();
      }
      acc.occ = ll.colwise().sum().transpose();
      acc.s1 = ll.transpose() * fm.frames;
      if (full) {
        for (int c = 0; c < C; ++c)
          acc.s2_full[c] = fm.frames.transpose() *
                           ll.col(c).asDiagonal() * fm.frames;
      } else {
        acc.s2_diag = ll.transpose() * fm.frames.array().square().matrix();
      }
    });
    EmAccumulators tot;
    tot.occ = Vec::Zero(C);
    tot.s1 = Mat::Zero(C, F);
    if (full) tot.s2_full.assign(C, Mat::Zero(F, F));
    else tot.s2_diag = Mat::Zero(C, F);
    for (const EmAccumulators &a : per) {
      tot.occ += a.occ;
      tot.s1 += a.s1;
      if (full)
        for (int c = 0; c < C; ++c) tot.s2_full[c] += a.s2_full[c];
      else
        tot.s2_diag += a.s2_diag;
      tot.log_like += a.log_like;
    }
    result.log_likelihood.push_back(tot.log_like /
                                    static_cast<double>(total_frames));

    // M-step.
    std::vector<int> collapsed;
    for (int c = 0; c < C; ++c) {
      double occ = tot.occ(c);
      weights(c) = occ / static_cast<double>(total_frames);
      if (occ <= 1e-10) {
        collapsed.push_back(c);
        continue;
      }
      Vec mu = tot.s1.row(c).transpose() / occ;
      means.row(c) = mu.transpose();
      bool all_floored;
      if (full) {
        Mat cov = tot.s2_full[c] / occ - mu * mu.transpose();
        covs[c] = FloorCovariance(0.5 * (cov + cov.transpose()), floor,
                                  &all_floored);
      } else {
        Vec var = tot.s2_diag.row(c).transpose() / occ -
                  mu.cwiseProduct(mu);
        all_floored = (var.array() <= floor).all();
        variances.row(c) = var.cwiseMax(floor).transpose();
      }
      floored_streak[c] = all_floored ? floored_streak[c] + 1 : 0;
      if (C > 1 && floored_streak[c] >= 2) collapsed.push_back(c);
    }
    for (int c : collapsed) {
      // Re-seed by splitting the heaviest component.
      Eigen::Index heavy;
      weights.maxCoeff(&heavy);
      if (heavy == c) continue;
      Vec sd = full ? Vec(covs[heavy].diagonal().cwiseSqrt())
                    : Vec(variances.row(heavy).transpose().cwiseSqrt());
      means.row(c) = means.row(heavy) + 0.2 * sd.transpose();
      means.row(heavy) -= 0.2 * sd.transpose();
      if (full) covs[c] = covs[heavy];
      else variances.row(c) = variances.row(heavy);
      double w = 0.5 * (weights(heavy) + weights(c));
      weights(heavy) = w;
      weights(c) = w;
      floored_streak[c] = 0;
      ++result.num_reseeds;
      Warn("TrainUbm: component " + std::to_string(c) +
           " collapsed; re-seeded from component " + std::to_string(heavy));
    }
    weights /= weights.sum();
    result.ubm = make_ubm();
  }
  result.log_likelihood.push_back(AverageLogLikelihood(result.ubm, features));
  return result;
}

std::string SerializeUbm(const GmmUbm &ubm) {
  BinaryWriter w;
  w.Magic("GUBM");
  w.U32(1);
  w.U32(static_cast<std::uint32_t>(ubm.NumComponents()));
  w.U32(static_cast<std::uint32_t>(ubm.Dim()));
  const bool full = ubm.Type() == CovarianceType::kFull;
  w.U32(full ? 1u : 0u);
  w.VectorF64(ubm.Weights());
  w.MatrixF64(ubm.Means());
  if (full) {
    for (int c = 0; c < ubm.NumComponents(); ++c)
      w.MatrixF64(ubm.Covariance(c));
  } else {
    w.MatrixF64(ubm.Variances());
  }
  return w.Bytes();
}

GmmUbm DeserializeUbm(std::string bytes, const std::string &what) {
  BinaryReader r(std::move(bytes), what);
  r.ExpectMagic("GUBM");
  std::uint32_t version = r.U32();
  if (version != 1)
    throw Error(what + ": unsupported UBM version " + std::to_string(version));
  int C = static_cast<int>(r.U32()), F = static_cast<int>(r.U32());
  std::uint32_t flags = r.U32();
  Vec weights = r.VectorF64(C);
  Mat means = r.MatrixF64(C, F);
  if (flags & 1u) {
    std::vector<Mat> covs;
    for (int c = 0; c < C; ++c) covs.push_back(r.MatrixF64(F, F));
    r.ExpectEnd();
    return GmmUbm::Full(std::move(weights), std::move(means), std::move(covs));
  }
  Mat vars = r.MatrixF64(C, F);
  r.ExpectEnd();
  return GmmUbm::Diagonal(std::move(weights), std::move(means),
                          std::move(vars));
}

void WriteUbm(const GmmUbm &ubm, const std::string &path) {
  WriteFileAtomic(path, SerializeUbm(ubm));
}

GmmUbm ReadUbm(const std::string &path) {
  return DeserializeUbm(ReadFileBytes(path), path);
}

}  // namespace ivx
