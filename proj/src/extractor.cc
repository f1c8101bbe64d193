// ivx/extractor.cc

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

#include "ivx/extractor.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ivx/io.h"

namespace ivx {

FullExtractor::FullExtractor(std::vector<Mat> blocks)
    : blocks_(std::move(blocks)) {
  if (blocks_.empty()) throw Error("FullExtractor: no blocks");
  const Eigen::Index F = blocks_[0].rows(), D = blocks_[0].cols();
  if (F < 1 || D < 1) throw Error("FullExtractor: blocks must be non-empty");
  for (const Mat &b : blocks_) {
    if (b.rows() != F || b.cols() != D)
      throw Error("FullExtractor: blocks have inconsistent shapes");
    if (!b.allFinite()) throw Error("FullExtractor: non-finite block");
  }
}

int FullExtractor::FeatDim() const {
  return static_cast<int>(blocks_.at(0).rows());
}

int FullExtractor::IvectorDim() const {
  return static_cast<int>(blocks_.at(0).cols());
}

std::int64_t FullExtractor::ParameterCount() const {
  return static_cast<std::int64_t>(NumComponents()) * FeatDim() * IvectorDim();
}

FactorizedExtractor::FactorizedExtractor(std::vector<Mat> bases, Mat coeffs)
    : bases_(std::move(bases)), coeffs_(std::move(coeffs)) {
  if (bases_.empty()) throw Error("FactorizedExtractor: need Q >= 1");
  if (coeffs_.cols() != static_cast<Eigen::Index>(bases_.size()) ||
      coeffs_.rows() < 1)
    throw Error("FactorizedExtractor: coefficients must be C x Q");
  const Eigen::Index F = bases_[0].rows(), D = bases_[0].cols();
  if (F < 1 || D < 1) throw Error("FactorizedExtractor: empty bases");
  for (const Mat &u : bases_)
    if (u.rows() != F || u.cols() != D)
      throw Error("FactorizedExtractor: bases have inconsistent shapes");
}

std::int64_t FactorizedExtractor::ParameterCount() const {
  const std::int64_t Q = NumBases(), C = NumComponents(), F = FeatDim(),
                     D = IvectorDim();
  return Q * C + Q * F * D;
}

Mat FactorizedExtractor::Materialize(int c) const {
  Mat t = Mat::Zero(FeatDim(), IvectorDim());
  for (int q = 0; q < NumBases(); ++q) t += coeffs_(c, q) * bases_[q];
  return t;
}

std::vector<Mat> FactorizedExtractor::MaterializeAll() const {
  std::vector<Mat> out;
  out.reserve(NumComponents());
  for (int c = 0; c < NumComponents(); ++c) out.push_back(Materialize(c));
  return out;
}

std::vector<Mat> FactorizedExtractor::GramsByExpansion() const {
  const int Q = NumBases(), D = IvectorDim();
  std::vector<Mat> cross(static_cast<std::size_t>(Q) * Q);
  for (int q = 0; q < Q; ++q)
    for (int r = 0; r < Q; ++r)
      cross[q * Q + r] = bases_[q].transpose() * bases_[r];
  std::vector<Mat> grams(NumComponents(), Mat::Zero(D, D));
  for (int c = 0; c < NumComponents(); ++c)
    for (int q = 0; q < Q; ++q)
      for (int r = 0; r < Q; ++r)
        grams[c] += coeffs_(c, q) * coeffs_(c, r) * cross[q * Q + r];
  return grams;
}

std::vector<Mat> ComputeGrams(std::span<const Mat> blocks) {
  std::vector<Mat> grams;
  grams.reserve(blocks.size());
  for (const Mat &b : blocks) grams.push_back(b.transpose() * b);
  return grams;
}

IVector ExtractFromBlocks(std::span<const Mat> blocks,
                          std::span<const Mat> grams, const SuffStats &stats,
                          bool keep_precision) {
  const int C = static_cast<int>(blocks.size());
  if (C == 0) throw Error("Extract: empty extractor");
  const Eigen::Index F = blocks[0].rows(), D = blocks[0].cols();
  if (stats.NumComponents() != C || stats.f_norm.rows() != C ||
      stats.f_norm.cols() != F)
    throw Error("Extract: statistics dimensions do not match the extractor");
  if (!stats.n.allFinite() || !stats.f_norm.allFinite())
    throw Error("Extract: non-finite statistics for " + stats.utterance_id);
  if (!grams.empty() && static_cast<int>(grams.size()) != C)
    throw Error("Extract: gram cache does not match the extractor");

  Mat L = Mat::Identity(D, D);
  Vec linear = Vec::Zero(D);
  for (int c = 0; c < C; ++c) {
    const double n = stats.n(c);
    if (n != 0.0) {
      if (grams.empty())
        L.noalias() += n * (blocks[c].transpose() * blocks[c]);
      else
        L += n * grams[c];
    }
    linear.noalias() += blocks[c].transpose() * stats.f_norm.row(c).transpose();
  }
  L = 0.5 * (L + L.transpose());

  Eigen::LLT<Mat> llt(L);
  if (llt.info() != Eigen::Success) {
    Mat jittered = L;
    jittered.diagonal().array() += 1e-8 * L.trace() / static_cast<double>(D);
    llt.compute(jittered);
    if (llt.info() != Eigen::Success)
      throw Error("ill-conditioned precision");
  }
  IVector iv;
  iv.utterance_id = stats.utterance_id;
  iv.speaker_id = stats.speaker_id;
  iv.phi = llt.solve(linear);
  if (keep_precision) iv.precision = std::move(L);
  return iv;
}

IVector Extract(const FullExtractor &extractor, const SuffStats &stats,
                bool keep_precision) {
  return ExtractFromBlocks(extractor.Blocks(), {}, stats, keep_precision);
}

IVector Extract(const FactorizedExtractor &extractor, const SuffStats &stats,
                bool keep_precision) {
  std::vector<Mat> blocks = extractor.MaterializeAll();
  return ExtractFromBlocks(blocks, {}, stats, keep_precision);
}

CachedExtractor::CachedExtractor(const FullExtractor &extractor)
    : blocks_(extractor.Blocks()), grams_(ComputeGrams(blocks_)) {}

CachedExtractor::CachedExtractor(const FactorizedExtractor &extractor)
    : blocks_(extractor.MaterializeAll()), grams_(ComputeGrams(blocks_)) {}

IVector CachedExtractor::Extract(const SuffStats &stats,
                                 bool keep_precision) const {
  return ExtractFromBlocks(blocks_, grams_, stats, keep_precision);
}

std::vector<IVector> CachedExtractor::ExtractAll(
    std::span<const SuffStats> stats, int num_threads) const {
  std::vector<IVector> out(stats.size());
  ParallelFor(stats.size(), num_threads,
              [&](std::size_t i) { out[i] = Extract(stats[i]); });
  return out;
}

Mat FitCoefficients(std::span<const Mat> bases, const FullExtractor &full) {
  const Eigen::Index FD =
      static_cast<Eigen::Index>(full.FeatDim()) * full.IvectorDim();
  const Eigen::Index Q = static_cast<Eigen::Index>(bases.size());
  Mat design(FD, Q);
  for (Eigen::Index q = 0; q < Q; ++q)
    design.col(q) = bases[q].reshaped();
  Mat targets(FD, full.NumComponents());
  for (int c = 0; c < full.NumComponents(); ++c)
    targets.col(c) = full.Block(c).reshaped();
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(design);
  return cod.solve(targets).transpose();
}

FactorizedExtractor Factorize(const FullExtractor &full, int num_bases,
                              const FactorizeOptions &options) {
  const int C = full.NumComponents(), F = full.FeatDim(),
            D = full.IvectorDim();
  if (num_bases < 1) throw Error("Q must be at least 1");
  if (num_bases > C) throw Error("Q must not exceed C");

  Mat stacked(C, static_cast<Eigen::Index>(F) * D);
  for (int c = 0; c < C; ++c)
    stacked.row(c) = full.Block(c).reshaped().transpose();
  if (options.center)
    stacked.rowwise() -= stacked.colwise().mean();

  // Right singular vectors of the C x FD stack; the thin SVD never forms the
  // FD x FD scatter matrix.
  Eigen::BDCSVD<Mat> svd(stacked, Eigen::ComputeThinV);
  const Vec &sv = svd.singularValues();
  std::vector<Eigen::Index> order(sv.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return sv(a) > sv(b); });
  const double tol = std::numeric_limits<double>::epsilon() *
                     static_cast<double>(std::max<Eigen::Index>(
                         stacked.rows(), stacked.cols())) *
                     (sv.size() > 0 ? sv(order[0]) : 0.0);

  std::vector<Mat> bases;
  int rank = 0;
  for (int q = 0; q < num_bases; ++q) {
    if (q < static_cast<int>(order.size()) && sv(order[q]) > tol) {
      Vec v = svd.matrixV().col(order[q]);
      FixSign(v);
      bases.push_back(v.reshaped(F, D));
      ++rank;
    } else {
      bases.push_back(Mat::Zero(F, D));
    }
  }
  if (rank < num_bases)
    Warn("Factorize: stacked blocks have rank " + std::to_string(rank) +
         " < Q=" + std::to_string(num_bases) + "; surplus bases set to zero");

  Mat coeffs = FitCoefficients(bases, full);
  return FactorizedExtractor(std::move(bases), std::move(coeffs));
}

double SquaredDistance(std::span<const Mat> a, std::span<const Mat> b) {
  if (a.size() != b.size())
    throw Error("SquaredDistance: block counts differ");
  double total = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    if (a[c].rows() != b[c].rows() || a[c].cols() != b[c].cols())
      throw Error("SquaredDistance: block shapes differ");
    total += (a[c] - b[c]).squaredNorm();
  }
  return total;
}

namespace {

void WriteHeader(BinaryWriter *w, std::uint32_t kind, int C, int F, int D,
                 int Q) {
  w->Magic("IVEX");
  w->U32(1);
  w->U32(kind);
  w->U32(static_cast<std::uint32_t>(C));
  w->U32(static_cast<std::uint32_t>(F));
  w->U32(static_cast<std::uint32_t>(D));
  w->U32(static_cast<std::uint32_t>(Q));
}

}  // namespace

std::string SerializeExtractor(const FullExtractor &extractor) {
  BinaryWriter w;
  WriteHeader(&w, 0, extractor.NumComponents(), extractor.FeatDim(),
              extractor.IvectorDim(), 0);
  for (const Mat &b : extractor.Blocks()) w.MatrixF64(b);
  return w.Bytes();
}

std::string SerializeExtractor(const FactorizedExtractor &extractor) {
  BinaryWriter w;
  WriteHeader(&w, 1, extractor.NumComponents(), extractor.FeatDim(),
              extractor.IvectorDim(), extractor.NumBases());
  for (const Mat &u : extractor.Bases()) w.MatrixF64(u);
  w.MatrixF64(extractor.Coeffs());
  return w.Bytes();
}

void WriteExtractor(const FullExtractor &extractor, const std::string &path) {
  WriteFileAtomic(path, SerializeExtractor(extractor));
}

void WriteExtractor(const FactorizedExtractor &extractor,
                    const std::string &path) {
  WriteFileAtomic(path, SerializeExtractor(extractor));
}

ExtractorFile DeserializeExtractor(std::string bytes, const std::string &what) {
  BinaryReader r(std::move(bytes), what);
  r.ExpectMagic("IVEX");
  std::uint32_t version = r.U32();
  if (version != 1)
    throw Error(what + ": unsupported extractor version " +
                std::to_string(version));
  std::uint32_t kind = r.U32();
  int C = static_cast<int>(r.U32()), F = static_cast<int>(r.U32()),
      D = static_cast<int>(r.U32()), Q = static_cast<int>(r.U32());
  ExtractorFile out;
  if (kind == 0) {
    std::vector<Mat> blocks;
    for (int c = 0; c < C; ++c) blocks.push_back(r.MatrixF64(F, D));
    out.full = FullExtractor(std::move(blocks));
  } else if (kind == 1) {
    out.factorized = true;
    std::vector<Mat> bases;
    for (int q = 0; q < Q; ++q) bases.push_back(r.MatrixF64(F, D));
    Mat coeffs = r.MatrixF64(C, Q);
    out.dictionary = FactorizedExtractor(std::move(bases), std::move(coeffs));
  } else {
    throw Error(what + ": unknown extractor kind " + std::to_string(kind));
  }
  r.ExpectEnd();
  return out;
}

ExtractorFile ReadExtractor(const std::string &path) {
  return DeserializeExtractor(ReadFileBytes(path), path);
}

}  // namespace ivx
