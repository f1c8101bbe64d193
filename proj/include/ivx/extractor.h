// ivx/extractor.h

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

#ifndef IVX_EXTRACTOR_H_
#define IVX_EXTRACTOR_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ivx/base.h"
#include "ivx/gmm.h"

namespace ivx {

/// Total-variability extractor stored as C normalized blocks
/// Tbar_c = W_c T_c, each F x D.
class FullExtractor {
 public:
  FullExtractor() = default;
  explicit FullExtractor(std::vector<Mat> blocks);

  int NumComponents() const { return static_cast<int>(blocks_.size()); }
  int FeatDim() const;
  int IvectorDim() const;
  std::int64_t ParameterCount() const;

  const Mat &Block(int c) const { return blocks_[c]; }
  Mat &Block(int c) { return blocks_[c]; }
  const std::vector<Mat> &Blocks() const { return blocks_; }

 private:
  std::vector<Mat> blocks_;
};

/// Dictionary form: Tbar_c = sum_q a(c, q) U_q with Q bases shared by all
/// components.
class FactorizedExtractor {
 public:
  FactorizedExtractor() = default;
  /// bases: Q matrices of F x D; coeffs: C x Q.
  FactorizedExtractor(std::vector<Mat> bases, Mat coeffs);

  int NumComponents() const { return static_cast<int>(coeffs_.rows()); }
  int NumBases() const { return static_cast<int>(bases_.size()); }
  int FeatDim() const { return static_cast<int>(bases_[0].rows()); }
  int IvectorDim() const { return static_cast<int>(bases_[0].cols()); }
  std::int64_t ParameterCount() const;

  const std::vector<Mat> &Bases() const { return bases_; }
  std::vector<Mat> &Bases() { return bases_; }
  const Mat &Coeffs() const { return coeffs_; }
  Mat &Coeffs() { return coeffs_; }

  Mat Materialize(int c) const;
  std::vector<Mat> MaterializeAll() const;
  FullExtractor ToFull() const { return FullExtractor(MaterializeAll()); }

  /// Per-component Tbar_c' Tbar_c through the expansion
  /// sum_{q,q'} a_q a_q' U_q' U_q', without materializing blocks.
  std::vector<Mat> GramsByExpansion() const;

 private:
  std::vector<Mat> bases_;
  Mat coeffs_;
};

struct IVector {
  std::string utterance_id;
  std::string speaker_id;
  Vec phi;
  /// Posterior precision L; empty unless requested.
  Mat precision;
};

/// Tbar_c' Tbar_c for each block.
std::vector<Mat> ComputeGrams(std::span<const Mat> blocks);

/// Closed-form i-vector from normalized blocks.  `grams` may be empty, in
/// which case Tbar_c' Tbar_c is formed on the fly.  L is factored with
/// Cholesky, retried once with a small diagonal jitter.
IVector ExtractFromBlocks(std::span<const Mat> blocks,
                          std::span<const Mat> grams, const SuffStats &stats,
                          bool keep_precision = false);

IVector Extract(const FullExtractor &extractor, const SuffStats &stats,
                bool keep_precision = false);
/// Materializes blocks on the fly.
IVector Extract(const FactorizedExtractor &extractor, const SuffStats &stats,
                bool keep_precision = false);

/// Blocks plus precomputed grams, for extracting many utterances.
class CachedExtractor {
 public:
  explicit CachedExtractor(const FullExtractor &extractor);
  explicit CachedExtractor(const FactorizedExtractor &extractor);

  IVector Extract(const SuffStats &stats, bool keep_precision = false) const;
  std::vector<IVector> ExtractAll(std::span<const SuffStats> stats,
                                  int num_threads = 1) const;
  const std::vector<Mat> &Grams() const { return grams_; }

 private:
  std::vector<Mat> blocks_;
  std::vector<Mat> grams_;
};

struct FactorizeOptions {
  /// Subtract the mean vectorized block before computing the bases.
  bool center = false;
};

/// Initializes a dictionary extractor from the top-Q singular directions of
/// the C x (F*D) matrix whose rows are vec(Tbar_c); coefficients are the
/// least-squares projections of each block onto the bases.  Throws when
/// Q > C.  If the stack has rank below Q the surplus bases are zero.
FactorizedExtractor Factorize(const FullExtractor &full, int num_bases,
                              const FactorizeOptions &options = {});

/// Least-squares coefficients of each block of `full` on the given bases.
Mat FitCoefficients(std::span<const Mat> bases, const FullExtractor &full);

/// Sum over c of ||Tbar_c - Tbar'_c||_F^2.
double SquaredDistance(std::span<const Mat> a, std::span<const Mat> b);

// Binary extractor file: "IVEX", u32 version, u32 kind (0 full,
// 1 factorized), u32 C, F, D, Q, then float64 payload: full stores C blocks
// (F x D, row-major); factorized stores Q bases then the C x Q coefficients.
std::string SerializeExtractor(const FullExtractor &extractor);
std::string SerializeExtractor(const FactorizedExtractor &extractor);
void WriteExtractor(const FullExtractor &extractor, const std::string &path);
void WriteExtractor(const FactorizedExtractor &extractor,
                    const std::string &path);

/// Either representation, as read from disk.
struct ExtractorFile {
  bool factorized = false;
  FullExtractor full;
  FactorizedExtractor dictionary;

  FullExtractor AsFull() const {
    return factorized ? dictionary.ToFull() : full;
  }
};
ExtractorFile DeserializeExtractor(std::string bytes, const std::string &what);
ExtractorFile ReadExtractor(const std::string &path);

}  // namespace ivx

#endif  // IVX_EXTRACTOR_H_
