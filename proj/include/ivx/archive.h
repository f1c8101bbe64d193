// ivx/archive.h

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

#ifndef IVX_ARCHIVE_H_
#define IVX_ARCHIVE_H_

#include <span>
#include <string>
#include <vector>

#include "ivx/extractor.h"
#include "ivx/gmm.h"

namespace ivx {

/// One manifest line: utt_id<TAB>speaker_id<TAB>relative_path.
struct ManifestEntry {
  std::string utterance_id;
  std::string speaker_id;
  std::string path;
};

std::vector<ManifestEntry> ParseManifest(const std::string &text,
                                         const std::string &what);
std::string FormatManifest(std::span<const ManifestEntry> entries);

// Feature file: 16-byte header ("FEAT", u32 T, u32 F, u32 reserved = 0)
// then T*F little-endian float32 values, row-major.
std::string SerializeFeatures(const Eigen::Ref<const Mat> &frames);
Mat DeserializeFeatures(std::string bytes, const std::string &what);

/// A feature archive is a directory holding one .feat file per utterance
/// and a manifest named "manifest.tsv".  Written into a temporary directory
/// and renamed into place.
void WriteFeatureArchive(std::span<const FeatureMatrix> utts,
                         const std::string &dir);
/// Reads every utterance listed in a manifest; paths are relative to the
/// manifest's directory.  Errors name the offending file.
std::vector<FeatureMatrix> ReadFeatureArchive(const std::string &manifest);

// Statistics archive (single file): "SSTA", u32 version, u32 count, u32 C,
// u32 F, then per utterance: utterance id, speaker id, f64 total frames,
// C f64 counts, C x F f64 first-order and C x F f64 normalized first-order.
std::string SerializeStats(std::span<const SuffStats> stats);
std::vector<SuffStats> DeserializeStats(std::string bytes,
                                        const std::string &what);
void WriteStatsArchive(std::span<const SuffStats> stats,
                       const std::string &path);
std::vector<SuffStats> ReadStatsArchive(const std::string &path);

// i-vector file: 16-byte header ("IVEC", u32 D, u32 count, u32 reserved)
// then count*D float32 values.  Archives mirror feature archives: one .ivec
// file per utterance plus manifest.tsv.
std::string SerializeIvector(const Eigen::Ref<const Vec> &phi);
Vec DeserializeIvector(std::string bytes, const std::string &what);
void WriteIvectorArchive(std::span<const IVector> ivectors,
                         const std::string &dir);
std::vector<IVector> ReadIvectorArchive(const std::string &manifest);

}  // namespace ivx

#endif  // IVX_ARCHIVE_H_
