// ivx/archive.cc

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

#include "ivx/archive.h"

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include <unistd.h>

#include "ivx/io.h"

namespace ivx {

namespace fs = std::filesystem;

namespace {

void CheckId(const std::string &id) {
  if (id.empty() || id.find_first_of("/\t\n\r") != std::string::npos ||
      id == "." || id == "..")
    throw Error("invalid utterance or speaker id \"" + id + "\"");
}

void WriteDirectoryAtomic(const std::string &dir,
                          const std::function<void(const fs::path &)> &fill) {
  fs::path target(dir);
  fs::path tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  std::error_code ec;
  fs::remove_all(tmp, ec);
  if (!fs::create_directories(tmp, ec) && ec)
    throw Error(dir + ": cannot create directory");
  try {
    fill(tmp);
  } catch (...) {
    fs::remove_all(tmp, ec);
    throw;
  }
  fs::remove_all(target, ec);
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove_all(tmp, ec);
    throw Error(dir + ": cannot move archive into place");
  }
}

void WritePlain(const fs::path &path, const std::string &bytes) {
  std::ofstream os(path, std::ios::binary);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error(path.string() + ": write failed");
}

}  // namespace

std::vector<ManifestEntry> ParseManifest(const std::string &text,
                                         const std::string &what) {
  std::vector<ManifestEntry> out;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos)
      throw Error(what + ":" + std::to_string(lineno) +
                  ": expected utt_id<TAB>speaker_id<TAB>path");
    out.push_back({line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1),
                   line.substr(t2 + 1)});
  }
  return out;
}

std::string FormatManifest(std::span<const ManifestEntry> entries) {
  std::string out;
  for (const ManifestEntry &e : entries)
    out += e.utterance_id + '\t' + e.speaker_id + '\t' + e.path + '\n';
  return out;
}

std::string SerializeFeatures(const Eigen::Ref<const Mat> &frames) {
  BinaryWriter w;
  w.Magic("FEAT");
  w.U32(static_cast<std::uint32_t>(frames.rows()));
  w.U32(static_cast<std::uint32_t>(frames.cols()));
  w.U32(0);
  for (Eigen::Index t = 0; t < frames.rows(); ++t)
    for (Eigen::Index f = 0; f < frames.cols(); ++f)
      w.F32(static_cast<float>(frames(t, f)));
  return w.Bytes();
}

Mat DeserializeFeatures(std::string bytes, const std::string &what) {
  BinaryReader r(std::move(bytes), what);
  r.ExpectMagic("FEAT");
  Eigen::Index T = r.U32(), F = r.U32();
  r.U32();
  Mat frames(T, F);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index f = 0; f < F; ++f) frames(t, f) = r.F32();
  r.ExpectEnd();
  return frames;
}

void WriteFeatureArchive(std::span<const FeatureMatrix> utts,
                         const std::string &dir) {
  WriteDirectoryAtomic(dir, [&](const fs::path &tmp) {
    std::vector<ManifestEntry> entries;
    for (const FeatureMatrix &fm : utts) {
      CheckId(fm.utterance_id);
      CheckId(fm.speaker_id);
      std::string name = fm.utterance_id + ".feat";
      WritePlain(tmp / name, SerializeFeatures(fm.frames));
      entries.push_back({fm.utterance_id, fm.speaker_id, name});
    }
    WritePlain(tmp / "manifest.tsv", FormatManifest(entries));
  });
}

std::vector<FeatureMatrix> ReadFeatureArchive(const std::string &manifest) {
  std::vector<ManifestEntry> entries =
      ParseManifest(ReadFileBytes(manifest), manifest);
  fs::path base = fs::path(manifest).parent_path();
  std::vector<FeatureMatrix> out;
  for (const ManifestEntry &e : entries) {
    std::string path = (base / e.path).string();
    FeatureMatrix fm;
    fm.utterance_id = e.utterance_id;
    fm.speaker_id = e.speaker_id;
    fm.frames = DeserializeFeatures(ReadFileBytes(path), path);
    out.push_back(std::move(fm));
  }
  return out;
}

std::string SerializeStats(std::span<const SuffStats> stats) {
  BinaryWriter w;
  w.Magic("SSTA");
  w.U32(1);
  w.U32(static_cast<std::uint32_t>(stats.size()));
  const int C = stats.empty() ? 0 : stats[0].NumComponents();
  const int F = stats.empty() ? 0 : stats[0].Dim();
  w.U32(static_cast<std::uint32_t>(C));
  w.U32(static_cast<std::uint32_t>(F));
  for (const SuffStats &s : stats) {
    if (s.NumComponents() != C || s.Dim() != F)
      throw Error("SerializeStats: inconsistent dimensions");
    w.String(s.utterance_id);
    w.String(s.speaker_id);
    w.F64(s.total_frames);
    w.VectorF64(s.n);
    w.MatrixF64(s.f);
    w.MatrixF64(s.f_norm);
  }
  return w.Bytes();
}

std::vector<SuffStats> DeserializeStats(std::string bytes,
                                        const std::string &what) {
  BinaryReader r(std::move(bytes), what);
  r.ExpectMagic("SSTA");
  if (r.U32() != 1) throw Error(what + ": unsupported stats version");
  std::uint32_t count = r.U32();
  Eigen::Index C = r.U32(), F = r.U32();
  std::vector<SuffStats> out(count);
  for (SuffStats &s : out) {
    s.utterance_id = r.String();
    s.speaker_id = r.String();
    s.total_frames = r.F64();
    s.n = r.VectorF64(C);
    s.f = r.MatrixF64(C, F);
    s.f_norm = r.MatrixF64(C, F);
  }
  r.ExpectEnd();
  return out;
}

void WriteStatsArchive(std::span<const SuffStats> stats,
                       const std::string &path) {
  WriteFileAtomic(path, SerializeStats(stats));
}

std::vector<SuffStats> ReadStatsArchive(const std::string &path) {
  return DeserializeStats(ReadFileBytes(path), path);
}

std::string SerializeIvector(const Eigen::Ref<const Vec> &phi) {
  BinaryWriter w;
  w.Magic("IVEC");
  w.U32(static_cast<std::uint32_t>(phi.size()));
  w.U32(1);
  w.U32(0);
  for (Eigen::Index i = 0; i < phi.size(); ++i)
    w.F32(static_cast<float>(phi(i)));
  return w.Bytes();
}

Vec DeserializeIvector(std::string bytes, const std::string &what) {
  BinaryReader r(std::move(bytes), what);
  r.ExpectMagic("IVEC");
  Eigen::Index D = r.U32();
  if (r.U32() != 1) throw Error(what + ": expected a single i-vector");
  r.U32();
  Vec phi(D);
  for (Eigen::Index i = 0; i < D; ++i) phi(i) = r.F32();
  r.ExpectEnd();
  return phi;
}

void WriteIvectorArchive(std::span<const IVector> ivectors,
                         const std::string &dir) {
  WriteDirectoryAtomic(dir, [&](const fs::path &tmp) {
    std::vector<ManifestEntry> entries;
    for (const IVector &iv : ivectors) {
      CheckId(iv.utterance_id);
      CheckId(iv.speaker_id);
      std::string name = iv.utterance_id + ".ivec";
      WritePlain(tmp / name, SerializeIvector(iv.phi));
      entries.push_back({iv.utterance_id, iv.speaker_id, name});
    }
    WritePlain(tmp / "manifest.tsv", FormatManifest(entries));
  });
}

std::vector<IVector> ReadIvectorArchive(const std::string &manifest) {
  std::vector<ManifestEntry> entries =
      ParseManifest(ReadFileBytes(manifest), manifest);
  fs::path base = fs::path(manifest).parent_path();
  std::vector<IVector> out;
  for (const ManifestEntry &e : entries) {
    std::string path = (base / e.path).string();
    IVector iv;
    iv.utterance_id = e.utterance_id;
    iv.speaker_id = e.speaker_id;
    iv.phi = DeserializeIvector(ReadFileBytes(path), path);
    out.push_back(std::move(iv));
  }
  return out;
}

}  // namespace ivx
