// ivx/io.h

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

#ifndef IVX_IO_H_
#define IVX_IO_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ivx/base.h"

namespace ivx {

/// Little-endian binary serialization into an in-memory buffer.
class BinaryWriter {
 public:
  void Magic(std::string_view magic);
  void U32(std::uint32_t v);
  void F32(float v);
  void F64(double v);
  void String(std::string_view s);
  /// Writes a matrix row-major as float64.
  void MatrixF64(const Eigen::Ref<const Mat> &m);
  void VectorF64(const Eigen::Ref<const Vec> &v);

  const std::string &Bytes() const { return buf_; }

 private:
  std::string buf_;
};

class BinaryReader {
 public:
  /// `what` names the source in error messages.
  BinaryReader(std::string bytes, std::string what);

  void ExpectMagic(std::string_view magic);
  std::uint32_t U32();
  float F32();
  double F64();
  std::string String();
  Mat MatrixF64(Eigen::Index rows, Eigen::Index cols);
  Vec VectorF64(Eigen::Index size);
  bool AtEnd() const { return pos_ == bytes_.size(); }
  void ExpectEnd();

 private:
  void Need(std::size_t n);

  std::string bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string ReadFileBytes(const std::filesystem::path &path);

/// Writes to a temporary sibling and renames it into place, so a failed
/// write never leaves a partial file behind.
void WriteFileAtomic(const std::filesystem::path &path, std::string_view bytes);

/// One key=value line of a configuration file.
struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

/// Splits configuration text into key=value pairs.  Blank lines and lines
/// starting with '#' are skipped; whitespace around keys and values is
/// trimmed.
std::vector<KeyValue> ParseKeyValues(std::string_view text);

double ParseDouble(const std::string &key, const std::string &value);
int ParseInt(const std::string &key, const std::string &value);
std::uint64_t ParseUint64(const std::string &key, const std::string &value);

}  // namespace ivx

#endif  // IVX_IO_H_
