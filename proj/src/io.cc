// ivx/io.cc

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

#include "ivx/io.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include <unistd.h>

namespace ivx {

namespace {

static_assert(std::endian::native == std::endian::little,
              "ivx binary formats assume a little-endian host");

template <typename T>
void AppendRaw(std::string *buf, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf->append(raw, sizeof(T));
}

}  // namespace

void BinaryWriter::Magic(std::string_view magic) { buf_.append(magic); }
void BinaryWriter::U32(std::uint32_t v) { AppendRaw(&buf_, v); }
void BinaryWriter::F32(float v) { AppendRaw(&buf_, v); }
void BinaryWriter::F64(double v) { AppendRaw(&buf_, v); }

void BinaryWriter::String(std::string_view s) {
  U32(static_cast<std::uint32_t>(s.size()));
  buf_.append(s);
}

void BinaryWriter::MatrixF64(const Eigen::Ref<const Mat> &m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) F64(m(r, c));
}

void BinaryWriter::VectorF64(const Eigen::Ref<const Vec> &v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) F64(v(i));
}

BinaryReader::BinaryReader(std::string bytes, std::string what)
    : bytes_(std::move(bytes)), what_(std::move(what)) {}

void BinaryReader::Need(std::size_t n) {
  if (bytes_.size() - pos_ < n)
    throw Error(what_ + ": truncated file");
}

void BinaryReader::ExpectMagic(std::string_view magic) {
  Need(magic.size());
  if (std::string_view(bytes_).substr(pos_, magic.size()) != magic)
    throw Error(what_ + ": bad magic, expected \"" + std::string(magic) +
                "\"");
  pos_ += magic.size();
}

std::uint32_t BinaryReader::U32() {
  Need(4);
  std::uint32_t v;
  std::memcpy(&v, bytes_.data() + pos_, 4);
  pos_ += 4;
  return v;
}

float BinaryReader::F32() {
  Need(4);
  float v;
  std::memcpy(&v, bytes_.data() + pos_, 4);
  pos_ += 4;
  return v;
}

double BinaryReader::F64() {
  Need(8);
  double v;
  std::memcpy(&v, bytes_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

std::string BinaryReader::String() {
  std::uint32_t n = U32();
  Need(n);
  std::string s = bytes_.substr(pos_, n);
  pos_ += n;
  return s;
}

Mat BinaryReader::MatrixF64(Eigen::Index rows, Eigen::Index cols) {
  Need(static_cast<std::size_t>(rows * cols) * 8);
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = F64();
  return m;
}

Vec BinaryReader::VectorF64(Eigen::Index size) {
  Need(static_cast<std::size_t>(size) * 8);
  Vec v(size);
  for (Eigen::Index i = 0; i < size; ++i) v(i) = F64();
  return v;
}

void BinaryReader::ExpectEnd() {
  if (!AtEnd()) throw Error(what_ + ": trailing bytes after payload");
}

std::string ReadFileBytes(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(path.string() + ": cannot open file for reading");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void WriteFileAtomic(const std::filesystem::path &path,
                     std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(path.string() + ": cannot open file for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    os.flush();
    if (!os) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(path.string() + ": write failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(path.string() + ": cannot rename temporary file into place");
  }
}

namespace {

std::string Trim(std::string_view s) {
  const char *ws = " \t\r";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return "";
  auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::vector<KeyValue> ParseKeyValues(std::string_view text) {
  std::vector<KeyValue> out;
  std::istringstream is{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = Trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error("config line " + std::to_string(lineno) +
                  ": expected key=value");
    out.push_back({Trim(std::string_view(t).substr(0, eq)),
                   Trim(std::string_view(t).substr(eq + 1)), lineno});
  }
  return out;
}

double ParseDouble(const std::string &key, const std::string &value) {
  try {
    std::size_t pos = 0;
    double d = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return d;
  } catch (const std::exception &) {
    throw Error("config key " + key + ": expected a number, got \"" + value +
                "\"");
  }
}

int ParseInt(const std::string &key, const std::string &value) {
  try {
    std::size_t pos = 0;
    long long i = std::stoll(value, &pos);
    if (pos != value.size() || i < INT32_MIN || i > INT32_MAX)
      throw std::invalid_argument(value);
    return static_cast<int>(i);
  } catch (const std::exception &) {
    throw Error("config key " + key + ": expected an integer, got \"" +
                value + "\"");
  }
}

std::uint64_t ParseUint64(const std::string &key, const std::string &value) {
  try {
    std::size_t pos = 0;
    if (value.empty() || value[0] == '-') throw std::invalid_argument(value);
    unsigned long long u = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return u;
  } catch (const std::exception &) {
    throw Error("config key " + key + ": expected a non-negative integer, got \"" +
                value + "\"");
  }
}

}  // namespace ivx
