// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "nerfbooth/core.hpp"

namespace nerfbooth {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

// Little-endian binary checkpoint container. Layout per file:
//   magic (4 bytes) | version u32 | module-defined header scalars |
//   parameter arrays in declared order as f32.
class CheckpointWriter {
 public:
  CheckpointWriter(const std::string& path, const char magic[4], std::uint32_t version) : f_(path, std::ios::binary) {
    if (!f_) throw IoError("checkpoint: cannot open for writing: " + path);
    f_.write(magic, 4);
    write_u32(version);
    path_ = path;
  }

  void write_u32(std::uint32_t v) { f_.write(reinterpret_cast<const char*>(&v), 4); }
  void write_u64(std::uint64_t v) { f_.write(reinterpret_cast<const char*>(&v), 8); }
  void write_f64(double v) { f_.write(reinterpret_cast<const char*>(&v), 8); }

  template <typename T>
  void write_params_f32(const std::vector<T>& p) {
    write_u64(p.size());
    std::vector<float> tmp(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) tmp[i] = float(p[i]);
    f_.write(reinterpret_cast<const char*>(tmp.data()), std::streamsize(tmp.size() * 4));
  }

  void finish() {
    f_.flush();
    if (!f_) throw IoError("checkpoint: write failed: " + path_);
  }

 private:
  std::ofstream f_;
  std::string path_;
};

class CheckpointReader {
 public:
  CheckpointReader(const std::string& path, const char magic[4], std::uint32_t expected_version)
      : f_(path, std::ios::binary), path_(path) {
    if (!f_) throw IoError("checkpoint: cannot open: " + path);
    char m[4];
    f_.read(m, 4);
    if (!f_ || std::memcmp(m, magic, 4) != 0) throw IoError("checkpoint: bad magic in " + path);
    std::uint32_t v = read_u32();
    if (v != expected_version) throw IoError("checkpoint: unsupported version in " + path);
  }

  std::uint32_t read_u32() {
    std::uint32_t v;
    f_.read(reinterpret_cast<char*>(&v), 4);
    check();
    return v;
  }
  std::uint64_t read_u64() {
    std::uint64_t v;
    f_.read(reinterpret_cast<char*>(&v), 8);
    check();
    return v;
  }
  double read_f64() {
    double v;
    f_.read(reinterpret_cast<char*>(&v), 8);
    check();
    return v;
  }

  template <typename T>
  std::vector<T> read_params_f32() {
    std::uint64_t n = read_u64();
    std::vector<float> tmp(n);
    f_.read(reinterpret_cast<char*>(tmp.data()), std::streamsize(n * 4));
    check();
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = T(tmp[i]);
    return out;
  }

 private:
  void check() {
    if (!f_) throw IoError("checkpoint: truncated file " + path_);
  }
  std::ifstream f_;
  std::string path_;
};

inline std::uint64_t hash_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("hash_file: cannot open " + path);
  std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return fnv1a64(buf.data(), buf.size());
}

// Fingerprint of a parameter vector after the f32 round-trip the checkpoint
// format applies; used by frozen-model and determinism checks.
template <typename T>
std::uint64_t hash_params(const std::vector<T>& p) {
  std::vector<float> tmp(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) tmp[i] = float(p[i]);
  return fnv1a64(tmp.data(), tmp.size() * 4);
}

}  // namespace nerfbooth
