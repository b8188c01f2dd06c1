// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "nerfbooth/image_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "nerfbooth/core.hpp"

namespace nerfbooth {

namespace {

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

std::uint32_t get_u32_be(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4], const std::vector<std::uint8_t>& payload) {
  put_u32_be(out, std::uint32_t(payload.size()));
  std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  std::uint32_t crc = std::uint32_t(crc32(0, out.data() + crc_start, uInt(out.size() - crc_start)));
  put_u32_be(out, crc);
}

std::vector<std::uint8_t> zlib_compress(const std::vector<std::uint8_t>& in) {
  uLongf bound = compressBound(uLong(in.size()));
  std::vector<std::uint8_t> out(bound);
  if (compress2(out.data(), &bound, in.data(), uLong(in.size()), 6) != Z_OK)
    throw IoError("png: zlib compression failed");
  out.resize(bound);
  return out;
}

std::vector<std::uint8_t> zlib_decompress(const std::uint8_t* in, std::size_t n, std::size_t expected) {
  std::vector<std::uint8_t> out(expected);
  uLongf len = uLongf(expected);
  int rc = uncompress(out.data(), &len, in, uLong(n));
  if (rc != Z_OK || len != expected) throw IoError("png: zlib decompression failed");
  return out;
}

int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

void write_png_u8(const std::string& path, const std::vector<std::uint8_t>& interleaved, int h, int w, int channels) {
  if (h <= 0 || w <= 0 || (channels != 1 && channels != 3 && channels != 4))
    throw IoError("png: unsupported shape for " + path);
  if (interleaved.size() != std::size_t(h) * w * channels) throw IoError("png: buffer size mismatch");

  std::vector<std::uint8_t> ihdr;
  put_u32_be(ihdr, std::uint32_t(w));
  put_u32_be(ihdr, std::uint32_t(h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(channels == 1 ? 0 : (channels == 3 ? 2 : 6));
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter method
  ihdr.push_back(0);  // no interlace

  std::size_t stride = std::size_t(w) * channels;
  std::vector<std::uint8_t> raw;
  raw.reserve((stride + 1) * h);
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), interleaved.begin() + y * stride, interleaved.begin() + (y + 1) * stride);
  }

  std::vector<std::uint8_t> file;
  const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  file.insert(file.end(), sig, sig + 8);
  append_chunk(file, "IHDR", ihdr);
  append_chunk(file, "IDAT", zlib_compress(raw));
  append_chunk(file, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("png: cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(file.data()), std::streamsize(file.size()));
  if (!f) throw IoError("png: write failed: " + path);
}

std::vector<std::uint8_t> read_png_u8(const std::string& path, int& h, int& w, int& channels) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("png: cannot open: " + path);
  std::vector<std::uint8_t> file((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (file.size() < 8 + 25 || file[0] != 137 || file[1] != 'P') throw IoError("png: bad signature: " + path);

  std::size_t pos = 8;
  bool have_ihdr = false;
  std::vector<std::uint8_t> idat;
  while (pos + 8 <= file.size()) {
    std::uint32_t len = get_u32_be(&file[pos]);
    if (pos + 12 + len > file.size()) throw IoError("png: truncated chunk: " + path);
    const char* type = reinterpret_cast<const char*>(&file[pos + 4]);
    const std::uint8_t* payload = &file[pos + 8];
    if (std::memcmp(type, "IHDR", 4) == 0) {
      w = int(get_u32_be(payload));
      h = int(get_u32_be(payload + 4));
      int depth = payload[8], color = payload[9], interlace = payload[12];
      if (depth != 8 || interlace != 0) throw IoError("png: only 8-bit non-interlaced supported: " + path);
      channels = color == 0 ? 1 : (color == 2 ? 3 : (color == 6 ? 4 : -1));
      if (channels < 0) throw IoError("png: unsupported color type: " + path);
      have_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (!have_ihdr || idat.empty()) throw IoError("png: missing IHDR/IDAT: " + path);

  std::size_t stride = std::size_t(w) * channels;
  std::vector<std::uint8_t> raw = zlib_decompress(idat.data(), idat.size(), (stride + 1) * h);

  std::vector<std::uint8_t> out(stride * h);
  int bpp = channels;
  for (int y = 0; y < h; ++y) {
    std::uint8_t filter = raw[y * (stride + 1)];
    const std::uint8_t* src = &raw[y * (stride + 1) + 1];
    std::uint8_t* dst = &out[y * stride];
    const std::uint8_t* up = y > 0 ? &out[(y - 1) * stride] : nullptr;
    for (std::size_t x = 0; x < stride; ++x) {
      int a = x >= std::size_t(bpp) ? dst[x - bpp] : 0;
      int b = up ? up[x] : 0;
      int c = (up && x >= std::size_t(bpp)) ? up[x - bpp] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw IoError("png: bad filter byte: " + path);
      }
      dst[x] = std::uint8_t(v & 0xff);
    }
  }
  return out;
}

void write_raw_image_f32(const std::string& path, const float* planar, int h, int w, int c) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("raw image: cannot open for writing: " + path);
  const char magic[4] = {'N', 'B', 'F', '1'};
  std::uint32_t dims[3] = {std::uint32_t(h), std::uint32_t(w), std::uint32_t(c)};
  f.write(magic, 4);
  f.write(reinterpret_cast<const char*>(dims), 12);
  f.write(reinterpret_cast<const char*>(planar), std::streamsize(sizeof(float)) * h * w * c);
  if (!f) throw IoError("raw image: write failed: " + path);
}

std::vector<float> read_raw_image_f32(const std::string& path, int& h, int& w, int& c) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("raw image: cannot open: " + path);
  char magic[4];
  std::uint32_t dims[3];
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(dims), 12);
  if (!f || std::memcmp(magic, "NBF1", 4) != 0) throw IoError("raw image: bad header: " + path);
  h = int(dims[0]);
  w = int(dims[1]);
  c = int(dims[2]);
  std::vector<float> planar(std::size_t(h) * w * c);
  f.read(reinterpret_cast<char*>(planar.data()), std::streamsize(planar.size() * sizeof(float)));
  if (!f) throw IoError("raw image: truncated: " + path);
  return planar;
}

}  // namespace nerfbooth
