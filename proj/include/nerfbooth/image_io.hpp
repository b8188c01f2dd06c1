// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nerfbooth/image.hpp"

namespace nerfbooth {

// Minimal PNG codec backed by zlib. Writes 8-bit grayscale/RGB/RGBA,
// non-interlaced, filter 0; reads back any 8-bit non-interlaced PNG with
// filters 0-4 (everything this project ever produces).
void write_png_u8(const std::string& path, const std::vector<std::uint8_t>& interleaved, int h, int w, int channels);
std::vector<std::uint8_t> read_png_u8(const std::string& path, int& h, int& w, int& channels);

// Raw planar float dump for exact regression comparisons.
// 16-byte header: magic "NBF1", u32 H, u32 W, u32 C, then H*W*C little-endian
// f32 in planar order.
void write_raw_image_f32(const std::string& path, const float* planar, int h, int w, int c);
std::vector<float> read_raw_image_f32(const std::string& path, int& h, int& w, int& c);

// Values are linear in [0,1]; quantization is x255 with round-half-up.
template <typename T>
void write_png(const std::string& path, const Image<T>& img) {
  std::vector<std::uint8_t> buf(std::size_t(img.h) * img.w * img.c);
  std::size_t k = 0;
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) {
        double v = double(img.at(ch, y, x));
        v = v < 0 ? 0 : (v > 1 ? 1 : v);
        buf[k++] = std::uint8_t(std::floor(v * 255.0 + 0.5));
      }
  write_png_u8(path, buf, img.h, img.w, img.c);
}

template <typename T>
Image<T> read_png(const std::string& path) {
  int h = 0, w = 0, c = 0;
  std::vector<std::uint8_t> buf = read_png_u8(path, h, w, c);
  Image<T> img(h, w, c);
  std::size_t k = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) img.at(ch, y, x) = T(buf[k++] / 255.0);
  return img;
}

template <typename T>
void write_raw_image(const std::string& path, const Image<T>& img) {
  std::vector<float> planar(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) planar[i] = float(img.data[i]);
  write_raw_image_f32(path, planar.data(), img.h, img.w, img.c);
}

template <typename T>
Image<T> read_raw_image(const std::string& path) {
  int h = 0, w = 0, c = 0;
  std::vector<float> planar = read_raw_image_f32(path, h, w, c);
  Image<T> img(h, w, c);
  for (std::size_t i = 0; i < planar.size(); ++i) img.data[i] = T(planar[i]);
  return img;
}

}  // namespace nerfbooth
