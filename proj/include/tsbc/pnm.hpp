// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

// Binary portable graymap (P5) / pixmap (P6), maxval 255.

#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tsbc/binary_io.hpp"
#include "tsbc/error.hpp"

namespace tsbc {

struct PnmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;  ///< 1 for P5, 3 for P6
  std::vector<std::uint8_t> pixels;  ///< row-major, interleaved for P6

  bool operator==(const PnmImage&) const = default;
};

/// q(v) = round(255 v) after clamping to [0, 1].
inline std::uint8_t quantize_unit(double v) {
  if (!(v > 0.0)) return 0;
  if (v >= 1.0) return 255;
  return static_cast<std::uint8_t>(std::lround(255.0 * v));
}

inline std::vector<char> encode_pnm(const PnmImage& img) {
  if (img.channels != 1 && img.channels != 3) throw ShapeError("pnm: channels must be 1 or 3");
  if (img.pixels.size() != img.width * img.height * img.channels) {
    throw ShapeError("pnm: pixel buffer size mismatch");
  }
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(img.width) + " " + std::to_string(img.height) +
                             "\n255\n";
  std::vector<char> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

inline void write_pnm(const PnmImage& img, const std::string& path) {
  io::write_file(path, encode_pnm(img));
}

inline PnmImage decode_pnm(const std::vector<char>& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&] {
    skip_space();
    std::size_t v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      ++pos;
    }
    if (pos == start) throw FormatError("pnm: malformed header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("pnm: expected P5 or P6");
  }
  PnmImage img;
  img.channels = bytes[1] == '5' ? 1 : 3;
  pos = 2;
  img.width = number();
  img.height = number();
  if (number() != 255) throw FormatError("pnm: only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError("pnm: malformed header");
  }
  ++pos;
  const std::size_t n = img.width * img.height * img.channels;
  if (bytes.size() - pos != n) throw FormatError("pnm: pixel data size mismatch");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

inline PnmImage read_pnm(const std::string& path) { return decode_pnm(io::read_file(path)); }

/// [3, H, W] channel-planar float image in [0, 1] -> interleaved P6 pixmap.
inline PnmImage pixmap_from_planar(const float* chw, std::size_t height, std::size_t width) {
  PnmImage img{width, height, 3, std::vector<std::uint8_t>(width * height * 3)};
  const std::size_t p = width * height;
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t c = 0; c < 3; ++c) img.pixels[i * 3 + c] = quantize_unit(chw[c * p + i]);
  }
  return img;
}

}  // namespace tsbc
