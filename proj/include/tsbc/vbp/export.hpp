// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "tsbc/pnm.hpp"
#include "tsbc/vbp/visualbackprop.hpp"

namespace tsbc {

inline void check_map(const AttentionMap& map) {
  if (map.rank() != 2 || map.empty()) throw ShapeError("attention map must be a non-empty [H, W]");
  for (double v : map.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("attention map value outside [0, 1]");
  }
}

inline PnmImage graymap(const AttentionMap& map) {
  check_map(map);
  PnmImage img{map.dim(1), map.dim(0), 1, std::vector<std::uint8_t>(map.size())};
  for (std::size_t i = 0; i < map.size(); ++i) img.pixels[i] = quantize_unit(map[i]);
  return img;
}

/// Blue (0) to yellow (1) heat colour blended 50/50 over a [3, H, W] image.
inline PnmImage overlay(const AttentionMap& map, const Tensor<float>& image) {
  check_map(map);
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != map.dim(0) ||
      image.dim(2) != map.dim(1)) {
    throw ShapeError("overlay: image must be [3, " + std::to_string(map.dim(0)) + ", " +
                     std::to_string(map.dim(1)) + "]");
  }
  const std::size_t p = map.size();
  PnmImage img{map.dim(1), map.dim(0), 3, std::vector<std::uint8_t>(p * 3)};
  for (std::size_t i = 0; i < p; ++i) {
    const double v = map[i];
    const double heat[3] = {v, v, 1.0 - v};
    for (std::size_t c = 0; c < 3; ++c) {
      img.pixels[i * 3 + c] = quantize_unit(0.5 * image[c * p + i] + 0.5 * heat[c]);
    }
  }
  return img;
}

inline void export_map(const AttentionMap& map, const std::string& path) {
  write_pnm(graymap(map), path);
}

inline void export_map(const AttentionMap& map, const std::string& path, const Tensor<float>& image) {
  write_pnm(overlay(map, image), path);
}

}  // namespace tsbc
