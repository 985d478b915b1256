// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsbc/error.hpp"

namespace tsbc {

struct ConvGeometry {
  std::uint32_t kernel = 3;
  std::uint32_t stride = 1;
  std::uint32_t padding = 0;

  /// Forward output length for an input of length n (0 if the kernel does not fit).
  std::uint32_t output_size(std::uint32_t n) const {
    const std::int64_t span = std::int64_t{n} + 2 * std::int64_t{padding} - kernel;
    if (span < 0) return 0;
    return static_cast<std::uint32_t>(span / stride + 1);
  }

  bool operator==(const ConvGeometry&) const = default;
};

struct ConvSpec {
  std::uint32_t out_channels = 0;
  ConvGeometry geometry;
  bool instance_norm = true;

  bool operator==(const ConvSpec&) const = default;
};

/// Layer list of a policy network: conv stack, dense stack, Gaussian heads.
struct Architecture {
  std::uint32_t in_channels = 3;
  std::uint32_t in_height = 32;
  std::uint32_t in_width = 32;
  std::vector<ConvSpec> conv;
  std::vector<std::uint32_t> dense;  ///< hidden widths
  std::uint32_t action_dim = 2;

  struct ConvShape {
    std::uint32_t in_channels, in_height, in_width;
    std::uint32_t out_channels, out_height, out_width;
  };

  std::vector<ConvShape> conv_shapes() const {
    std::vector<ConvShape> shapes;
    std::uint32_t c = in_channels, h = in_height, w = in_width;
    for (const ConvSpec& s : conv) {
      const ConvShape cs{c, h, w, s.out_channels, s.geometry.output_size(h),
                         s.geometry.output_size(w)};
      shapes.push_back(cs);
      c = cs.out_channels;
      h = cs.out_height;
      w = cs.out_width;
    }
    return shapes;
  }

  /// Flattened length of the last conv feature (the first dense input).
  std::uint32_t conv_output_size() const {
    if (conv.empty()) return in_channels * in_height * in_width;
    const ConvShape s = conv_shapes().back();
    return s.out_channels * s.out_height * s.out_width;
  }

  std::uint32_t head_input_size() const {
    return dense.empty() ? conv_output_size() : dense.back();
  }

  void validate() const {
    if (in_channels == 0 || in_height == 0 || in_width == 0) {
      throw ConfigError("architecture: empty input shape");
    }
    if (action_dim == 0) throw ConfigError("architecture: action_dim must be positive");
    for (std::size_t l = 0; l < conv.size(); ++l) {
      const ConvSpec& s = conv[l];
      if (s.out_channels == 0 || s.geometry.kernel == 0 || s.geometry.stride == 0) {
        throw ConfigError("architecture: conv layer " + std::to_string(l) + " is degenerate");
      }
    }
    for (const ConvShape& s : conv_shapes()) {
      if (s.out_height == 0 || s.out_width == 0) {
        throw ConfigError("architecture: conv stack does not fit input " +
                          std::to_string(in_height) + "x" + std::to_string(in_width));
      }
    }
    const auto shapes = conv_shapes();
    for (std::size_t l = 0; l < conv.size(); ++l) {
      if (conv[l].instance_norm && shapes[l].out_height * shapes[l].out_width < 2) {
        throw ConfigError("architecture: instance norm on a 1x1 conv output is degenerate");
      }
    }
    for (std::uint32_t w : dense) {
      if (w < 2) throw ConfigError("architecture: dense layers need width >= 2 for layer norm");
    }
  }

  bool operator==(const Architecture&) const = default;
};

/// 32x32x3 input, five 3x3 stride-2 convs (16/32/64/128/128 channels) down to
/// 1x1, dense 128-128-64, 2-d Gaussian head.
inline Architecture desk_architecture() {
  Architecture a;
  a.in_channels = 3;
  a.in_height = a.in_width = 32;
  const std::uint32_t channels[] = {16, 32, 64, 128, 128};
  for (std::uint32_t c : channels) a.conv.push_back({c, {3, 2, 1}, true});
  a.conv.back().instance_norm = false;  // 1x1 output
  a.dense = {128, 128, 64};
  a.action_dim = 2;
  return a;
}

/// 96x96x3 input, four 3x3 stride-2 convs to 6x6, one 6x6 conv to 1x1x128.
inline Architecture paper_architecture() {
  Architecture a;
  a.in_channels = 3;
  a.in_height = a.in_width = 96;
  const std::uint32_t channels[] = {16, 32, 64, 128};
  for (std::uint32_t c : channels) a.conv.push_back({c, {3, 2, 1}, true});
  a.conv.push_back({128, {6, 1, 0}, false});
  a.dense = {128, 128, 64};
  a.action_dim = 2;
  return a;
}

inline Architecture architecture_by_name(const std::string& name) {
  if (name == "desk") return desk_architecture();
  if (name == "paper") return paper_architecture();
  throw ConfigError("unknown architecture '" + name + "' (expected desk or paper)");
}

}  // namespace tsbc
