// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

// Weight file layout (all integers u32 little-endian):
//   "TBCW" version
//   in_channels in_height in_width action_dim
//   n_conv  { out_channels kernel stride padding instance_norm }*
//   n_dense { width }*
//   n_tensors { element_count }*
//   f32 parameter blobs in declaration order

#pragma once

#include <string>

#include "tsbc/binary_io.hpp"
#include "tsbc/nn/network.hpp"

namespace tsbc {

inline constexpr std::uint32_t kWeightFormatVersion = 1;

template <class T>
std::vector<char> encode_weights(const PolicyNetwork<T>& net) {
  const Architecture& a = net.architecture();
  io::Writer w;
  w.bytes("TBCW");
  w.u32(kWeightFormatVersion);
  w.u32(a.in_channels);
  w.u32(a.in_height);
  w.u32(a.in_width);
  w.u32(a.action_dim);
  w.u32(static_cast<std::uint32_t>(a.conv.size()));
  for (const ConvSpec& c : a.conv) {
    w.u32(c.out_channels);
    w.u32(c.geometry.kernel);
    w.u32(c.geometry.stride);
    w.u32(c.geometry.padding);
    w.u32(c.instance_norm ? 1u : 0u);
  }
  w.u32(static_cast<std::uint32_t>(a.dense.size()));
  for (std::uint32_t d : a.dense) w.u32(d);
  const auto& params = net.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) w.u32(static_cast<std::uint32_t>(p.size()));
  for (const auto& p : params) w.f32_array(std::span<const T>(p.data));
  return w.buffer();
}

template <class T>
void save_weights(const PolicyNetwork<T>& net, const std::string& path) {
  io::write_file(path, encode_weights(net));
}

template <class T = float>
PolicyNetwork<T> decode_weights(std::vector<char> bytes) {
  io::Reader r(std::move(bytes));
  r.expect_magic("TBCW");
  const std::uint32_t version = r.u32();
  if (version != kWeightFormatVersion) {
    throw FormatError("unsupported weight file version " + std::to_string(version));
  }
  Architecture a;
  a.in_channels = r.u32();
  a.in_height = r.u32();
  a.in_width = r.u32();
  a.action_dim = r.u32();
  const std::uint32_t n_conv = r.u32();
  if (n_conv > 1024) throw FormatError("implausible conv layer count");
  for (std::uint32_t i = 0; i < n_conv; ++i) {
    ConvSpec c;
    c.out_channels = r.u32();
    c.geometry.kernel = r.u32();
    c.geometry.stride = r.u32();
    c.geometry.padding = r.u32();
    c.instance_norm = r.u32() != 0;
    a.conv.push_back(c);
  }
  const std::uint32_t n_dense = r.u32();
  if (n_dense > 1024) throw FormatError("implausible dense layer count");
  for (std::uint32_t i = 0; i < n_dense; ++i) a.dense.push_back(r.u32());
  PolicyNetwork<T> net = [&] {
    try {
      return PolicyNetwork<T>(a);
    } catch (const ConfigError& e) {
      throw FormatError(std::string("weight file architecture is invalid: ") + e.what());
    }
  }();
  auto& params = net.parameters();
  if (r.u32() != params.size()) throw FormatError("weight file tensor count does not match architecture");
  for (const auto& p : params) {
    if (r.u32() != p.size()) throw FormatError("weight file tensor size mismatch for " + p.name);
  }
  for (auto& p : params) r.f32_array(std::span<T>(p.data));
  if (!r.at_end()) throw FormatError("trailing bytes in weight file");
  return net;
}

template <class T = float>
PolicyNetwork<T> load_weights(const std::string& path) {
  return decode_weights<T>(io::read_file(path));
}

/// Loads and checks the stored layer list against an expected architecture.
template <class T = float>
PolicyNetwork<T> load_weights(const std::string& path, const Architecture& expected) {
  PolicyNetwork<T> net = load_weights<T>(path);
  if (net.architecture().conv.size() != expected.conv.size()) {
    throw FormatError("weight file has " + std::to_string(net.architecture().conv.size()) +
                      " conv layers, expected " + std::to_string(expected.conv.size()));
  }
  if (!(net.architecture() == expected)) {
    throw FormatError("weight file architecture differs from the configured architecture");
  }
  return net;
}

}  // namespace tsbc
