// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

// Demonstration dataset and its "TBCD" container:
//   "TBCD" version
//   channels height width action_dim fps n_trajectories        (u32 each)
//   { length tag direction split }* per trajectory              (u32 each)
//   per trajectory: length images (f32 C*H*W each), then length actions

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tsbc/binary_io.hpp"
#include "tsbc/error.hpp"
#include "tsbc/nn/tensor.hpp"

namespace tsbc {

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

enum class Provenance : std::uint32_t { clean = 0, zigzag = 1, non_stop = 2, zigzag_non_stop = 3 };
enum class Direction : std::uint32_t { clockwise = 0, counterclockwise = 1 };
enum class Split : std::uint32_t { train = 0, test = 1 };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::clean: return "clean";
    case Provenance::zigzag: return "zigzag";
    case Provenance::non_stop: return "non_stop";
    case Provenance::zigzag_non_stop: return "zigzag_non_stop";
  }
  return "?";
}

inline Provenance provenance_from_string(const std::string& s) {
  if (s == "clean") return Provenance::clean;
  if (s == "zigzag") return Provenance::zigzag;
  if (s == "non_stop") return Provenance::non_stop;
  if (s == "zigzag_non_stop" || s == "both") return Provenance::zigzag_non_stop;
  throw ConfigError("unknown noise mode '" + s + "'");
}

inline const char* to_string(Direction d) {
  return d == Direction::clockwise ? "clockwise" : "counterclockwise";
}

inline bool has_zigzag(Provenance p) {
  return p == Provenance::zigzag || p == Provenance::zigzag_non_stop;
}
inline bool has_non_stop(Provenance p) {
  return p == Provenance::non_stop || p == Provenance::zigzag_non_stop;
}

struct Trajectory {
  Provenance tag = Provenance::clean;
  Direction direction = Direction::counterclockwise;
  Split split = Split::train;
  std::vector<float> images;   ///< length x C x H x W
  std::vector<float> actions;  ///< length x A, action t applied between frames t and t+1

  bool operator==(const Trajectory&) const = default;
};

struct Dataset {
  std::uint32_t channels = 3;
  std::uint32_t height = 32;
  std::uint32_t width = 32;
  std::uint32_t action_dim = 2;
  std::uint32_t fps = 10;
  std::vector<Trajectory> trajectories;

  std::size_t frame_size() const { return std::size_t{channels} * height * width; }

  std::size_t length(const Trajectory& t) const { return t.actions.size() / action_dim; }

  std::size_t frame_count(Split split) const {
    std::size_t n = 0;
    for (const auto& t : trajectories) {
      if (t.split == split) n += length(t);
    }
    return n;
  }

  bool operator==(const Dataset&) const = default;
};

/// Flat view of every frame of one split, in trajectory order.
struct FrameSet {
  std::size_t channels = 0, height = 0, width = 0, action_dim = 0;
  std::vector<const float*> images;
  std::vector<const float*> actions;

  std::size_t size() const { return images.size(); }

  Tensor<float> batch_images(std::span<const std::size_t> idx) const {
    const std::size_t frame = channels * height * width;
    Tensor<float> out({idx.size(), channels, height, width});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::copy_n(images[idx[i]], frame, out.data() + i * frame);
    }
    return out;
  }

  std::vector<double> batch_actions(std::span<const std::size_t> idx) const {
    std::vector<double> out(idx.size() * action_dim);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t d = 0; d < action_dim; ++d) out[i * action_dim + d] = actions[idx[i]][d];
    }
    return out;
  }
};

inline FrameSet frames_of(const Dataset& ds, Split split) {
  FrameSet fs;
  fs.channels = ds.channels;
  fs.height = ds.height;
  fs.width = ds.width;
  fs.action_dim = ds.action_dim;
  const std::size_t frame = ds.frame_size();
  for (const auto& t : ds.trajectories) {
    if (t.split != split) continue;
    for (std::size_t i = 0; i < ds.length(t); ++i) {
      fs.images.push_back(t.images.data() + i * frame);
      fs.actions.push_back(t.actions.data() + i * ds.action_dim);
    }
  }
  return fs;
}

inline void validate(const Dataset& ds) {
  if (ds.action_dim == 0 || ds.channels == 0 || ds.height == 0 || ds.width == 0) {
    throw FormatError("dataset: degenerate header");
  }
  for (const auto& t : ds.trajectories) {
    const std::size_t n = ds.length(t);
    if (n == 0) throw FormatError("dataset: empty trajectory");
    if (t.actions.size() != n * ds.action_dim || t.images.size() != n * ds.frame_size()) {
      throw FormatError("dataset: trajectory image/action count mismatch");
    }
    if (t.split == Split::test && t.tag != Provenance::clean) {
      throw FormatError("dataset: noisy trajectory in the test split");
    }
  }
}

inline std::vector<char> encode_dataset(const Dataset& ds) {
  validate(ds);
  io::Writer w;
  w.bytes("TBCD");
  w.u32(kDatasetFormatVersion);
  w.u32(ds.channels);
  w.u32(ds.height);
  w.u32(ds.width);
  w.u32(ds.action_dim);
  w.u32(ds.fps);
  w.u32(static_cast<std::uint32_t>(ds.trajectories.size()));
  for (const auto& t : ds.trajectories) {
    w.u32(static_cast<std::uint32_t>(ds.length(t)));
    w.u32(static_cast<std::uint32_t>(t.tag));
    w.u32(static_cast<std::uint32_t>(t.direction));
    w.u32(static_cast<std::uint32_t>(t.split));
  }
  for (const auto& t : ds.trajectories) {
    w.f32_array(std::span<const float>(t.images));
    w.f32_array(std::span<const float>(t.actions));
  }
  return w.buffer();
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  io::write_file(path, encode_dataset(ds));
}

inline Dataset decode_dataset(std::vector<char> bytes) {
  io::Reader r(std::move(bytes));
  r.expect_magic("TBCD");
  const std::uint32_t version = r.u32();
  if (version != kDatasetFormatVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(version));
  }
  Dataset ds;
  ds.channels = r.u32();
  ds.height = r.u32();
  ds.width = r.u32();
  ds.action_dim = r.u32();
  ds.fps = r.u32();
  const std::uint32_t n = r.u32();
  std::vector<std::uint32_t> lengths(n);
  ds.trajectories.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    lengths[i] = r.u32();
    const std::uint32_t tag = r.u32(), dir = r.u32(), split = r.u32();
    if (tag > 3 || dir > 1 || split > 1) throw FormatError("dataset: bad trajectory descriptor");
    ds.trajectories[i].tag = static_cast<Provenance>(tag);
    ds.trajectories[i].direction = static_cast<Direction>(dir);
    ds.trajectories[i].split = static_cast<Split>(split);
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    auto& t = ds.trajectories[i];
    const std::size_t need = std::size_t{lengths[i]} * (ds.frame_size() + ds.action_dim) * 4;
    if (r.remaining() < need) throw FormatError("truncated file");
    t.images.resize(std::size_t{lengths[i]} * ds.frame_size());
    t.actions.resize(std::size_t{lengths[i]} * ds.action_dim);
    r.f32_array(std::span<float>(t.images));
    r.f32_array(std::span<float>(t.actions));
  }
  if (!r.at_end()) throw FormatError("trailing bytes in dataset file");
  validate(ds);
  return ds;
}

inline Dataset load_dataset(const std::string& path) { return decode_dataset(io::read_file(path)); }

}  // namespace tsbc
