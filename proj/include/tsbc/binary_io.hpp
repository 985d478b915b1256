// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

// Little-endian primitives for the TBCW / TBCD containers.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsbc/error.hpp"

namespace tsbc::io {

class Writer {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }

  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }

  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  template <class T>
  void f32_array(std::span<const T> values) {
    const std::size_t at = buf_.size();
    buf_.resize(at + 4 * values.size());
    char* dst = buf_.data() + at;
    for (const T& v : values) {
      const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) *dst++ = static_cast<char>((u >> (8 * i)) & 0xFF);
    }
  }

  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> data) : data_(std::move(data)) {}

  void expect_magic(std::string_view magic) {
    need(magic.size());
    if (std::string_view(data_.data() + pos_, magic.size()) != magic) {
      throw FormatError("bad magic: expected '" + std::string(magic) + "'");
    }
    pos_ += magic.size();
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }

  float f32() { return std::bit_cast<float>(u32()); }

  template <class T>
  void f32_array(std::span<T> out) {
    need(4 * out.size());
    for (T& v : out) v = static_cast<T>(f32());
  }

  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError("truncated file");
  }

  std::vector<char> data_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<char> bytes(static_cast<std::size_t>(in.tellg()));
  in.seekg(0);
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw IoError("read failed for '" + path + "'");
  return bytes;
}

inline void write_file(const std::string& path, std::span<const char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace tsbc::io
