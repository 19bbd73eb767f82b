// Copyright (c) 2026, The DTEA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary tensor files:
//   "DTEA" | u32 version = 1 | u8 rank | rank x u32 dims | f32 payload
// All integers and floats little-endian, payload row-major with the
// outermost dimension first.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "dtea/error.hpp"
#include "dtea/tensor.hpp"

namespace dtea {

inline constexpr std::array<char, 4> kTensorMagic{'D', 'T', 'E', 'A'};
inline constexpr std::uint32_t kTensorFormatVersion = 1;
inline constexpr std::uint8_t kMaxTensorRank = 8;

struct TensorFile {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline std::vector<unsigned char> encode_tensor(const TensorFile& t) {
  if (t.dims.empty() || t.dims.size() > kMaxTensorRank) {
    throw FormatError("tensor rank " + std::to_string(t.dims.size()) + " out of range 1..8");
  }
  std::uint64_t count = 1;
  for (auto d : t.dims) count *= d;
  if (count != t.values.size()) throw ShapeError("tensor dims do not match value count");

  std::vector<unsigned char> out;
  out.reserve(9 + 4 * t.dims.size() + 4 * t.values.size());
  out.insert(out.end(), kTensorMagic.begin(), kTensorMagic.end());
  detail::put_u32(out, kTensorFormatVersion);
  out.push_back(static_cast<unsigned char>(t.dims.size()));
  for (auto d : t.dims) detail::put_u32(out, d);
  for (float v : t.values) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline TensorFile decode_tensor(const std::vector<unsigned char>& bytes) {
  constexpr std::size_t kHeader = 4 + 4 + 1;
  if (bytes.size() < kHeader) throw FormatError("tensor file truncated in header");
  if (std::memcmp(bytes.data(), kTensorMagic.data(), 4) != 0) {
    throw FormatError("bad magic, not a DTEA tensor file");
  }
  const std::uint32_t version = detail::get_u32(bytes.data() + 4);
  if (version != kTensorFormatVersion) {
    throw FormatError("unsupported tensor format version " + std::to_string(version));
  }
  const std::uint8_t rank = bytes[8];
  if (rank == 0 || rank > kMaxTensorRank) {
    throw FormatError("tensor rank " + std::to_string(rank) + " out of range 1..8");
  }
  if (bytes.size() < kHeader + 4u * rank) throw FormatError("tensor file truncated in dims");

  TensorFile t;
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const std::uint32_t d = detail::get_u32(bytes.data() + kHeader + 4 * i);
    t.dims.push_back(d);
    if (d != 0 && count > std::numeric_limits<std::uint32_t>::max() / d) {
      throw FormatError("tensor dims overflow");
    }
    count *= d;
  }
  const std::size_t payload_at = kHeader + 4u * rank;
  const std::uint64_t expected = payload_at + 4 * count;
  if (bytes.size() < expected) throw FormatError("tensor file truncated in payload");
  if (bytes.size() > expected) throw FormatError("trailing bytes after tensor payload");
  t.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    t.values[i] = std::bit_cast<float>(detail::get_u32(bytes.data() + payload_at + 4 * i));
  }
  return t;
}

inline void write_tensor_file(const TensorFile& t, const std::filesystem::path& path) {
  const auto bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

/// Saves a rank-3 map. Double maps are narrowed to float on disk.
template <typename T>
void save_tensor(const FeatureMap<T>& map, const std::filesystem::path& path) {
  TensorFile t;
  for (std::size_t d : {map.channels(), map.height(), map.width()}) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw FormatError("dimension exceeds u32");
    t.dims.push_back(static_cast<std::uint32_t>(d));
  }
  t.values.assign(map.data().begin(), map.data().end());
  write_tensor_file(t, path);
}

inline FeatureMap<float> load_tensor(const std::filesystem::path& path) {
  TensorFile t = read_tensor_file(path);
  if (t.dims.size() != 3) {
    throw FormatError(path.string() + ": expected a rank-3 feature map, found rank " +
                      std::to_string(t.dims.size()));
  }
  return FeatureMap<float>(Shape3{t.dims[0], t.dims[1], t.dims[2]}, std::move(t.values));
}

}  // namespace dtea
