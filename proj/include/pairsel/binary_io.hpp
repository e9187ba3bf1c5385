// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>

#include "pairsel/common.hpp"

namespace pairsel {

// Little-endian primitives shared by every on-disk format.

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path);

  void magic(std::string_view four_cc);
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::span<const std::uint8_t> data);
  void string(std::string_view s);
  void f32s(std::span<const float> values);

  /// Flushes and closes; throws IoFailure if any write failed.
  void finish();

 private:
  template <class U>
  void put(U v) {
    std::array<unsigned char, sizeof(U)> buf;
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    out_.write(reinterpret_cast<const char*>(buf.data()), buf.size());
  }

  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path);

  /// Reads four bytes and throws MalformedHeader unless they equal `four_cc`.
  void expect_magic(std::string_view four_cc);
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  void bytes(std::span<std::uint8_t> out);
  std::string string();
  void f32s(std::span<float> out);

  bool at_end();
  std::uint64_t remaining();
  const std::filesystem::path& path() const { return path_; }

 private:
  template <class U>
  U get() {
    std::array<unsigned char, sizeof(U)> buf;
    read_raw(buf.data(), buf.size());
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
  }
  void read_raw(void* dst, std::size_t n);

  std::filesystem::path path_;
  std::ifstream in_;
  std::uint64_t size_ = 0;
};

}  // namespace pairsel
