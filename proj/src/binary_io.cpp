// SPDX-License-Identifier: Apache-2.0
#include "pairsel/binary_io.hpp"

namespace pairsel {

BinaryWriter::BinaryWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw Error(Errc::IoFailure, "cannot open " + path.string() + " for writing");
}

void BinaryWriter::magic(std::string_view four_cc) { out_.write(four_cc.data(), 4); }

void BinaryWriter::bytes(std::span<const std::uint8_t> data) {
  out_.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

void BinaryWriter::string(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  out_.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void BinaryWriter::f32s(std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out_.write(reinterpret_cast<const char*>(values.data()),
               static_cast<std::streamsize>(values.size() * sizeof(float)));
  } else {
    for (float v : values) f32(v);
  }
}

void BinaryWriter::finish() {
  out_.flush();
  if (!out_) throw Error(Errc::IoFailure, "write failed for " + path_.string());
  out_.close();
}

BinaryReader::BinaryReader(const std::filesystem::path& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw Error(Errc::IoFailure, "cannot open " + path.string());
  in_.seekg(0, std::ios::end);
  size_ = static_cast<std::uint64_t>(in_.tellg());
  in_.seekg(0, std::ios::beg);
}

void BinaryReader::read_raw(void* dst, std::size_t n) {
  in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) {
    throw Error(Errc::TruncatedFile, path_.string() + " ended early");
  }
}

void BinaryReader::expect_magic(std::string_view four_cc) {
  char got[4] = {};
  in_.read(got, 4);
  if (in_.gcount() != 4 || std::string_view(got, 4) != four_cc) {
    throw Error(Errc::MalformedHeader,
                path_.string() + " does not start with magic \"" + std::string(four_cc) + "\"");
  }
}

void BinaryReader::bytes(std::span<std::uint8_t> out) { read_raw(out.data(), out.size()); }

std::string BinaryReader::string() {
  const auto n = u32();
  if (n > remaining()) throw Error(Errc::TruncatedFile, path_.string() + " string overruns file");
  std::string s(n, '\0');
  read_raw(s.data(), n);
  return s;
}

void BinaryReader::f32s(std::span<float> out) {
  if constexpr (std::endian::native == std::endian::little) {
    read_raw(out.data(), out.size() * sizeof(float));
  } else {
    for (float& v : out) v = f32();
  }
}

std::uint64_t BinaryReader::remaining() {
  const auto pos = static_cast<std::uint64_t>(in_.tellg());
  return pos > size_ ? 0 : size_ - pos;
}

bool BinaryReader::at_end() { return remaining() == 0; }

}  // namespace pairsel
