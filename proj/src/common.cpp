// SPDX-License-Identifier: Apache-2.0
#include "pairsel/common.hpp"

#include <omp.h>

#include <cstdio>
#include <fstream>

namespace pairsel {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedHeader: return "MalformedHeader";
    case Errc::TruncatedFile: return "TruncatedFile";
    case Errc::BadDimension: return "BadDimension";
    case Errc::IoFailure: return "IoFailure";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::TooFewDescriptors: return "TooFewDescriptors";
    case Errc::NaNInput: return "NaNInput";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::DuplicateImageId: return "DuplicateImageId";
    case Errc::EmptyIndex: return "EmptyIndex";
    case Errc::ContentMismatch: return "ContentMismatch";
    case Errc::EmptyList: return "EmptyList";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::DegenerateScores: return "DegenerateScores";
    case Errc::EmptySet: return "EmptySet";
    case Errc::TooFewMatches: return "TooFewMatches";
    case Errc::DegenerateConfiguration: return "DegenerateConfiguration";
    case Errc::InvalidDims: return "InvalidDims";
    case Errc::Disconnected: return "Disconnected";
    case Errc::TooSmall: return "TooSmall";
    case Errc::EmptyDatabase: return "EmptyDatabase";
    case Errc::UnknownMethod: return "UnknownMethod";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void Matrix::append_row(std::span<const float> values) {
  if (rows == 0 && cols == 0) cols = values.size();
  if (values.size() != cols) {
    throw Error(Errc::DimensionMismatch, "row of length " + std::to_string(values.size()) +
                                             " appended to matrix with " + std::to_string(cols) +
                                             " columns");
  }
  data.insert(data.end(), values.begin(), values.end());
  ++rows;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t basis) noexcept {
  std::uint64_t h = basis;
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
  return fnv1a64(std::as_bytes(std::span(text.data(), text.size())));
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) noexcept {
  return splitmix64(root ^ fnv1a64(tag));
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix64(splitmix64(root ^ splitmix64(a)) ^ b);
}

std::uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    h = fnv1a64(std::as_bytes(std::span(buf.data(), got)), h);
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

void set_thread_count(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

int thread_count() { return omp_get_max_threads(); }

}  // namespace pairsel
