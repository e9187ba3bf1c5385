// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pairsel {

/// Dimension of the SIFT-style local descriptors handled by the pipeline.
inline constexpr std::size_t kDescriptorDim = 128;

enum class Errc {
  MalformedHeader,
  TruncatedFile,
  BadDimension,
  IoFailure,
  InvalidConfig,
  InvalidArgument,
  EmptyInput,
  TooFewDescriptors,
  NaNInput,
  DimensionMismatch,
  DuplicateImageId,
  EmptyIndex,
  ContentMismatch,
  EmptyList,
  InsufficientSamples,
  DegenerateScores,
  EmptySet,
  TooFewMatches,
  DegenerateConfiguration,
  InvalidDims,
  Disconnected,
  TooSmall,
  EmptyDatabase,
  UnknownMethod,
};

std::string_view to_string(Errc code) noexcept;

/// All library failures are reported through this exception type; `code()`
/// identifies the failure class independently of the message text.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Execution policy for the data-parallel kernels. `serial` is the reference
/// path; `parallel` must produce bit-identical results.
enum class Exec { serial, parallel };

/// Dense row-major f32 matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  std::span<const float> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::span<float> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  const float* row_ptr(std::size_t r) const { return data.data() + r * cols; }
  float* row_ptr(std::size_t r) { return data.data() + r * cols; }
  bool empty() const { return rows == 0; }

  void append_row(std::span<const float> values);

  bool operator==(const Matrix&) const = default;
};

// --- seeding -------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::span<const std::byte> bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;

/// Stage seed = splitmix64(root ^ fnv1a64(tag)).
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) noexcept;
/// Seed for an item keyed by two integers (e.g. an image pair).
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b) noexcept;

/// FNV-1a 64 over the full file contents.
std::uint64_t hash_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t value);

// --- parallelism ---------------------------------------------------------

/// Caps OpenMP worker count for the whole process (0 leaves the default).
void set_thread_count(int threads);
int thread_count();

}  // namespace pairsel
