// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pairsel/codebook.hpp"
#include "pairsel/descriptor_io.hpp"

namespace pairsel {

/// VLAD global descriptor: k blocks of d residual sums, each block
/// L2-normalized, then the whole vector L2-normalized.
struct VladDescriptor {
  std::uint64_t image_id = 0;
  std::size_t k = 0;
  std::size_t d = 0;
  std::vector<float> values;  // k * d, block j holds the residuals of center j
  bool degenerate = false;     // no features or all residuals zero: values are all zero

  bool operator==(const VladDescriptor&) const = default;
};

/// Aggregates the unit-normalized descriptors of one image.
/// Throws DimensionMismatch when the codebook is not 128-dimensional.
VladDescriptor aggregate_vlad(const DescriptorSet& set, const Codebook& codebook);

/// Aggregates arbitrary rows (one local descriptor per row) against the codebook.
VladDescriptor aggregate_vlad(std::uint64_t image_id, const Matrix& descriptors, const Codebook& codebook);

/// One descriptor per input set, in input order. A failure is rethrown with
/// the image id in the message; the lowest failing position wins.
std::vector<VladDescriptor> batch_aggregate(std::span<const DescriptorSet> sets, const Codebook& codebook,
                                            Exec exec = Exec::parallel);

/// Stacks the non-degenerate descriptors into a matrix; their ids go to `ids`.
Matrix stack_vlads(std::span<const VladDescriptor> vlads, std::vector<std::uint64_t>& ids);

/// "UVL1" persistence. Degenerate descriptors are stored as zero rows and come
/// back flagged.
void save_vlads(std::span<const VladDescriptor> vlads, const std::filesystem::path& path);
std::vector<VladDescriptor> load_vlads(const std::filesystem::path& path);

}  // namespace pairsel
