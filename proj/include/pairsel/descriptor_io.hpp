// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pairsel/common.hpp"

namespace pairsel {

/// One keypoint with its raw 8-bit descriptor.
struct LocalFeature {
  float x = 0.0f;
  float y = 0.0f;
  float scale = 1.0f;
  float orientation = 0.0f;
  std::vector<std::uint8_t> descriptor;  // exactly kDescriptorDim entries

  bool operator==(const LocalFeature&) const = default;
};

/// Local features of one image, ordered by descending scale.
struct DescriptorSet {
  std::uint64_t image_id = 0;
  std::uint32_t image_width = 0;
  std::uint32_t image_height = 0;
  std::vector<LocalFeature> features;

  bool operator==(const DescriptorSet&) const = default;
};

inline constexpr std::size_t kDefaultFeatureCap = 8192;

struct LoadOptions {
  std::size_t feature_cap = kDefaultFeatureCap;
};

/// Throws BadDimension for a descriptor that is not 128 long and
/// InvalidArgument for non-positive image size, non-positive scale or a
/// non-finite keypoint field.
void validate(const DescriptorSet& set);

/// Stable sort by descending scale (equal scales keep their relative order).
void sort_by_scale(DescriptorSet& set);

/// Reads a "UVD1" file. Features come back sorted by descending scale and
/// truncated to `options.feature_cap`.
DescriptorSet load_descriptor_set(const std::filesystem::path& path, const LoadOptions& options = {});

/// Writes a "UVD1" file. The set is validated before anything is written.
void save_descriptor_set(const DescriptorSet& set, const std::filesystem::path& path);

/// All "*.uvd" files of a directory in lexicographic order.
std::vector<std::filesystem::path> list_descriptor_files(const std::filesystem::path& dir);

/// Unit-L2 f32 copy of the first `max_features` descriptors (all by default).
/// A zero descriptor stays zero.
Matrix unit_descriptors(const DescriptorSet& set, std::size_t max_features = SIZE_MAX);

}  // namespace pairsel
