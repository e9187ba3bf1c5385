// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic aerial image collections with known overlap.
//
// A textured 3D terrain (landmarks with random relief) is photographed by
// near-nadir pinhole cameras laid out along a flight strip or a block of
// strips. Every landmark carries one base descriptor; each image that sees
// the landmark observes it with bounded descriptor and pixel noise. Images
// also receive unique distractor features. Two images form a ground-truth
// pair when they observe at least `min_shared` common landmarks, and the
// shared observations are the ground-truth correspondences. Because the
// cameras are full projective views of a non-planar scene, every pair has a
// well-defined fundamental matrix.

#include <array>
#include <cstdint>
#include <set>
#include <utility>
#include <vector>

#include "pairsel/descriptor_io.hpp"
#include "pairsel/key_values.hpp"

namespace pairsel {

enum class OverlapModel { strip, grid };

struct SyntheticConfig {
  std::size_t n_images = 50;
  std::size_t features_per_image = 400;
  OverlapModel model = OverlapModel::strip;
  double overlap = 0.65;       // forward overlap between consecutive images
  double side_overlap = 0.4;   // overlap between neighbouring strips (grid)
  std::size_t grid_columns = 10;
  double distractor_fraction = 0.3;
  double descriptor_noise = 6.0;  // max |delta| per component, u8 units
  double pixel_noise = 0.3;       // max |delta| per coordinate, pixels
  double relief = 80.0;           // terrain height range, ground units
  double altitude = 1000.0;
  double attitude_jitter_deg = 1.0;
  double position_jitter = 5.0;
  std::uint32_t image_width = 1000;
  std::uint32_t image_height = 750;
  std::size_t prototypes = 64;
  double landmark_spread = 20.0;  // per-component std-dev around a prototype
  std::size_t min_shared = 16;
  std::uint64_t seed = 1;
};

/// Throws InvalidConfig for fractions outside [0,1], fewer than two images or
/// non-positive geometry.
void validate(const SyntheticConfig& cfg);

SyntheticConfig synthetic_config_from(const KeyValues& kv, SyntheticConfig base = {});
KeyValues to_key_values(const SyntheticConfig& cfg);

struct Correspondence {
  std::uint32_t index_a = 0;
  std::uint32_t index_b = 0;
  bool operator==(const Correspondence&) const = default;
};

struct GroundTruthPair {
  std::uint64_t image_a = 0;  // image_a < image_b
  std::uint64_t image_b = 0;
  std::vector<Correspondence> correspondences;
  bool operator==(const GroundTruthPair&) const = default;
};

struct SyntheticGroundTruth {
  std::vector<GroundTruthPair> pairs;  // sorted by (image_a, image_b)

  std::set<std::pair<std::uint64_t, std::uint64_t>> pair_set() const;
  bool operator==(const SyntheticGroundTruth&) const = default;
};

struct SyntheticDataset {
  std::vector<DescriptorSet> images;
  SyntheticGroundTruth truth;
  /// Per image, per feature: landmark id, or -1 for a distractor.
  std::vector<std::vector<std::int64_t>> feature_landmarks;
};

/// Pure function of the configuration (including its seed).
SyntheticDataset generate_synthetic_dataset(const SyntheticConfig& cfg);

/// Writes `image_NNNNNN.uvd` files plus `ground_truth.txt` (`i j shared`)
/// and, when requested, `ground_truth_matches.txt` (`i j index_a index_b`).
void write_synthetic_dataset(const SyntheticDataset& data, const std::filesystem::path& dir,
                             bool with_correspondences);

/// Reads the pair list written by write_synthetic_dataset.
std::set<std::pair<std::uint64_t, std::uint64_t>> read_ground_truth_pairs(
    const std::filesystem::path& path);

/// Ground-truth camera of one synthetic image: x_img ~ K [R | -R C] X.
struct SyntheticCamera {
  std::array<double, 9> rotation{};  // row-major world-to-camera
  std::array<double, 3> center{};
  double focal = 0.0;
  double cx = 0.0;
  double cy = 0.0;
};
std::vector<SyntheticCamera> synthetic_cameras(const SyntheticConfig& cfg);

}  // namespace pairsel
