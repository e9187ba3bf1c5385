// SPDX-License-Identifier: Apache-2.0
#pragma once

// Online visual codebook: a random subset of images contributes its
// largest-scale features, which are clustered by Lloyd's k-means.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pairsel/common.hpp"
#include "pairsel/descriptor_io.hpp"

namespace pairsel {

struct SamplingConfig {
  double image_fraction = 0.2;           // p
  std::size_t features_per_image = 1500;  // h
  std::uint64_t seed = 0;
};

struct TrainingSample {
  Matrix descriptors;                 // unit-L2 rows
  std::vector<std::uint64_t> images;  // ids of the sampled images, ascending
};

/// Picks ceil(p * n) images uniformly at random and takes the h largest-scale
/// features of each. Throws EmptyInput for an empty collection and
/// InvalidConfig for p outside (0, 1] or h == 0.
TrainingSample sample_training_descriptors(std::span<const DescriptorSet> sets, const SamplingConfig& cfg);

enum class KMeansInit { plus_plus, random };

struct KMeansConfig {
  std::size_t k = 256;
  std::size_t max_iters = 50;
  double tol = 1e-4;  // stop when the relative inertia decrease falls below tol
  std::uint64_t seed = 0;
  KMeansInit init = KMeansInit::plus_plus;
  Exec exec = Exec::parallel;
};

struct Codebook {
  Matrix centers;  // k x d
  std::size_t iterations = 0;
  double inertia = 0.0;
  std::vector<double> inertia_history;  // one entry per assignment pass
  std::size_t training_size = 0;

  std::size_t k() const { return centers.rows; }
  std::size_t dim() const { return centers.cols; }
};

/// Throws TooFewDescriptors when there are fewer rows than k, NaNInput for a
/// non-finite component and InvalidArgument for k == 0.
Codebook train_codebook(const Matrix& descriptors, const KMeansConfig& cfg);

/// Index of the nearest center; ties go to the lowest index.
std::uint32_t nearest_center(const Codebook& codebook, std::span<const float> v);

/// Writes "UVC1" plus `<path>.meta` with the training metadata.
void save_codebook(const Codebook& codebook, const std::filesystem::path& path);
/// Reads centers (and the metadata sidecar when present).
Codebook load_codebook(const std::filesystem::path& path);

}  // namespace pairsel
