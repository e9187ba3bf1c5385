// SPDX-License-Identifier: Apache-2.0
#pragma once

// Descriptor matching (ratio test + cross-check) and RANSAC estimation of the
// fundamental matrix with the normalized eight-point solver.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pairsel/descriptor_io.hpp"
#include "pairsel/geometry.hpp"
#include "pairsel/retrieval.hpp"

namespace pairsel {

struct FeatureMatch {
  std::uint32_t index_a = 0;
  std::uint32_t index_b = 0;
  float distance = 0.0f;
  bool operator==(const FeatureMatch&) const = default;
};

/// Exhaustive 2-NN both ways; a match survives when d1/d2 < ratio in both
/// directions and the two directions agree. Sorted by index_a.
/// Throws EmptySet when either side has no descriptors.
std::vector<FeatureMatch> match_descriptors(const Matrix& a, const Matrix& b, double ratio = 0.8,
                                            Exec exec = Exec::serial);
std::vector<FeatureMatch> match_descriptors(const DescriptorSet& a, const DescriptorSet& b, double ratio = 0.8,
                                            Exec exec = Exec::serial);

enum class EpipolarResidual {
  symmetric,  // mean of the point-to-epiline distances in both images
  one_sided,  // distance of the second point to the epiline of the first
};

/// Residual of one correspondence under F (x_b^T F x_a = 0), in pixels.
double epipolar_distance(const Mat3& F, const Point2& a, const Point2& b,
                         EpipolarResidual type = EpipolarResidual::symmetric);

/// Normalized eight-point estimate from >= 8 correspondences: rank 2 enforced,
/// unit Frobenius norm, largest-magnitude entry positive.
/// Throws TooFewMatches or DegenerateConfiguration.
Mat3 fundamental_eight_point(std::span<const Point2> a, std::span<const Point2> b);

struct RansacConfig {
  double max_error_px = 1.0;
  double confidence = 0.999;
  std::size_t max_iters = 10000;
  EpipolarResidual residual = EpipolarResidual::symmetric;
  std::uint64_t seed = 0;
};

struct RansacResult {
  Mat3 F{};
  std::vector<std::uint8_t> inliers;  // one flag per correspondence
  std::size_t inlier_count = 0;
  std::size_t iterations = 0;
  double mean_error = 0.0;  // over the inliers
};

/// Throws TooFewMatches for fewer than 8 correspondences and
/// DegenerateConfiguration when no non-degenerate sample can be drawn.
RansacResult estimate_fundamental_ransac(std::span<const Point2> a, std::span<const Point2> b,
                                         const RansacConfig& cfg);

struct VerifiedPair {
  std::uint64_t i = 0;
  std::uint64_t j = 0;
  std::vector<FeatureMatch> inliers;  // index_a refers to image i
  Mat3 F{};
  double mean_error = 0.0;
  std::size_t n_inlier() const { return inliers.size(); }
};

struct VerifyConfig {
  double ratio = 0.8;
  RansacConfig ransac;        // ransac.seed is replaced per pair
  std::size_t min_inliers = 15;  // retained when N_inlier > min_inliers
  std::uint64_t seed = 0;
  Exec exec = Exec::parallel;
};

struct DroppedPair {
  std::uint64_t i = 0;
  std::uint64_t j = 0;
  std::size_t matches = 0;
  std::size_t inliers = 0;
  std::string reason;
};

struct VerifyReport {
  std::vector<VerifiedPair> retained;  // sorted by (i, j)
  std::vector<DroppedPair> dropped;
};

/// Matches and verifies every candidate pair. Images are looked up by id;
/// per-pair failures are recorded in `dropped`. Each pair draws its RANSAC
/// seed from (seed, i, j).
VerifyReport verify_pairs(const MatchPairCandidateSet& candidates, std::span<const DescriptorSet> sets,
                          const VerifyConfig& cfg);

/// Verifies one pair of images; nullopt (with the reason in `why`) when the
/// pair is dropped.
std::optional<VerifiedPair> verify_pair(const DescriptorSet& a, const DescriptorSet& b,
                                        const VerifyConfig& cfg, DroppedPair* why = nullptr);

/// "UVM1" persistence.
void save_verified_pairs(std::span<const VerifiedPair> pairs, const std::filesystem::path& path);
std::vector<VerifiedPair> load_verified_pairs(const std::filesystem::path& path);

}  // namespace pairsel
